//! Aubry duality in both directions.
//!
//! If `B(x+α)⁻¹ S_E(x) B(x) = A` and `U⁻¹ A U = diag(e^{2πiρ_A}, e^{−2πiρ_A})`,
//! the first column `b` of `B·U` satisfies `S_E(x) b(x) = e^{2πiρ_A} b(x+α)`.
//! Reading its (1,1) entry in Fourier space gives an eigenvector of the
//! long-range operator
//!
//! `(L_θ u)(n) = Σ_k V̂_k u(n−k) + 2cos 2π(θ + ⟨n,α⟩) u(n)`
//!
//! at `θ = ρ_A`. A conjugation of degree `2ℓ` shifts the phase by `⟨ℓ,α⟩`
//! and the index by `ℓ`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{for_each_box, l1, torus_norm, Frequency};
use crate::error::{Error, Result};
use crate::linalg::CMat2;
use crate::operators::PotentialFourier;
use crate::reducibility::FourierConjugation;

/// Values below this are treated as zeros by [`decay_fit`].
pub const DECAY_FLOOR: f64 = 1e-15;
/// Minimum number of usable shells for [`decay_fit`].
pub const MIN_SHELLS: usize = 10;

/// A normalized eigenvector of the long-range operator on the box
/// `|n|∞ ≤ radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub dim: usize,
    pub radius: usize,
    pub energy: f64,
    pub theta: f64,
    /// Values in lexicographic box order (see [`EigenPair::index`]).
    pub values: Vec<C64>,
    pub phase_normalized: bool,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct EigenPairRecord {
    dim: usize,
    radius: usize,
    energy: f64,
    theta: f64,
    phase_normalized: bool,
    provenance: String,
    values: Vec<(f64, f64)>,
}

impl EigenPair {
    pub fn zeros(dim: usize, radius: usize) -> Self {
        Self {
            dim,
            radius,
            energy: 0.0,
            theta: 0.0,
            values: vec![C64::new(0.0, 0.0); (2 * radius + 1).pow(dim as u32)],
            phase_normalized: false,
            provenance: String::new(),
        }
    }

    /// Wrap a real vector on `|n|∞ ≤ radius`, normalizing it.
    pub fn from_real(dim: usize, radius: usize, values: &[f64], energy: f64, theta: f64) -> Result<Self> {
        let mut e = Self::zeros(dim, radius);
        if values.len() != e.values.len() {
            return Err(Error::InvalidInput("vector length does not match the box".into()));
        }
        e.values = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        e.energy = energy;
        e.theta = theta;
        e.normalize()?;
        Ok(e)
    }

    pub fn index(&self, n: &[i64]) -> Option<usize> {
        let r = self.radius as i64;
        if n.len() != self.dim || n.iter().any(|&v| v.abs() > r) {
            return None;
        }
        Some(n.iter().fold(0i64, |acc, &v| acc * (2 * r + 1) + v + r) as usize)
    }

    /// `u(n)`, zero outside the box.
    pub fn get(&self, n: &[i64]) -> C64 {
        self.index(n).map_or(C64::new(0.0, 0.0), |i| self.values[i])
    }

    pub fn sites(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::with_capacity(self.values.len());
        for_each_box(self.dim, self.radius as i64, |n| out.push(n.to_vec()));
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn normalize(&mut self) -> Result<()> {
        let s = self.norm();
        if !(s > 0.0) {
            return Err(Error::DegenerateConjugation { norm: s });
        }
        for v in self.values.iter_mut() {
            *v /= s;
        }
        Ok(())
    }

    /// Multiply by `e^{−i arg u(0)}`. When `|u(0)| ≤ 1e−8` the first site in
    /// ℓ¹-shell order (lexicographic within a shell) with `|u(n)| > 1e−8` is
    /// used instead.
    pub fn phase_normalize(&mut self) {
        let origin = vec![0; self.dim];
        let anchor = if self.get(&origin).norm() > 1e-8 {
            Some(self.get(&origin))
        } else {
            let mut sites = self.sites();
            sites.sort_by_key(|n| l1(n));
            sites.iter().map(|n| self.get(n)).find(|z| z.norm() > 1e-8)
        };
        if let Some(z) = anchor {
            let ph = C64::from_polar(1.0, -z.arg());
            for v in self.values.iter_mut() {
                *v *= ph;
            }
            self.phase_normalized = true;
        }
    }

    /// Copy translated so that the largest entry sits at the origin.
    pub fn centred_at_max(&self) -> Self {
        let sites = self.sites();
        let (imax, _) = self.values.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
        let c = &sites[imax];
        let mut out = Self { values: vec![C64::new(0.0, 0.0); self.values.len()], ..self.clone() };
        for (i, n) in sites.iter().enumerate() {
            let shifted: Vec<i64> = n.iter().zip(c).map(|(a, b)| a - b).collect();
            if let Some(j) = out.index(&shifted) {
                out.values[j] = self.values[i];
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rec = EigenPairRecord {
            dim: self.dim,
            radius: self.radius,
            energy: self.energy,
            theta: self.theta,
            phase_normalized: self.phase_normalized,
            provenance: self.provenance.clone(),
            values: self.values.iter().map(|z| (z.re, z.im)).collect(),
        };
        serde_json::to_value(rec).expect("plain record")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let rec: EigenPairRecord = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let e = Self {
            dim: rec.dim,
            radius: rec.radius,
            energy: rec.energy,
            theta: rec.theta,
            values: rec.values.into_iter().map(|(a, b)| C64::new(a, b)).collect(),
            phase_normalized: rec.phase_normalized,
            provenance: rec.provenance,
        };
        if e.values.len() != (2 * e.radius + 1).pow(e.dim as u32) {
            return Err(Error::Parse("eigenpair values do not match the box".into()));
        }
        Ok(e)
    }
}

/// Eigenvector of the long-range operator from a reducing conjugation.
///
/// `diag` is the diagonalizer of the reduced constant with
/// `diag⁻¹ A diag = diag(e^{2πiρ_A}, e^{−2πiρ_A})`. The returned phase is
/// `θ = ρ_A + ⟨ℓ,α⟩` with `ℓ = deg(B)/2`.
pub fn eigenfunction_from_conjugation(
    b: &FourierConjugation,
    diag: &CMat2,
    rho_a: f64,
    alpha: &Frequency,
    energy: f64,
    divisor_floor: f64,
) -> Result<EigenPair> {
    let d = b.dim();
    if alpha.dim() != d {
        return Err(Error::InvalidInput("conjugation and frequency dimensions differ".into()));
    }
    let zero_div = (C64::from_polar(1.0, 4.0 * PI * rho_a) - 1.0).norm();
    if zero_div < divisor_floor {
        return Err(Error::Resonance { k: vec![0; d], divisor: zero_div });
    }
    if b.degree.iter().any(|v| v % 2 != 0) {
        return Err(Error::InvalidInput("a periodic conjugation has even degree".into()));
    }
    let ell: Vec<i64> = b.degree.iter().map(|v| v / 2).collect();
    let (u11, u21) = (diag.m[0], diag.m[2]);
    let coeff = |k: &[i64]| {
        let c = b.coeff(k);
        c.m[0] * u11 + c.m[1] * u21
    };
    let l2: f64 = b.coeffs.modes().iter().map(|k| coeff(k).norm_sqr()).sum::<f64>().sqrt();
    if !(l2 >= 1e-10) {
        return Err(Error::DegenerateConjugation { norm: l2 });
    }
    let mut u = EigenPair::zeros(d, b.radius());
    for (i, n) in u.sites().iter().enumerate() {
        let k: Vec<i64> = n.iter().zip(&ell).map(|(a, l)| a + l).collect();
        u.values[i] = coeff(&k);
    }
    u.normalize()?;
    u.phase_normalize();
    u.energy = energy;
    u.theta = rho_a + alpha.pair(&ell);
    u.provenance = "eigenfunction_from_conjugation".into();
    Ok(u)
}

fn long_range_defect(u: &EigenPair, v: &PotentialFourier, alpha: &Frequency, theta: f64, n: &[i64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (k, &vk) in v.coeffs() {
        let m: Vec<i64> = n.iter().zip(k).map(|(a, b)| a - b).collect();
        acc += u.get(&m) * vk;
    }
    let diag = 2.0 * (2.0 * PI * (theta + alpha.pair(n))).cos() - u.energy;
    acc + u.get(n) * diag
}

/// `ℓ²` norm of `(L_θ − E)u` over the inner half box `|n|∞ ≤ radius/2`.
pub fn verify_long_range_eigen(u: &EigenPair, v: &PotentialFourier, alpha: &Frequency, theta: f64) -> f64 {
    let inner = (u.radius / 2) as i64;
    let mut s = 0.0;
    for_each_box(u.dim, inner, |n| s += long_range_defect(u, v, alpha, theta, n).norm_sqr());
    s.sqrt()
}

/// A Bloch wave `w_n = e^{2πinθ} ψ̄(x + nα)` with `ψ̄ = Σ_k ψ̂_k e^{2πi⟨k,x⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochWave {
    pub theta: f64,
    pub psi: EigenPair,
}

impl BlochWave {
    pub fn psi_at(&self, x: &[f64]) -> C64 {
        self.psi
            .sites()
            .iter()
            .zip(&self.psi.values)
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(k, c)| c * C64::from_polar(1.0, 2.0 * PI * k.iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>()))
            .sum()
    }

    pub fn value(&self, x: &[f64], n: i64, alpha: &Frequency) -> C64 {
        let xn: Vec<f64> = x.iter().zip(alpha.components()).map(|(a, b)| a + n as f64 * b).collect();
        C64::from_polar(1.0, 2.0 * PI * n as f64 * self.theta) * self.psi_at(&xn)
    }
}

/// Output of [`bloch_from_eigenvector`].
#[derive(Debug, Clone)]
pub struct BlochCheck {
    pub wave: BlochWave,
    /// Mean over `x_grid` of `‖(H_x − E)w‖ / ‖w‖` on the window `|n| ≤ window`.
    pub schrodinger_residual: f64,
}

/// Window half-width used by [`bloch_from_eigenvector`].
pub const BLOCH_WINDOW: i64 = 10;

/// Build the Bloch wave of `u` and test `(H_x w)_n = w_{n+1} + w_{n−1} +
/// V(x + nα) w_n = E w_n`.
pub fn bloch_from_eigenvector(u: &EigenPair, theta: f64, v: &PotentialFourier, alpha: &Frequency, x_grid: &[Vec<f64>]) -> BlochCheck {
    let wave = BlochWave { theta, psi: u.clone() };
    let mut total = 0.0;
    for x in x_grid {
        let w: Vec<C64> = (-BLOCH_WINDOW - 1..=BLOCH_WINDOW + 1).map(|n| wave.value(x, n, alpha)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 1..w.len() - 1 {
            let n = j as i64 - BLOCH_WINDOW - 1;
            let xn: Vec<f64> = x.iter().zip(alpha.components()).map(|(a, b)| a + n as f64 * b).collect();
            let r = w[j + 1] + w[j - 1] + w[j] * (v.eval(&xn) - u.energy);
            num += r.norm_sqr();
            den += w[j].norm_sqr();
        }
        total += if den > 0.0 { (num / den).sqrt() } else { f64::INFINITY };
    }
    BlochCheck { wave, schrodinger_residual: if x_grid.is_empty() { 0.0 } else { total / x_grid.len() as f64 } }
}

/// Exponential fit of the shell maxima `max_{|n|₁ = s} |u(n)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay rate in nats per site.
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub shells_used: usize,
    /// Positive rate with a good fit.
    pub localized: bool,
}

/// Fit over ℓ¹ shells `s ≤ inner_fraction · radius`, skipping shells whose
/// maximum is below `floor`.
pub fn decay_fit_with_floor(u: &EigenPair, inner_fraction: f64, floor: f64) -> Result<DecayFit> {
    let smax = (inner_fraction * u.radius as f64).floor() as i64;
    let mut shell = vec![0.0f64; smax as usize + 1];
    for (n, z) in u.sites().iter().zip(&u.values) {
        let s = l1(n);
        if s <= smax {
            shell[s as usize] = shell[s as usize].max(z.norm());
        }
    }
    let pts: Vec<(f64, f64)> = shell.iter().enumerate().filter(|(_, &m)| m > floor).map(|(s, &m)| (s as f64, m.ln())).collect();
    if pts.len() < MIN_SHELLS {
        return Err(Error::TooFewShells { found: pts.len(), required: MIN_SHELLS });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let rate = -slope;
    Ok(DecayFit { rate, prefactor: (my - slope * mx).exp(), r2, shells_used: pts.len(), localized: rate > 0.05 && r2 > 0.9 })
}

/// [`decay_fit_with_floor`] at [`DECAY_FLOOR`].
pub fn decay_fit(u: &EigenPair, inner_fraction: f64) -> Result<DecayFit> {
    decay_fit_with_floor(u, inner_fraction, DECAY_FLOOR)
}

/// Parameters of the two-bump bound `|u(n)| ≤ C(e^{−γ̃|n|} + C_ℓ e^{−γ̃|n+ℓ|})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodParams {
    pub gamma_tilde: f64,
    pub ell: Vec<i64>,
    pub c: f64,
    pub c_ell: f64,
}

impl GoodParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_tilde > 0.0 && self.c > 0.0 && self.c_ell > 0.0 && self.c_ell <= 1.0) {
            return Err(Error::InvalidInput("need gamma_tilde > 0, C > 0, C_ell in (0,1]".into()));
        }
        Ok(())
    }

    pub fn bound(&self, n: &[i64]) -> f64 {
        let shifted: Vec<i64> = n.iter().zip(&self.ell).map(|(a, b)| a + b).collect();
        self.c * ((-self.gamma_tilde * l1(n) as f64).exp() + self.c_ell * (-self.gamma_tilde * l1(&shifted) as f64).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodCheck {
    pub holds: bool,
    pub worst_n: Vec<i64>,
    /// `min_n bound(n)/|u(n)|` over sites with `u(n) ≠ 0`.
    pub slack: f64,
}

pub fn good_check(u: &EigenPair, params: &GoodParams) -> GoodCheck {
    let mut worst_n = vec![0; u.dim];
    let mut slack = f64::INFINITY;
    for (n, z) in u.sites().iter().zip(&u.values) {
        let a = z.norm();
        if a == 0.0 {
            continue;
        }
        let s = params.bound(n) / a;
        if s < slack {
            slack = s;
            worst_n = n.clone();
        }
    }
    GoodCheck { holds: slack >= 1.0, worst_n, slack }
}

/// Distance between two eigenvectors on a common box, after aligning their
/// phases at the largest entry of `a`.
pub fn aligned_distance(a: &EigenPair, b: &EigenPair) -> f64 {
    let sites = a.sites();
    let (imax, _) = a.values.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let za = a.values[imax];
    let zb = b.get(&sites[imax]);
    let ph = if zb.norm() > 0.0 { za / zb * (zb.norm() / za.norm()) } else { C64::new(1.0, 0.0) };
    let mut s = 0.0;
    for (n, z) in sites.iter().zip(&a.values) {
        s += (z - b.get(n) * ph).norm_sqr();
    }
    for (n, z) in b.sites().iter().zip(&b.values) {
        if a.index(n).is_none() {
            s += z.norm_sqr();
        }
    }
    s.sqrt()
}

/// `‖2ρ_A‖_𝕋`, the zero-mode divisor guarded by
/// [`eigenfunction_from_conjugation`].
pub fn zero_mode_gap(rho_a: f64) -> f64 {
    torus_norm(2.0 * rho_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::Cocycle;
    use crate::linalg::Sl2Matrix;
    use crate::operators::{build_truncation, eigensolve, OperatorKind};
    use crate::reducibility::{diagonalize_sl2, elliptic_frame, kam_reduce, KamConfig};

    fn amo_dual_pair(t: f64) -> (Cocycle, crate::reducibility::KamReduction) {
        let e = 2.0 * (2.0 * PI * t).cos();
        let c = Cocycle::schrodinger(Frequency::golden(), PotentialFourier::cosine(0.05, 1), e);
        let r = kam_reduce(&c, Sl2Matrix::new(e, -1.0, 1.0, 0.0), None, &KamConfig::for_dim(1)).unwrap();
        (c, r)
    }

    fn pipeline(t: f64, rho_sign: f64) -> (EigenPair, crate::reducibility::KamReduction) {
        let (c, r) = amo_dual_pair(t);
        let rho_a = rho_sign * r.rho;
        let u = diagonalize_sl2(&r.constant, rho_a, 1e-3, 2.0).unwrap();
        let ep = eigenfunction_from_conjugation(&r.conjugation, &u, rho_a, &c.alpha, 2.0 * (2.0 * PI * t).cos(), 1e-8).unwrap();
        (ep, r)
    }

    #[test]
    fn free_pipeline_gives_delta() {
        let t = 0.2;
        let a = Sl2Matrix::new(2.0 * (2.0 * PI * t).cos(), -1.0, 1.0, 0.0);
        let c = Cocycle::constant(Frequency::golden(), a);
        let r = kam_reduce(&c, a, None, &KamConfig::for_dim(1)).unwrap();
        let u = diagonalize_sl2(&r.constant, t, 0.01, 2.0).unwrap();
        let ep = eigenfunction_from_conjugation(&r.conjugation, &u, t, &c.alpha, 2.0 * (2.0 * PI * t).cos(), 1e-8).unwrap();
        assert!((ep.get(&[0]).norm() - 1.0).abs() < 1e-14);
        assert!(ep.get(&[0]).im.abs() < 1e-14 && ep.get(&[0]).re > 0.0);
        let res = verify_long_range_eigen(&ep, &PotentialFourier::zero(1), &c.alpha, ep.theta);
        assert!(res < 1e-14);
    }

    #[test]
    fn amo_dual_eigenfunction_is_normalized_and_solves_dual_equation() {
        let (c, r) = amo_dual_pair(0.37);
        let v = PotentialFourier::cosine(0.05, 1);
        for sign in [1.0, -1.0] {
            let rho_a = sign * r.rho;
            let u = diagonalize_sl2(&r.constant, rho_a, 1e-3, 2.0).unwrap();
            let e = 2.0 * (2.0 * PI * 0.37f64).cos();
            let ep = eigenfunction_from_conjugation(&r.conjugation, &u, rho_a, &c.alpha, e, 1e-8).unwrap();
            assert!((ep.norm() - 1.0).abs() < 1e-10);
            assert!(ep.get(&[0]).arg().abs() < 1e-12);
            let res = verify_long_range_eigen(&ep, &v, &c.alpha, ep.theta);
            assert!(res <= 1e-8, "residual {res}");
            // Cross-check against the truncated operator at the same phase.
            let op = build_truncation(&v, &c.alpha, OperatorKind::Longrange { theta: ep.theta }, 40).unwrap();
            let sd = eigensolve(&op).unwrap();
            let nearest = sd.eigenvalues.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-10, "{nearest}");
        }
    }

    #[test]
    fn random_vector_has_order_one_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..41).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ep = EigenPair::from_real(1, 20, &vals, 0.3, 0.2).unwrap();
        let res = verify_long_range_eigen(&ep, &PotentialFourier::cosine(0.05, 1), &Frequency::golden(), 0.2);
        assert!(res > 0.1, "{res}");
    }

    #[test]
    fn twisted_conjugation_gives_same_eigenfunction() {
        let (c, r) = amo_dual_pair(0.41);
        let (cm, _) = elliptic_frame(&r.constant).unwrap();
        let twist = cm.mul(&Sl2Matrix::rotation(0.137)).mul(&cm.inverse());
        let mut b2 = r.conjugation.clone();
        for m in b2.coeffs.data.iter_mut() {
            *m = m.mul(&twist.to_complex());
        }
        let rho_a = r.rho;
        let u = diagonalize_sl2(&r.constant, rho_a, 1e-3, 2.0).unwrap();
        let e1 = eigenfunction_from_conjugation(&r.conjugation, &u, rho_a, &c.alpha, 0.0, 1e-8).unwrap();
        let e2 = eigenfunction_from_conjugation(&b2, &u, rho_a, &c.alpha, 0.0, 1e-8).unwrap();
        for (a, b) in e1.values.iter().zip(&e2.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn degree_shift_moves_index_and_phase() {
        // B = R_{x} (degree 2, ℓ = 1) conjugates R_σ to R_{σ−α}.
        let alpha = Frequency::golden();
        let sigma = 0.3;
        let mut coeffs = crate::fourier::CoeffBox::zeros(1, 1);
        let h = C64::new(0.5, 0.0);
        let ih = C64::new(0.0, 0.5);
        // R_x = [[cos, −sin], [sin, cos]] with cos = (e+ē)/2, sin = (e−ē)/2i.
        coeffs.set(&[1], CMat2::new(h, ih, -ih, h));
        coeffs.set(&[-1], CMat2::new(h, -ih, ih, h));
        let b = FourierConjugation { coeffs, degree: vec![2], strip: 0.0 };
        let a = Sl2Matrix::rotation(sigma - alpha.components()[0]);
        let rho_a = (sigma - alpha.components()[0]).rem_euclid(1.0);
        let u = diagonalize_sl2(&a, rho_a, 1e-3, 2.0).unwrap();
        let ep = eigenfunction_from_conjugation(&b, &u, rho_a, &alpha, 2.0 * (2.0 * PI * sigma).cos(), 1e-8).unwrap();
        assert!((ep.theta - rho_a - alpha.components()[0]).abs() < 1e-15);
        assert!((ep.get(&[0]).norm() - 1.0).abs() < 1e-14, "{:?}", ep.values);
        assert!(verify_long_range_eigen(&ep, &PotentialFourier::zero(1), &alpha, ep.theta) < 1e-14);
    }

    #[test]
    fn degenerate_and_resonant_inputs() {
        let b = FourierConjugation { coeffs: crate::fourier::CoeffBox::zeros(1, 2), degree: vec![0], strip: 0.0 };
        let u = diagonalize_sl2(&Sl2Matrix::rotation(0.2), 0.2, 0.01, 2.0).unwrap();
        assert!(matches!(
            eigenfunction_from_conjugation(&b, &u, 0.2, &Frequency::golden(), 0.0, 1e-8),
            Err(Error::DegenerateConjugation { .. })
        ));
        let id = FourierConjugation::identity(1);
        assert!(matches!(
            eigenfunction_from_conjugation(&id, &u, 0.5, &Frequency::golden(), 0.0, 1e-8),
            Err(Error::Resonance { .. })
        ));
    }

    #[test]
    fn bloch_round_trip() {
        let mut delta = EigenPair::zeros(1, 3);
        delta.values[3] = C64::new(1.0, 0.0);
        delta.energy = 2.0 * (2.0 * PI * 0.2).cos();
        let xs: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.25]).collect();
        let chk = bloch_from_eigenvector(&delta, 0.2, &PotentialFourier::zero(1), &Frequency::golden(), &xs);
        assert!(chk.schrodinger_residual < 1e-14);
        assert!((chk.wave.psi_at(&[0.3]) - 1.0).norm() < 1e-15);
        let mut off = delta.clone();
        off.energy += 0.5;
        let chk = bloch_from_eigenvector(&off, 0.2, &PotentialFourier::zero(1), &Frequency::golden(), &xs);
        assert!((chk.schrodinger_residual - 0.5).abs() < 1e-12);

        let (ep, _) = pipeline(0.37, 1.0);
        let v = PotentialFourier::cosine(0.05, 1);
        let alpha = Frequency::golden();
        let chk = bloch_from_eigenvector(&ep, ep.theta, &v, &alpha, &xs);
        assert!(chk.schrodinger_residual <= 1e-6, "{}", chk.schrodinger_residual);

        // Dropping the tail beyond N/2 perturbs the residual by at most the
        // dropped mass times the operator norm.
        let mut cut = ep.clone();
        let half = (cut.radius / 2) as i64;
        let mut dropped = 0.0;
        for (n, z) in ep.sites().iter().zip(cut.values.iter_mut()) {
            if n[0].abs() > half / 4 {
                dropped += z.norm_sqr();
                *z = C64::new(0.0, 0.0);
            }
        }
        let chk2 = bloch_from_eigenvector(&cut, ep.theta, &v, &alpha, &xs);
        let op_norm = 2.0 + 2.0 * v.l1_norm() + ep.energy.abs();
        let psi_min = xs.iter().map(|x| chk2.wave.psi_at(x).norm()).fold(f64::INFINITY, f64::min);
        assert!(chk2.schrodinger_residual <= op_norm * dropped.sqrt() * (2 * ep.radius + 1) as f64 / psi_min.max(1e-3) + 1e-6);
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let vals: Vec<f64> = (-30i64..=30).map(|n| (-0.5 * n.abs() as f64).exp()).collect();
        let ep = EigenPair::from_real(1, 30, &vals, 0.0, 0.0).unwrap();
        let fit = decay_fit(&ep, 1.0).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-3);
        assert!(fit.r2 >= 0.999);
        assert!(fit.localized);
        let short = EigenPair::from_real(1, 4, &vals[26..35], 0.0, 0.0).unwrap();
        assert!(matches!(decay_fit(&short, 1.0), Err(Error::TooFewShells { .. })));
    }

    #[test]
    fn decay_fit_amo_localized_vector() {
        // λ = 2: L = ln 2 on the spectrum.
        let v = PotentialFourier::cosine(2.0, 1);
        let op = build_truncation(&v, &Frequency::golden(), OperatorKind::Schrodinger1d { x: vec![0.1234] }, 150).unwrap();
        let sd = eigensolve(&op).unwrap();
        let mid = sd.eigenvalues.len() / 2;
        let mut rates = Vec::new();
        for j in mid - 5..mid + 5 {
            let vec: Vec<f64> = sd.eigen.vector(j).to_vec();
            let ep = EigenPair::from_real(1, 150, &vec, sd.eigenvalues[j], 0.0).unwrap().centred_at_max();
            if let Ok(fit) = decay_fit(&ep, 0.4) {
                rates.push(fit.rate);
            }
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!((mean - 2f64.ln()).abs() < 0.05, "{rates:?}");
    }

    #[test]
    fn decay_fit_flags_delocalized_vector() {
        let v = PotentialFourier::cosine(0.5, 1);
        let op = build_truncation(&v, &Frequency::golden(), OperatorKind::Schrodinger1d { x: vec![0.1234] }, 100).unwrap();
        let sd = eigensolve(&op).unwrap();
        let j = sd.eigenvalues.len() / 2;
        let ep = EigenPair::from_real(1, 100, sd.eigen.vector(j), sd.eigenvalues[j], 0.0).unwrap();
        let fit = decay_fit(&ep, 0.8).unwrap();
        assert!(!fit.localized, "{fit:?}");
        assert!(fit.rate.abs() < 0.05);
    }

    #[test]
    fn good_check_two_bumps() {
        let p = GoodParams { gamma_tilde: 0.4, ell: vec![-12], c: 1.0, c_ell: 0.5 };
        p.validate().unwrap();
        let vals: Vec<f64> = (-30i64..=30).map(|n| p.bound(&[n])).collect();
        // Normalization divides by a norm ≥ 1, so the vector stays under the bound.
        let ep = EigenPair::from_real(1, 30, &vals, 0.0, 0.0).unwrap();
        let chk = good_check(&ep, &p);
        assert!(chk.holds && chk.slack >= 1.0);
        let doubled = GoodParams { gamma_tilde: 0.8, ..p.clone() };
        let chk = good_check(&ep, &doubled);
        assert!(!chk.holds);
        // The doubled rate is violated away from both bump centres.
        assert!(chk.worst_n[0].abs() >= 12, "{:?}", chk.worst_n);
    }

    #[test]
    fn pipeline_eigenfunction_is_good() {
        let (ep, _) = pipeline(0.37, 1.0);
        let fit = decay_fit(&ep, 0.5).unwrap();
        let p = GoodParams { gamma_tilde: 0.9 * fit.rate, ell: vec![0], c: 10.0 * fit.prefactor, c_ell: 1.0 };
        let chk = good_check(&ep, &p);
        assert!(chk.holds, "{fit:?} {chk:?} {:?}", ep.sites().iter().zip(&ep.values).map(|(n, z)| (n[0], z.norm())).collect::<Vec<_>>());
    }

    #[test]
    fn json_round_trip() {
        let (ep, _) = pipeline(0.41, 1.0);
        let back = EigenPair::from_json(&ep.to_json()).unwrap();
        assert_eq!(back, ep);
    }
}
