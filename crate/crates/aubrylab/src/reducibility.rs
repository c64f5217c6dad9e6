//! Numerical KAM reduction of near-constant quasi-periodic cocycles.
//!
//! Fields are carried as samples on the real torus and on the shifted tori
//! `x + i·s`, `s ∈ {±h}^d`, so that coefficients far below the rounding
//! floor stay resolved. One Newton step solves the linearized conjugation
//! equation in the eigenframe of the constant part, then conjugates the
//! sampled field by `e^{Y}` exactly. The constant part only moves through
//! resonant (unsolvable) diagonal averages.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arithmetic::{check_phase_dc, l1, torus_norm, DiophantinePhaseParams, Frequency};
use crate::cocycle::{degree, Cocycle, MatrixField};
use crate::error::{Error, Result};
use crate::fourier::{extract, strip_shifts, CoeffBox, Grid};
use crate::linalg::{cayley_m, CMat2, Sl2Matrix};

const CZ: C64 = C64 { re: 0.0, im: 0.0 };

/// Residuals below this are treated as rounding noise when estimating the
/// convergence order.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

/// Settings for [`kam_reduce`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KamConfig {
    /// Cutoff `K₀` used at the first step.
    pub fourier_cutoff: usize,
    /// Cap on the growing cutoff.
    pub max_cutoff: usize,
    pub divisor_floor: f64,
    pub tol_residual: f64,
    pub max_iters: usize,
    /// `h₀ > h₁ > … > h̃`. `h₀` is the sampling strip; `h̃` is the strip of the
    /// decay certificate.
    pub strip_schedule: Vec<f64>,
    /// Grid points per axis.
    pub grid: usize,
    /// Box radius `K_B` of the stored conjugation.
    pub coeff_radius: usize,
    /// Largest admissible initial residual `sup‖A(x) − A₀‖`.
    pub max_perturbation: f64,
}

impl KamConfig {
    pub fn for_dim(d: usize) -> Self {
        let (fourier_cutoff, max_cutoff, grid, coeff_radius) = match d {
            1 => (16, 32, 256, 30),
            2 => (20, 30, 128, 30),
            _ => (4, 6, 16, 6),
        };
        // Strip lines in every imaginary direction multiply the sup of the
        // perturbation by about cosh(2 pi h) per axis, so the strip narrows
        // with the dimension.
        let strip_schedule = if d == 1 { vec![0.3, 0.28, 0.26, 0.25] } else { vec![0.15, 0.14, 0.13, 0.125] };
        Self {
            fourier_cutoff,
            max_cutoff,
            divisor_floor: 1e-8,
            tol_residual: 1e-12,
            max_iters: 20,
            strip_schedule,
            grid,
            coeff_radius,
            max_perturbation: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.divisor_floor > 0.0) {
            return bad("divisor_floor must be positive");
        }
        if !(self.tol_residual > 0.0) {
            return bad("tol_residual must be positive");
        }
        if self.strip_schedule.is_empty() || self.strip_schedule.iter().any(|&h| !(h > 0.0)) {
            return bad("strip_schedule must be non-empty and positive");
        }
        if self.strip_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("strip_schedule must be strictly decreasing");
        }
        if self.fourier_cutoff == 0 || self.max_cutoff < self.fourier_cutoff {
            return bad("need 0 < fourier_cutoff <= max_cutoff");
        }
        if 2 * self.max_cutoff.max(self.coeff_radius) >= self.grid {
            return bad("grid too coarse for the cutoff or coefficient radius");
        }
        Ok(())
    }

    fn cutoff_at(&self, j: usize) -> usize {
        let h0 = self.strip_schedule[0];
        let hj = self.strip_schedule[j.min(self.strip_schedule.len() - 1)];
        ((self.fourier_cutoff as f64 * h0 / hj).ceil() as usize).min(self.max_cutoff)
    }

    pub fn final_strip(&self) -> f64 {
        *self.strip_schedule.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceAction {
    None,
    Aborted,
    ModeSkipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    /// `(k, |divisor|)` for every skipped mode.
    pub resonant_modes: Vec<(Vec<i64>, f64)>,
    pub action: ResonanceAction,
}

impl ResonanceReport {
    fn none() -> Self {
        Self { resonant_modes: Vec::new(), action: ResonanceAction::None }
    }

    fn merge(&mut self, other: &ResonanceReport) {
        for m in &other.resonant_modes {
            if !self.resonant_modes.iter().any(|(k, _)| *k == m.0) {
                self.resonant_modes.push(m.clone());
            }
        }
        if other.action != ResonanceAction::None && self.action == ResonanceAction::None {
            self.action = other.action;
        }
    }
}

/// Elliptic normal form: `A = C R_σ C⁻¹` with `C` real unimodular upper
/// triangular and `σ ∈ (0,1)`.
pub fn elliptic_frame(a: &Sl2Matrix) -> Result<(Sl2Matrix, f64)> {
    let half = a.trace() / 2.0;
    if !(half.abs() < 1.0) {
        return Err(Error::NotElliptic { trace: a.trace() });
    }
    let rho0 = half.acos() / (2.0 * PI);
    let sigma = if a.a21 > 0.0 { rho0 } else { 1.0 - rho0 };
    let s = (2.0 * PI * sigma).sin();
    let k11 = (a.a11 - half) / s;
    let k21 = a.a21 / s;
    let p = 1.0 / k21.sqrt();
    Ok((Sl2Matrix::new(p, p * k11, 0.0, p * k21), sigma))
}

/// `P` with `P⁻¹ A P = diag(e^{−2πiσ}, e^{2πiσ})`.
fn eigen_frame(a: &Sl2Matrix) -> Result<(CMat2, f64)> {
    let (c, sigma) = elliptic_frame(a)?;
    Ok((c.to_complex().mul(&cayley_m().inverse()), sigma))
}

/// Output of [`cohomological_solve`].
#[derive(Debug, Clone)]
pub struct CohomologicalSolution {
    /// Real sl(2,ℝ)-valued solution.
    pub y: CoeffBox,
    /// Unsolved mean diagonal part (in the eigenframe), mapped back to
    /// sl(2,ℝ); it renormalizes the constant.
    pub drift: Sl2Matrix,
    /// Eigenframe `P` of the constant.
    pub frame: CMat2,
    /// `f` with the skipped modes and the drift removed.
    pub solved: CoeffBox,
    pub report: ResonanceReport,
}

/// Solve `A₀⁻¹ Y(x+α) A₀ − Y(x) = f(x)` on `|k|∞ ≤ cutoff`.
///
/// In the eigenframe `Z = P⁻¹ Y P`, `G = P⁻¹ f P` with
/// `P⁻¹A₀P = diag(e^{−2πiσ}, e^{2πiσ})`, the equation decouples:
/// diagonal entries divide by `e^{2πi⟨k,α⟩} − 1`, the (1,2) entry by
/// `e^{2πi(⟨k,α⟩+2σ)} − 1` and the (2,1) entry by `e^{2πi(⟨k,α⟩−2σ)} − 1`.
pub fn cohomological_solve(
    a0: &Sl2Matrix,
    f: &CoeffBox,
    alpha: &Frequency,
    cutoff: usize,
    divisor_floor: f64,
) -> Result<CohomologicalSolution> {
    if f.d != alpha.dim() {
        return Err(Error::InvalidInput("field and frequency dimensions differ".into()));
    }
    let (p, sigma) = eigen_frame(a0)?;
    let p_inv = p.inverse();
    let radius = cutoff.min(f.radius);
    let mut y = CoeffBox::zeros(f.d, radius);
    let mut solved = CoeffBox::zeros(f.d, radius);
    let mut report = ResonanceReport::none();
    let mut drift = CMat2::ZERO;
    let unit = |t: f64| C64::from_polar(1.0, 2.0 * PI * t);
    for k in y.modes() {
        let fk = f.get(&k);
        if fk == CMat2::ZERO {
            continue;
        }
        let g = p_inv.mul(&fk).mul(&p);
        let phase = alpha.pair(&k);
        let divs = [unit(phase) - 1.0, unit(phase + 2.0 * sigma) - 1.0, unit(phase - 2.0 * sigma) - 1.0, unit(phase) - 1.0];
        let zero_mode = k.iter().all(|&v| v == 0);
        let mut z = [CZ; 4];
        let mut gs = g.m;
        for q in 0..4 {
            if g.m[q] == CZ {
                continue;
            }
            let diagonal = q == 0 || q == 3;
            if zero_mode && diagonal {
                gs[q] = CZ;
                continue;
            }
            let dm = divs[q].norm();
            if dm < divisor_floor {
                if zero_mode {
                    return Err(Error::Resonance { k: k.clone(), divisor: dm });
                }
                if !report.resonant_modes.iter().any(|(kk, _)| *kk == k) {
                    report.resonant_modes.push((k.clone(), dm));
                }
                report.action = ResonanceAction::ModeSkipped;
                gs[q] = CZ;
                continue;
            }
            z[q] = g.m[q] / divs[q];
        }
        if zero_mode {
            drift = p.mul(&CMat2::diag(g.m[0], g.m[3])).mul(&p_inv);
        }
        y.set(&k, p.mul(&CMat2 { m: z }).mul(&p_inv));
        solved.set(&k, p.mul(&CMat2 { m: gs }).mul(&p_inv));
    }
    y.make_real();
    Ok(CohomologicalSolution { y, drift: drift.real_part(), frame: p, solved, report })
}

/// A conjugation `B: 𝕋^d → SL(2,ℝ)` stored by its Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierConjugation {
    /// Complex coefficients `c_k` with `c_{−k} = conj(c_k)`.
    pub coeffs: CoeffBox,
    pub degree: Vec<i64>,
    /// Strip `h̃` of the decay certificate.
    pub strip: f64,
}

impl FourierConjugation {
    pub fn identity(d: usize) -> Self {
        let mut coeffs = CoeffBox::zeros(d, 0);
        coeffs.set(&vec![0; d], CMat2::IDENTITY);
        Self { coeffs, degree: vec![0; d], strip: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.d
    }

    pub fn radius(&self) -> usize {
        self.coeffs.radius
    }

    pub fn coeff(&self, k: &[i64]) -> CMat2 {
        self.coeffs.get(k)
    }

    /// `sup_k max|B̂_k| e^{2πh|k|₁}`.
    pub fn decay_certificate(&self, h: f64) -> f64 {
        self.coeffs
            .modes()
            .iter()
            .zip(&self.coeffs.data)
            .map(|(k, c)| c.max_abs() * (2.0 * PI * h * l1(k) as f64).exp())
            .fold(0.0, f64::max)
    }

    /// Values `B(x + shift)` on a grid.
    pub fn on_grid(&self, grid: &Grid, shift: &[f64]) -> Vec<Sl2Matrix> {
        self.coeffs.synthesize(grid, shift, &vec![0.0; self.dim()]).iter().map(CMat2::real_part).collect()
    }

    /// `sup |det B − 1|` on a grid with at least `res` points per axis.
    pub fn det_defect(&self, mut res: usize) -> f64 {
        while res <= 2 * self.radius() {
            res *= 2;
        }
        let grid = Grid::new(self.dim(), res);
        self.on_grid(&grid, &vec![0.0; self.dim()]).iter().map(|m| (m.det() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Real cosine/sine coefficients: `B(x) = M₀ + Σ_{k≻0} M_k cos 2π⟨k,x⟩
    /// + M_{−k} sin 2π⟨k,x⟩`, where `k ≻ 0` means the first non-zero
    /// component is positive.
    pub fn real_coeffs(&self) -> Vec<(Vec<i64>, Sl2Matrix)> {
        let mut out = Vec::new();
        for k in self.coeffs.modes() {
            let c = self.coeffs.get(&k);
            match k.iter().find(|&&v| v != 0) {
                None => out.push((k, c.real_part())),
                Some(&v) if v > 0 => {
                    let re = c.real_part().scale(2.0);
                    let im = CMat2 { m: c.m.map(|z| C64::new(z.im, 0.0)) }.real_part().scale(-2.0);
                    let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                    out.push((k, re));
                    out.push((neg, im));
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let coeffs: Vec<Value> = self
            .real_coeffs()
            .into_iter()
            .filter(|(_, m)| [m.a11, m.a12, m.a21, m.a22].iter().any(|v| v.abs() >= 1e-16))
            .map(|(k, m)| {
                let mut row: Vec<Value> = k.iter().map(|&v| json!(v)).collect();
                row.extend([m.a11, m.a12, m.a21, m.a22].iter().map(|&v| json!(v)));
                Value::Array(row)
            })
            .collect();
        json!({ "degree": self.degree, "strip": self.strip, "coeffs": coeffs })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let err = |m: &str| Error::Parse(format!("conjugation JSON: {m}"));
        let degree: Vec<i64> = serde_json::from_value(v.get("degree").cloned().ok_or_else(|| err("missing degree"))?)
            .map_err(|e| err(&e.to_string()))?;
        let strip = v.get("strip").and_then(Value::as_f64).ok_or_else(|| err("missing strip"))?;
        let rows = v.get("coeffs").and_then(Value::as_array).ok_or_else(|| err("missing coeffs"))?;
        let d = degree.len();
        if d == 0 {
            return Err(err("empty degree"));
        }
        let mut parsed = Vec::with_capacity(rows.len());
        let mut radius = 0usize;
        for row in rows {
            let row = row.as_array().ok_or_else(|| err("row is not an array"))?;
            if row.len() != d + 4 {
                return Err(err("row has wrong length"));
            }
            let k: Vec<i64> = row[..d].iter().map(|x| x.as_i64().ok_or_else(|| err("bad mode"))).collect::<Result<_>>()?;
            let m: Vec<f64> = row[d..].iter().map(|x| x.as_f64().ok_or_else(|| err("bad entry"))).collect::<Result<_>>()?;
            radius = radius.max(k.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0));
            parsed.push((k, Sl2Matrix::new(m[0], m[1], m[2], m[3])));
        }
        let mut coeffs = CoeffBox::zeros(d, radius);
        for (k, m) in parsed {
            let mc = m.to_complex();
            match k.iter().find(|&&v| v != 0) {
                None => coeffs.set(&k, mc),
                Some(&v) => {
                    // cos θ = (e^{iθ} + e^{−iθ})/2 and sin θ = (e^{iθ} − e^{−iθ})/2i.
                    let pos: Vec<i64> = if v > 0 { k.clone() } else { k.iter().map(|x| -x).collect() };
                    let neg: Vec<i64> = pos.iter().map(|x| -x).collect();
                    let factor = if v > 0 { C64::new(0.5, 0.0) } else { C64::new(0.0, -0.5) };
                    let c = coeffs.get(&pos).add(&mc.scale(factor));
                    coeffs.set(&pos, c);
                    coeffs.set(&neg, c.conj());
                }
            }
        }
        Ok(Self { coeffs, degree, strip })
    }
}

impl MatrixField for FourierConjugation {
    fn dim(&self) -> usize {
        self.coeffs.d
    }
    fn eval(&self, x: &[f64]) -> Sl2Matrix {
        let z: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.coeffs.eval(&z).real_part()
    }
    fn eval_complex(&self, z: &[C64]) -> Option<CMat2> {
        Some(self.coeffs.eval(z))
    }
}

/// Rotation-number target checked before reduction starts.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoTarget {
    pub rho: f64,
    pub params: DiophantinePhaseParams,
}

/// Output of [`kam_reduce`].
#[derive(Debug, Clone)]
pub struct KamReduction {
    pub conjugation: FourierConjugation,
    pub constant: Sl2Matrix,
    /// `σ` with `constant = C R_σ C⁻¹`.
    pub rho: f64,
    pub residual: f64,
    /// Largest residual on the shifted sampling tori.
    pub strip_residual: f64,
    pub iterations: usize,
    /// `r₀, r₁, …` with `r_j = sup_x ‖A_j(x) − A₀^{(j)}‖`.
    pub history: Vec<f64>,
    pub convergence_order: Option<f64>,
    pub resonance: ResonanceReport,
}

impl KamReduction {
    /// Convergence order at least 1.8, or converged before enough
    /// iterates above the rounding floor were available to measure it.
    pub fn quadratic(&self) -> bool {
        self.convergence_order.map_or(self.iterations <= 2, |s| s >= 1.8)
    }
}

/// Least-squares slope of `ln r_{j+1}` against `ln r_j` over consecutive
/// pairs with `r_{j+1}` above `floor`. Needs at least two pairs.
pub fn convergence_order(history: &[f64], floor: f64) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = history
        .windows(2)
        .filter(|w| w[1] > floor && w[0] > 0.0)
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone)]
struct Line {
    imag: Vec<f64>,
    a: Vec<CMat2>,
    b: Vec<CMat2>,
}

/// Iterations without a new best residual before giving up.
const STALL_STEPS: usize = 6;

/// Smallest damping factor tried for a Newton step.
const MIN_STEP: f64 = 1.0 / 64.0;

fn scaled_box(y: &CoeffBox, s: f64) -> CoeffBox {
    let mut out = y.clone();
    for m in out.data.iter_mut() {
        *m = m.scale(C64::new(s, 0.0));
    }
    out
}

fn sup_dev(values: &[CMat2], c: &CMat2) -> f64 {
    values.iter().map(|m| m.sub(c).norm()).fold(0.0, f64::max)
}

/// Reduce `c` to a constant near `a0` by Newton iteration.
pub fn kam_reduce(c: &Cocycle, a0: Sl2Matrix, target: Option<&RhoTarget>, config: &KamConfig) -> Result<KamReduction> {
    config.validate()?;
    let d = c.dim();
    let alpha = c.alpha.components().to_vec();
    if let Some(t) = target {
        let rep = check_phase_dc(t.rho, &c.alpha, &t.params);
        if !rep.holds {
            let divisor = torus_norm(2.0 * t.rho - c.alpha.pair(&rep.worst));
            return Err(Error::Resonance { k: rep.worst, divisor });
        }
    }
    let grid = Grid::new(d, config.grid);
    let n = grid.len();
    let points: Vec<Vec<f64>> = (0..n).map(|j| grid.point(j)).collect();
    let zero = vec![0.0; d];
    let h_s = config.strip_schedule[0];
    let analytic = c.field.eval_complex(&vec![C64::new(0.0, h_s); d]).is_some();
    let h = if analytic { h_s } else { 0.0 };

    let mut imags = vec![zero.clone()];
    if analytic {
        imags.extend(strip_shifts(d, h));
    }
    let mut lines: Vec<Line> = imags
        .into_iter()
        .map(|imag| {
            let a = points
                .iter()
                .map(|x| {
                    if imag.iter().all(|&v| v == 0.0) {
                        c.field.eval(x).to_complex()
                    } else {
                        let z: Vec<C64> = x.iter().zip(&imag).map(|(&r, &i)| C64::new(r, i)).collect();
                        c.field.eval_complex(&z).expect("checked analytic")
                    }
                })
                .collect();
            Line { imag, a, b: vec![CMat2::IDENTITY; n] }
        })
        .collect();

    let mut constant = a0;
    let mut history = vec![sup_dev(&lines[0].a, &constant.to_complex())];
    if !history[0].is_finite() || history[0] > config.max_perturbation {
        return Err(Error::PerturbationTooLarge { delta: history[0], threshold: config.max_perturbation });
    }
    let mut resonance = ResonanceReport::none();
    let mut iterations = 0;
    while *history.last().unwrap() > config.tol_residual {
        if iterations == config.max_iters {
            return Err(Error::NoConvergence { history });
        }
        let cutoff = config.cutoff_at(iterations);
        let a0_inv = constant.inverse().to_complex();
        let f_samples: Vec<Vec<CMat2>> = lines
            .iter()
            .skip(if analytic { 1 } else { 0 })
            .map(|line| line.a.iter().map(|m| a0_inv.mul(m).log_sl2()).collect())
            .collect();
        let f = extract(&grid, &f_samples, h, cutoff);
        let sol = cohomological_solve(&constant, &f, &c.alpha, cutoff, config.divisor_floor)?;
        resonance.merge(&sol.report);
        // Newton step, halved while it fails to lower the residual.
        let prev = *history.last().unwrap();
        let mut scale = 1.0;
        let (next_lines, next_constant, r) = loop {
            let y = if scale == 1.0 { sol.y.clone() } else { scaled_box(&sol.y, scale) };
            let mut trial = lines.clone();
            for line in trial.iter_mut() {
                let y_here = y.synthesize(&grid, &zero, &line.imag);
                let y_next = y.synthesize(&grid, &alpha, &line.imag);
                for j in 0..n {
                    let e_here = y_here[j].exp_sl2();
                    let e_next_inv = y_next[j].scale(C64::new(-1.0, 0.0)).exp_sl2();
                    line.a[j] = e_next_inv.mul(&line.a[j]).mul(&e_here);
                    line.b[j] = line.b[j].mul(&e_here);
                }
            }
            let trial_constant = constant.mul(&sol.drift.scale(scale).exp_sl2());
            let r = sup_dev(&trial[0].a, &trial_constant.to_complex());
            if (r.is_finite() && r < prev) || scale <= MIN_STEP {
                break (trial, trial_constant, r);
            }
            scale *= 0.5;
        };
        lines = next_lines;
        constant = next_constant;
        iterations += 1;
        history.push(r);
        let best = history.iter().copied().fold(f64::INFINITY, f64::min);
        let since_best = history.len() - 1 - history.iter().rposition(|&x| x == best).unwrap();
        if !r.is_finite() || r > 10.0 * history[0].max(config.tol_residual) || since_best >= STALL_STEPS {
            return Err(Error::NoConvergence { history });
        }
    }

    let cconst = constant.to_complex();
    let strip_residual = lines.iter().skip(1).map(|l| sup_dev(&l.a, &cconst)).fold(0.0, f64::max);
    let b_samples: Vec<Vec<CMat2>> = lines.iter().skip(if analytic { 1 } else { 0 }).map(|l| l.b.clone()).collect();
    let mut coeffs = extract(&grid, &b_samples, h, config.coeff_radius);
    coeffs.make_real();
    let mut conjugation = FourierConjugation { coeffs, degree: vec![0; d], strip: config.final_strip() };
    conjugation.degree = degree(&conjugation, config.grid)?;
    let (_, rho) = elliptic_frame(&constant)?;
    Ok(KamReduction {
        conjugation,
        constant,
        rho,
        residual: *history.last().unwrap(),
        strip_residual,
        iterations,
        convergence_order: convergence_order(&history, RESIDUAL_FLOOR),
        history,
        resonance,
    })
}

/// Output of [`verify_conjugation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugationCheck {
    pub residual: f64,
    pub rho_input: f64,
    pub rho_reduced: f64,
    pub rho_shift_ok: bool,
}

/// Points per axis used by [`verify_conjugation`].
pub fn verification_resolution(d: usize) -> usize {
    match d {
        1 => 1024,
        2 => 256,
        _ => 32,
    }
}

/// `sup_x ‖B(x+α)⁻¹ S(x) B(x) − A‖` on a fine grid, and the rotation number
/// bookkeeping `ρ(A) = ρ(S) − ⟨deg B, α⟩/2 mod 1` within `4/n_rot`.
pub fn verify_conjugation(s: &Cocycle, b: &FourierConjugation, a: &Sl2Matrix, n_rot: usize) -> Result<ConjugationCheck> {
    let d = s.dim();
    if b.dim() != d {
        return Err(Error::InvalidInput("conjugation has wrong dimension".into()));
    }
    let mut res = verification_resolution(d);
    while res <= 2 * b.radius() {
        res *= 2;
    }
    let grid = Grid::new(d, res);
    let here = b.on_grid(&grid, &vec![0.0; d]);
    let next = b.on_grid(&grid, s.alpha.components());
    let residual = (0..grid.len())
        .map(|j| {
            let x = grid.point(j);
            next[j].inverse().mul(&s.eval(&x)).mul(&here[j]).sub(a).norm()
        })
        .fold(0.0, f64::max);
    let x0 = vec![0.0; d];
    let rho_input = s.rotation_number(n_rot, &x0)?.rho;
    let rho_reduced = Cocycle::constant(s.alpha.clone(), *a).rotation_number(n_rot, &x0)?.rho;
    let shift = s.alpha.pair(&b.degree) / 2.0;
    let rho_shift_ok = torus_norm(rho_reduced - rho_input + shift) <= 4.0 / n_rot as f64;
    Ok(ConjugationCheck { residual, rho_input, rho_reduced, rho_shift_ok })
}

/// Unimodular `U` with `U⁻¹ A U = diag(e^{2πiρ}, e^{−2πiρ})`, subject to
/// `‖U‖ ≤ 2^{τ′} √(2‖A‖/γ)`.
pub fn diagonalize_sl2(a: &Sl2Matrix, rho: f64, gamma: f64, tau_prime: f64) -> Result<CMat2> {
    let (p, sigma) = eigen_frame(a)?;
    // P diagonalizes to diag(e^{−2πiσ}, e^{2πiσ}); swap when ρ ≡ σ.
    let u = if torus_norm(rho - sigma) < 1e-8 {
        let w = CMat2::new(CZ, C64::new(1.0, 0.0), C64::new(-1.0, 0.0), CZ);
        p.mul(&w)
    } else if torus_norm(rho + sigma) < 1e-8 {
        p
    } else {
        return Err(Error::InconsistentRotation { rho });
    };
    let u = u.scale(u.det().sqrt().inv());
    let norm = u.norm();
    let bound = 2f64.powf(tau_prime) * (2.0 * a.norm() / gamma).sqrt();
    if norm > bound {
        return Err(Error::DiagonalizerTooLarge { norm, bound });
    }
    Ok(u)
}

/// Output of [`diagonalize_nearby`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearbyDiagonalization {
    pub u: CMat2,
    pub u_prime: CMat2,
    /// `U′ = U·P`.
    pub p: CMat2,
    /// `‖U − U′‖`.
    pub dist: f64,
    /// `‖A − A′‖`.
    pub delta: f64,
    pub threshold: f64,
    /// True when the caller relaxed the threshold.
    pub relaxed: bool,
}

/// Threshold on `‖A − A′‖` below which [`diagonalize_nearby`] runs without
/// relaxation.
pub fn nearby_threshold(gamma: f64, tau_prime: f64) -> f64 {
    (1.0 / (1e6 * PI)).min((gamma / 2f64.powf(tau_prime)).powf(0.1))
}

/// Diagonalize `A` and a nearby `A′` with close diagonalizers.
///
/// `U⁻¹A′U = exp [[a, b], [c, −a]]`; with `w = a/(2π) + iρ′`,
/// `P = (1 + bc/(4π²w²))^{−1/2} [[1, −b/(2πw)], [c/(2πw), 1]]` conjugates the
/// logarithm to `diag(2πiρ′, −2πiρ′)`. `relaxed_threshold` replaces the
/// default bound when given.
pub fn diagonalize_nearby(
    a: &Sl2Matrix,
    a_prime: &Sl2Matrix,
    rho: f64,
    rho_prime: f64,
    gamma: f64,
    tau_prime: f64,
    relaxed_threshold: Option<f64>,
) -> Result<NearbyDiagonalization> {
    let delta = a.sub(a_prime).norm();
    let threshold = relaxed_threshold.unwrap_or_else(|| nearby_threshold(gamma, tau_prime));
    if delta > threshold {
        return Err(Error::PerturbationTooLarge { delta, threshold });
    }
    let u = diagonalize_sl2(a, rho, gamma, tau_prime)?;
    let half = a_prime.trace() / 2.0;
    if !(half.abs() < 1.0) {
        return Err(Error::NotElliptic { trace: a_prime.trace() });
    }
    if ((2.0 * PI * rho_prime).cos() - half).abs() > 1e-8 {
        return Err(Error::InconsistentRotation { rho: rho_prime });
    }
    let w_mat = u.inverse().mul(&a_prime.to_complex()).mul(&u);
    let lg = w_mat.log_sl2();
    let (la, lb, lc) = (lg.m[0], lg.m[1], lg.m[2]);
    // Representative of ρ′ in (−1/2, 1/2], matching the principal log.
    let r = rho_prime - rho_prime.round();
    let w = la / (2.0 * PI) + C64::new(0.0, r);
    if w.norm() < 1e-12 {
        return Err(Error::InconsistentRotation { rho: rho_prime });
    }
    let tw = 2.0 * PI * w;
    let one = C64::new(1.0, 0.0);
    let scale = (one + lb * lc / (tw * tw)).sqrt().inv();
    let p = CMat2::new(one, -lb / tw, lc / tw, one).scale(scale);
    let u_prime = u.mul(&p);
    let dist = u.sub(&u_prime).norm();
    let bound = delta.powf(0.1);
    if relaxed_threshold.is_none() && dist > bound {
        return Err(Error::DiagonalizerTooLarge { norm: dist, bound });
    }
    Ok(NearbyDiagonalization { u, u_prime, p, dist, delta, threshold, relaxed: relaxed_threshold.is_some() })
}

/// Shared conjugation handle for use with [`crate::cocycle::conjugate`].
pub fn as_field(b: &FourierConjugation) -> Arc<dyn MatrixField> {
    Arc::new(b.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::PotentialFourier;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn amo_dual(e: f64) -> Cocycle {
        Cocycle::schrodinger(Frequency::golden(), PotentialFourier::cosine(0.05, 1), e)
    }

    fn schrod_constant(t: f64) -> Sl2Matrix {
        Sl2Matrix::new(2.0 * (2.0 * PI * t).cos(), -1.0, 1.0, 0.0)
    }

    fn random_elliptic(rng: &mut ChaCha8Rng, rho: f64) -> Sl2Matrix {
        let c = Sl2Matrix::new(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), 0.0, 1.0);
        let c = Sl2Matrix::new(c.a11, c.a12, 0.0, 1.0 / c.a11);
        c.mul(&Sl2Matrix::rotation(rho)).mul(&c.inverse())
    }

    #[test]
    fn elliptic_frame_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for rho in [0.1, 0.23, 0.7, 0.95] {
            let a = random_elliptic(&mut rng, rho);
            let (c, sigma) = elliptic_frame(&a).unwrap();
            assert!((sigma - rho).abs() < 1e-12);
            assert!((c.det() - 1.0).abs() < 1e-12);
            assert!(c.mul(&Sl2Matrix::rotation(sigma)).mul(&c.inverse()).sub(&a).norm() < 1e-12);
        }
        assert!(matches!(elliptic_frame(&Sl2Matrix::IDENTITY), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn cohomological_zero_field() {
        let f = CoeffBox::zeros(1, 8);
        let sol = cohomological_solve(&schrod_constant(0.2), &f, &Frequency::golden(), 8, 1e-8).unwrap();
        assert!(sol.y.data.iter().all(|m| m.max_abs() == 0.0));
        assert_eq!(sol.report.action, ResonanceAction::None);
    }

    #[test]
    fn cohomological_single_mode_closed_form() {
        let a0 = schrod_constant(0.2);
        let alpha = Frequency::golden();
        let (p, sigma) = eigen_frame(&a0).unwrap();
        let c = C64::new(0.3, -0.1);
        let k0 = [3i64];
        let mut f = CoeffBox::zeros(1, 5);
        let fk = p.mul(&CMat2::new(CZ, c, CZ, CZ)).mul(&p.inverse());
        f.set(&k0, fk);
        f.set(&[-3], fk.conj());
        let sol = cohomological_solve(&a0, &f, &alpha, 5, 1e-8).unwrap();
        let z = p.inverse().mul(&sol.y.get(&k0)).mul(&p);
        let expected = c / (C64::from_polar(1.0, 2.0 * PI * (alpha.pair(&k0) + 2.0 * sigma)) - 1.0);
        assert!((z.m[1] - expected).norm() < 1e-14 * expected.norm().max(1.0));
        assert!(z.m[0].norm() < 1e-15 && z.m[2].norm() < 1e-15 && z.m[3].norm() < 1e-15);
    }

    #[test]
    fn cohomological_grid_residual() {
        let alpha = Frequency::golden();
        let a0 = schrod_constant(0.37);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let radius = 6;
        let mut f = CoeffBox::zeros(1, radius);
        for k in 0..=radius as i64 {
            let re = Sl2Matrix::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
            let re = Sl2Matrix::new(re.a11, re.a12, re.a21, -re.a11);
            let im = Sl2Matrix::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
            let im = if k == 0 { Sl2Matrix::ZERO } else { Sl2Matrix::new(im.a11, im.a12, im.a21, -im.a11) };
            let ck = CMat2 { m: [0, 1, 2, 3].map(|q| C64::new([re.a11, re.a12, re.a21, re.a22][q], [im.a11, im.a12, im.a21, im.a22][q])) };
            f.set(&[k], ck);
            f.set(&[-k], ck.conj());
        }
        let norm = f.data.iter().map(CMat2::max_abs).fold(0.0, f64::max);
        for m in f.data.iter_mut() {
            *m = m.scale(C64::new(1e-4 / norm, 0.0));
        }
        let sol = cohomological_solve(&a0, &f, &alpha, radius, 1e-8).unwrap();
        let a = a0.to_complex();
        let grid = Grid::new(1, 64);
        let y0 = sol.y.synthesize(&grid, &[0.0], &[0.0]);
        let y1 = sol.y.synthesize(&grid, alpha.components(), &[0.0]);
        let fs = sol.solved.synthesize(&grid, &[0.0], &[0.0]);
        for j in 0..grid.len() {
            let r = y1[j].mul(&a).sub(&a.mul(&y0[j])).sub(&a.mul(&fs[j]));
            assert!(r.max_abs() < 1e-12, "residual {}", r.max_abs());
            assert!(y0[j].max_imag() < 1e-15);
        }
    }

    #[test]
    fn cohomological_reports_skipped_mode() {
        let alpha = Frequency::golden();
        // Tune σ so that ⟨3,α⟩ + 2σ is 1e-10 away from an integer.
        let sigma = (1.0 - (3.0 * alpha.components()[0]).fract() + 1e-10) / 2.0;
        let a0 = Sl2Matrix::rotation(sigma);
        let mut f = CoeffBox::zeros(1, 4);
        let m = CMat2::new(C64::new(1e-3, 0.0), C64::new(2e-3, 0.0), C64::new(-1e-3, 0.0), C64::new(-1e-3, 0.0));
        f.set(&[3], m);
        f.set(&[-3], m.conj());
        let sol = cohomological_solve(&a0, &f, &alpha, 4, 1e-8).unwrap();
        assert_eq!(sol.report.action, ResonanceAction::ModeSkipped);
        assert!(sol.report.resonant_modes.iter().any(|(k, d)| k == &vec![3] && *d < 1e-8));
        assert!(sol.report.resonant_modes.iter().all(|(_, d)| *d < 1e-8));
    }

    #[test]
    fn cohomological_zero_mode_resonance_aborts() {
        let a0 = Sl2Matrix::rotation(0.5 - 1e-8);
        let mut f = CoeffBox::zeros(1, 2);
        f.set(&[0], CMat2::new(CZ, C64::new(1e-3, 0.0), C64::new(2e-3, 0.0), CZ));
        let err = cohomological_solve(&a0, &f, &Frequency::golden(), 2, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Resonance { ref k, .. } if k == &vec![0]));
    }

    #[test]
    fn kam_on_constant_is_trivial() {
        let a0 = schrod_constant(0.3);
        let c = Cocycle::constant(Frequency::golden(), a0);
        let r = kam_reduce(&c, a0, None, &KamConfig::for_dim(1)).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.constant, a0);
        let id = FourierConjugation::identity(1);
        for k in r.conjugation.coeffs.modes() {
            assert!(r.conjugation.coeff(&k).sub(&id.coeff(&k)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn kam_amo_dual_converges_quadratically() {
        let t = 0.37;
        let c = amo_dual(2.0 * (2.0 * PI * t).cos());
        let cfg = KamConfig::for_dim(1);
        let r = kam_reduce(&c, schrod_constant(t), None, &cfg).unwrap();
        assert!(r.iterations <= 8, "{:?}", r.history);
        assert!(r.residual <= 1e-10);
        assert!(r.quadratic(), "order {:?}", r.convergence_order);
        assert_eq!(r.conjugation.degree, vec![0]);
        let chk = verify_conjugation(&c, &r.conjugation, &r.constant, 20_000).unwrap();
        assert!(chk.residual <= 10.0 * cfg.tol_residual, "{}", chk.residual);
        assert!(chk.rho_shift_ok, "{chk:?}");
        assert!((r.rho - chk.rho_input).abs() < 4.0 / 20_000.0);
        assert!(r.conjugation.det_defect(256) < 1e-8);
        // Coefficient decay respects the certificate strip over |k| ≥ K_B/2.
        let cert = r.conjugation.decay_certificate(cfg.final_strip());
        assert!(cert.is_finite() && cert < 10.0, "{cert}");
    }

    #[test]
    fn kam_target_resonance_is_reported_with_mode() {
        let alpha = Frequency::golden();
        let rho = alpha.components()[0] / 2.0 + 1e-9;
        let c = amo_dual(2.0 * (2.0 * PI * rho).cos());
        let target = RhoTarget { rho, params: DiophantinePhaseParams { gamma: 1e-3, tau_prime: 2.0, scan_bound: 20 } };
        let err = kam_reduce(&c, schrod_constant(rho), Some(&target), &KamConfig::for_dim(1)).unwrap_err();
        assert!(matches!(err, Error::Resonance { ref k, divisor } if k == &vec![1] && divisor < 1e-8), "{err:?}");
    }

    #[test]
    fn kam_rejects_large_perturbation() {
        let c = Cocycle::schrodinger(Frequency::golden(), PotentialFourier::cosine(2.0, 1), 0.3);
        let err = kam_reduce(&c, schrod_constant(0.2), None, &KamConfig::for_dim(1)).unwrap_err();
        assert!(matches!(err, Error::PerturbationTooLarge { .. }));
    }

    #[test]
    fn config_validation() {
        let mut cfg = KamConfig::for_dim(1);
        cfg.strip_schedule = vec![0.3, 0.3];
        assert!(cfg.validate().is_err());
        let mut cfg = KamConfig::for_dim(1);
        cfg.divisor_floor = 0.0;
        assert!(cfg.validate().is_err());
        assert!(KamConfig::for_dim(2).validate().is_ok());
    }

    #[test]
    fn convergence_order_of_exact_quadratic() {
        let h = [1e-1, 1e-2, 1e-4, 1e-8, 1e-16];
        assert!((convergence_order(&h, 1e-13).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_order(&[1e-1, 1e-15], 1e-13).is_none());
    }

    #[test]
    fn verify_identity_and_sensitivity() {
        let a = schrod_constant(0.21);
        let c = Cocycle::constant(Frequency::golden(), a);
        let id = FourierConjugation::identity(1);
        let chk = verify_conjugation(&c, &id, &a, 1000).unwrap();
        assert_eq!(chk.residual, 0.0);
        assert!(chk.rho_shift_ok);

        let t = 0.37;
        let s = amo_dual(2.0 * (2.0 * PI * t).cos());
        let r = kam_reduce(&s, schrod_constant(t), None, &KamConfig::for_dim(1)).unwrap();
        let mut bad = r.conjugation.clone();
        let bump = CMat2::new(C64::new(1e-3, 0.0), CZ, CZ, CZ);
        bad.coeffs.set(&[2], bad.coeff(&[2]).add(&bump));
        bad.coeffs.set(&[-2], bad.coeff(&[-2]).add(&bump));
        let chk = verify_conjugation(&s, &bad, &r.constant, 1000).unwrap();
        assert!(chk.residual >= 1e-4, "{}", chk.residual);
    }

    #[test]
    fn conjugation_json_round_trip() {
        let t = 0.41;
        let s = amo_dual(2.0 * (2.0 * PI * t).cos());
        let r = kam_reduce(&s, schrod_constant(t), None, &KamConfig::for_dim(1)).unwrap();
        let j = r.conjugation.to_json();
        let back = FourierConjugation::from_json(&j).unwrap();
        assert_eq!(back.degree, r.conjugation.degree);
        for x in [0.0, 0.123, 0.77] {
            let diff = back.eval(&[x]).sub(&r.conjugation.eval(&[x])).norm();
            assert!(diff < 1e-15, "{diff}");
        }
        // Entries below 1e-16 are dropped.
        for row in j["coeffs"].as_array().unwrap() {
            let row = row.as_array().unwrap();
            assert!(row[1..].iter().any(|v| v.as_f64().unwrap().abs() >= 1e-16));
        }
    }

    #[test]
    fn diagonalize_rotation_gives_cayley_inverse() {
        let rho = 0.3;
        let u = diagonalize_sl2(&Sl2Matrix::rotation(rho), rho, 0.05, 2.0).unwrap();
        let d = u.inverse().mul(&Sl2Matrix::rotation(rho).to_complex()).mul(&u);
        assert!((d.m[0] - C64::from_polar(1.0, 2.0 * PI * rho)).norm() < 1e-14);
        assert!(d.m[1].norm() < 1e-14 && d.m[2].norm() < 1e-14);
        // U equals M⁻¹ times a diagonal or antidiagonal factor.
        let q = cayley_m().mul(&u);
        let diag_like = q.m[1].norm() < 1e-14 && q.m[2].norm() < 1e-14;
        let anti_like = q.m[0].norm() < 1e-14 && q.m[3].norm() < 1e-14;
        assert!(diag_like || anti_like);
    }

    #[test]
    fn diagonalize_random_elliptic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_elliptic(&mut rng, 0.23);
            for rho in [0.23, -0.23, 0.77] {
                let u = diagonalize_sl2(&a, rho, 0.05, 2.0).unwrap();
                assert!((u.det() - 1.0).norm() < 1e-12);
                let d = u.inverse().mul(&a.to_complex()).mul(&u);
                assert!((d.m[0] - C64::from_polar(1.0, 2.0 * PI * rho)).norm() < 1e-12);
                assert!((d.m[3] - C64::from_polar(1.0, -2.0 * PI * rho)).norm() < 1e-12);
                assert!(d.m[1].norm() < 1e-12 && d.m[2].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonalize_errors() {
        assert!(matches!(diagonalize_sl2(&Sl2Matrix::IDENTITY, 0.0, 0.05, 2.0), Err(Error::NotElliptic { .. })));
        assert!(matches!(
            diagonalize_sl2(&Sl2Matrix::new(3.0, -1.0, 1.0, 0.0), 0.1, 0.05, 2.0),
            Err(Error::NotElliptic { .. })
        ));
        assert!(matches!(diagonalize_sl2(&Sl2Matrix::rotation(0.2), 0.3, 0.05, 2.0), Err(Error::InconsistentRotation { .. })));
        // Nearly parabolic and sheared: ‖A‖ stays near 1 while U is large.
        let c = Sl2Matrix::new(10.0, 0.0, 0.0, 0.1);
        let a = c.mul(&Sl2Matrix::rotation(1e-4)).mul(&c.inverse());
        assert!(matches!(diagonalize_sl2(&a, 1e-4, 1.0, 0.0), Err(Error::DiagonalizerTooLarge { .. })));
    }

    #[test]
    fn nearby_identical_and_commuting() {
        let a = Sl2Matrix::rotation(0.3);
        let r = diagonalize_nearby(&a, &a, 0.3, 0.3, 0.05, 2.0, None).unwrap();
        assert!(r.p.sub(&CMat2::IDENTITY).max_abs() < 1e-14);
        assert!(r.dist < 1e-14);

        let b = Sl2Matrix::rotation(0.3 + 1e-8);
        let r = diagonalize_nearby(&a, &b, 0.3, 0.3 + 1e-8, 0.05, 2.0, None).unwrap();
        assert!(r.dist <= 1e-8, "{}", r.dist);
        let d = r.u_prime.inverse().mul(&b.to_complex()).mul(&r.u_prime);
        assert!((d.m[0] - C64::from_polar(1.0, 2.0 * PI * (0.3 + 1e-8))).norm() < 1e-14);
    }

    #[test]
    fn nearby_generic_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_elliptic(&mut rng, 0.23);
        let pert = Sl2Matrix::new(0.0, 1e-12, 0.0, 0.0).exp_sl2();
        let b = a.mul(&pert);
        let rho_b = (b.trace() / 2.0).acos() / (2.0 * PI);
        let r = diagonalize_nearby(&a, &b, 0.23, rho_b, 0.05, 2.0, None).unwrap();
        assert!(r.dist <= r.delta.powf(0.1));
        assert!(!r.relaxed);
        let d = r.u_prime.inverse().mul(&b.to_complex()).mul(&r.u_prime);
        assert!(d.m[1].norm() < 1e-12 && d.m[2].norm() < 1e-12);
        assert!((r.u_prime.det() - 1.0).norm() < 1e-12);

        let far = a.mul(&Sl2Matrix::new(0.0, 1e-2, 0.0, 0.0).exp_sl2());
        let rho_far = (far.trace() / 2.0).acos() / (2.0 * PI);
        assert!(matches!(
            diagonalize_nearby(&a, &far, 0.23, rho_far, 0.05, 2.0, None),
            Err(Error::PerturbationTooLarge { .. })
        ));
        let relaxed = diagonalize_nearby(&a, &far, 0.23, rho_far, 0.05, 2.0, Some(0.1)).unwrap();
        assert!(relaxed.relaxed);
    }
}
