//! Quasi-periodic SL(2,ℝ) cocycles `(α, A)`: iterates, Lyapunov exponent,
//! fibered rotation number, a uniform hyperbolicity test, the degree of a
//! torus map, and conjugation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{wrap01, Frequency};
use crate::error::{Error, Result};
pub use crate::linalg::{from_su11, to_su11};
use crate::linalg::{CMat2, Sl2Matrix};
use crate::operators::PotentialFourier;
use crate::par;

/// Largest `|n|` accepted by [`Cocycle::iterate`].
pub const MAX_ITERATE: u64 = 10_000_000;
const RENORM_EVERY: usize = 32;

/// A map `𝕋^d → SL(2,ℝ)`. Implementations must accept points outside
/// `[0,1)^d`; fields that are only PSL-periodic (such as `R_{⟨k,x⟩/2}` with
/// odd `k`) rely on this.
pub trait MatrixField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Sl2Matrix;
    /// Holomorphic extension, when the field has one.
    fn eval_complex(&self, _z: &[C64]) -> Option<CMat2> {
        None
    }
}

/// Constant map.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub dim: usize,
    pub a: Sl2Matrix,
}

impl MatrixField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> Sl2Matrix {
        self.a
    }
    fn eval_complex(&self, _z: &[C64]) -> Option<CMat2> {
        Some(self.a.to_complex())
    }
}

/// `S_E^V(x) = [[E − V(x), −1], [1, 0]]`.
#[derive(Debug, Clone)]
pub struct SchrodingerField {
    pub energy: f64,
    pub potential: PotentialFourier,
}

impl MatrixField for SchrodingerField {
    fn dim(&self) -> usize {
        self.potential.dim()
    }
    fn eval(&self, x: &[f64]) -> Sl2Matrix {
        Sl2Matrix::schrodinger(self.energy - self.potential.eval(x))
    }
    fn eval_complex(&self, z: &[C64]) -> Option<CMat2> {
        let v = self.potential.eval_complex(z);
        let one = C64::new(1.0, 0.0);
        Some(CMat2::new(C64::new(self.energy, 0.0) - v, -one, one, C64::new(0.0, 0.0)))
    }
}

/// Map given by a closure.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> MatrixField for FnField<F>
where
    F: Fn(&[f64]) -> Sl2Matrix + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Sl2Matrix {
        (self.f)(x)
    }
}

/// `R_{⟨k,x⟩/2}`, the degree-`k` normal form.
#[derive(Debug, Clone)]
pub struct HalfRotationField {
    pub k: Vec<i64>,
}

impl MatrixField for HalfRotationField {
    fn dim(&self) -> usize {
        self.k.len()
    }
    fn eval(&self, x: &[f64]) -> Sl2Matrix {
        let ph: f64 = self.k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
        Sl2Matrix::rotation(ph / 2.0)
    }
}

/// `x ↦ B(x+α)⁻¹ A(x) B(x)`.
pub struct ConjugatedField {
    base: Arc<dyn MatrixField>,
    conj: Arc<dyn MatrixField>,
    alpha: Vec<f64>,
}

impl MatrixField for ConjugatedField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, x: &[f64]) -> Sl2Matrix {
        // Reduce once so B is evaluated at x and x+α on a common sheet.
        let xw: Vec<f64> = x.iter().map(|&v| wrap01(v)).collect();
        let xa: Vec<f64> = xw.iter().zip(&self.alpha).map(|(a, b)| a + b).collect();
        self.conj.eval(&xa).inverse().mul(&self.base.eval(&xw)).mul(&self.conj.eval(&xw))
    }
}

/// The skew product `(x, v) ↦ (x + α, A(x)v)`.
#[derive(Clone)]
pub struct Cocycle {
    pub alpha: Frequency,
    pub field: Arc<dyn MatrixField>,
    pub analytic_strip: Option<f64>,
}

impl fmt::Debug for Cocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cocycle")
            .field("alpha", &self.alpha.literal())
            .field("analytic_strip", &self.analytic_strip)
            .finish()
    }
}

/// `matrix · e^{log_scale}`: products whose entries would overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledSl2 {
    pub matrix: Sl2Matrix,
    pub log_scale: f64,
}

impl ScaledSl2 {
    /// `log ‖·‖`.
    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.matrix.norm().ln()
    }

    /// The unscaled product, renormalized to determinant one, if it fits in
    /// `f64`.
    pub fn to_matrix(&self) -> Option<Sl2Matrix> {
        let m = self.matrix.scale(self.log_scale.exp());
        let nrm = m.frobenius();
        if !nrm.is_finite() {
            return None;
        }
        // The determinant is only resolvable while the entries are moderate.
        let d = m.det();
        if nrm < 1e6 && d > 0.0 {
            Some(m.scale(1.0 / d.sqrt()))
        } else {
            Some(m)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectiveTrace {
    /// Unreduced lift values `y_0, y_1, …` in radians.
    pub lift_angles: Vec<f64>,
    /// Increments `y_{j+1} − y_j`.
    pub increments: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationNumber {
    /// Reduced to `[0,1)`.
    pub rho: f64,
    /// Unreduced lift average in turns.
    pub lift_average: f64,
    /// Lift average over the first half of the orbit.
    pub half_average: f64,
    /// `|lift_average − half_average|`, an O(1/n) error indicator.
    pub error_estimate: f64,
    pub n: usize,
    pub trace: Option<ProjectiveTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UhStatus {
    UniformlyHyperbolic,
    NotUniformlyHyperbolic,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UhResult {
    pub status: UhStatus,
    /// Minimum over samples of `(1/n) log ‖𝒜_n(x)‖`.
    pub rate: f64,
    pub stderr: f64,
    /// Smallest angle between the stable and unstable direction estimates.
    pub min_splitting_angle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    #[serde(rename = "L")]
    pub l: f64,
    pub stderr: f64,
}

fn principal(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

fn grid_points(d: usize, res: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(res.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        pts.push(idx.iter().map(|&i| i as f64 / res as f64).collect());
        let mut i = d;
        loop {
            if i == 0 {
                return pts;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < res {
                break;
            }
            idx[i] = 0;
        }
    }
}

impl Cocycle {
    pub fn new(alpha: Frequency, field: Arc<dyn MatrixField>) -> Result<Self> {
        if field.dim() != alpha.dim() {
            return Err(Error::InvalidInput("field and frequency dimensions differ".into()));
        }
        Ok(Self { alpha, field, analytic_strip: None })
    }

    pub fn schrodinger(alpha: Frequency, potential: PotentialFourier, energy: f64) -> Self {
        assert_eq!(alpha.dim(), potential.dim(), "potential and frequency dimensions differ");
        let strip = potential.claimed_strip();
        Self {
            alpha,
            field: Arc::new(SchrodingerField { energy, potential }),
            analytic_strip: Some(strip),
        }
    }

    pub fn constant(alpha: Frequency, a: Sl2Matrix) -> Self {
        let dim = alpha.dim();
        Self { alpha, field: Arc::new(ConstantField { dim, a }), analytic_strip: Some(f64::INFINITY) }
    }

    pub fn from_fn<F>(alpha: Frequency, f: F) -> Self
    where
        F: Fn(&[f64]) -> Sl2Matrix + Send + Sync + 'static,
    {
        let dim = alpha.dim();
        Self { alpha, field: Arc::new(FnField { dim, f }), analytic_strip: None }
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Sl2Matrix {
        self.field.eval(x)
    }

    fn shifted(&self, x: &[f64], j: i64) -> Vec<f64> {
        x.iter().zip(self.alpha.components()).map(|(xi, a)| wrap01(xi + j as f64 * a)).collect()
    }

    /// `𝒜_n(x)`: `A(x+(n−1)α)···A(x)` for `n ≥ 0` and
    /// `A(x+nα)⁻¹···A(x−α)⁻¹` for `n < 0`.
    pub fn iterate(&self, x: &[f64], n: i64) -> Result<ScaledSl2> {
        if n.unsigned_abs() > MAX_ITERATE {
            return Err(Error::InvalidInput(format!("|n| = {} exceeds the iterate guard", n.abs())));
        }
        let mut m = Sl2Matrix::IDENTITY;
        let mut log_scale = 0.0;
        for step in 0..n.unsigned_abs() as usize {
            let a = if n >= 0 {
                self.field.eval(&self.shifted(x, step as i64))
            } else {
                self.field.eval(&self.shifted(x, -(step as i64) - 1)).inverse()
            };
            m = a.mul(&m);
            if (step + 1) % RENORM_EVERY == 0 {
                let nrm = m.norm();
                m = m.scale(1.0 / nrm);
                log_scale += nrm.ln();
            }
        }
        Ok(ScaledSl2 { matrix: m, log_scale })
    }

    /// Lyapunov exponent averaged over `x_samples` seeded random phases.
    /// Sample `i` draws its phase from its own RNG stream so the result is
    /// independent of the thread count.
    pub fn lyapunov(&self, n: usize, x_samples: usize, seed: u64) -> Result<LyapunovEstimate> {
        if n == 0 || x_samples == 0 {
            return Err(Error::InvalidInput("lyapunov needs n >= 1 and x_samples >= 1".into()));
        }
        let rates: Vec<Result<f64>> = par::map_indexed(x_samples, |i| {
            let x = sample_point(self.dim(), seed, i as u64);
            Ok((self.iterate(&x, n as i64)?.log_norm() / n as f64).max(0.0))
        });
        let rates: Vec<f64> = rates.into_iter().collect::<Result<_>>()?;
        let (mean, stderr) = mean_stderr(&rates);
        Ok(LyapunovEstimate { l: mean.max(0.0), stderr })
    }

    /// Branch centre for the polar angle of `A(x)`, chosen so that the
    /// polar angle never meets the cut. Fails if the polar angle winds.
    fn polar_branch(&self) -> Result<f64> {
        let d = self.dim();
        let res = if d == 1 { 256 } else { 32 };
        let pts = grid_points(d, res);
        let (mut s, mut c) = (0.0, 0.0);
        let angles: Vec<f64> = pts.iter().map(|x| self.field.eval(x).polar_angle()).collect();
        for &a in &angles {
            s += a.sin();
            c += a.cos();
        }
        let centre = s.atan2(c);
        let spread = angles.iter().map(|&a| principal(a - centre).abs()).fold(0.0, f64::max);
        if spread > PI - 0.05 {
            let winding = self.polar_winding(res);
            return Err(Error::NonTrivialHomotopy { winding });
        }
        Ok(centre)
    }

    fn polar_winding(&self, res: usize) -> Vec<i64> {
        let d = self.dim();
        (0..d)
            .map(|axis| {
                let mut total = 0.0;
                let mut prev = self.field.eval(&vec![0.0; d]).polar_angle();
                for j in 1..=res {
                    let mut x = vec![0.0; d];
                    x[axis] = j as f64 / res as f64;
                    let a = self.field.eval(&x).polar_angle();
                    total += principal(a - prev);
                    prev = a;
                }
                (total / (2.0 * PI)).round() as i64
            })
            .collect()
    }

    /// Fibered rotation number from the lift average along one orbit.
    pub fn rotation_number(&self, n: usize, x0: &[f64]) -> Result<RotationNumber> {
        self.rotation_number_with(n, x0, false)
    }

    /// As [`Cocycle::rotation_number`], optionally keeping the lift trace.
    ///
    /// The lift of `A(x)` acting on directions is built from the polar
    /// decomposition `A = R_φ S`: `S` moves any direction by less than a
    /// quarter turn, so its contribution is the principal angle change,
    /// while `φ(x)` is taken on a branch fixed once for the whole torus.
    pub fn rotation_number_with(&self, n: usize, x0: &[f64], keep_trace: bool) -> Result<RotationNumber> {
        if n == 0 {
            return Err(Error::InvalidInput("rotation number needs n >= 1".into()));
        }
        let centre = self.polar_branch()?;
        let mut v = [1.0f64, 0.0];
        let mut total = 0.0;
        let mut half = 0.0;
        let mut trace = keep_trace.then(|| ProjectiveTrace {
            lift_angles: Vec::with_capacity(n + 1),
            increments: Vec::with_capacity(n),
        });
        if let Some(t) = trace.as_mut() {
            t.lift_angles.push(0.0);
        }
        let mut x: Vec<f64> = x0.iter().map(|&c| wrap01(c)).collect();
        for j in 0..n {
            let a = self.field.eval(&x);
            let phi = centre + principal(a.polar_angle() - centre);
            let w = a.apply(v);
            let before = v[1].atan2(v[0]);
            let after = w[1].atan2(w[0]);
            let inc = phi + principal(after - before - phi);
            total += inc;
            if j + 1 == n / 2 {
                half = total;
            }
            let r = w[0].hypot(w[1]);
            v = [w[0] / r, w[1] / r];
            for (xi, ai) in x.iter_mut().zip(self.alpha.components()) {
                *xi = wrap01(*xi + ai);
            }
            if let Some(t) = trace.as_mut() {
                t.increments.push(inc);
                t.lift_angles.push(total);
            }
        }
        let lift_average = total / (2.0 * PI * n as f64);
        let half_average = if n >= 2 { half / (2.0 * PI * (n / 2) as f64) } else { lift_average };
        Ok(RotationNumber {
            rho: wrap01(lift_average),
            lift_average,
            half_average,
            error_estimate: (lift_average - half_average).abs(),
            n,
            trace,
        })
    }

    /// Tri-state uniform hyperbolicity test.
    ///
    /// Growth: every sampled `(1/n) log ‖𝒜_n(x)‖` must clear the noise
    /// floor. Splitting: the most contracted direction of `𝒜_n(x)` and the
    /// most expanded image direction of `𝒜_n(x − nα)` estimate the stable and
    /// unstable bundles; a uniform splitting keeps them apart.
    pub fn uh_test(&self, n: usize, x_samples: usize, seed: u64) -> Result<UhResult> {
        if n == 0 || x_samples == 0 {
            return Err(Error::InvalidInput("uh_test needs n >= 1 and x_samples >= 1".into()));
        }
        let out: Vec<Result<(f64, f64)>> = par::map_indexed(x_samples, |i| {
            let x = sample_point(self.dim(), seed, i as u64);
            let fwd = self.iterate(&x, n as i64)?;
            let back_start = self.shifted(&x, -(n as i64));
            let bwd = self.iterate(&back_start, n as i64)?;
            let s = fwd.matrix.contracted_direction();
            let u = bwd.matrix.expanded_image_direction();
            let gap = (s - u).abs();
            Ok((fwd.log_norm() / n as f64, gap.min(PI - gap)))
        });
        let out: Vec<(f64, f64)> = out.into_iter().collect::<Result<_>>()?;
        let rates: Vec<f64> = out.iter().map(|p| p.0).collect();
        let (_, stderr) = mean_stderr(&rates);
        let rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let min_angle = out.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let floor = 20.0 / n as f64;
        let status = if rate <= floor {
            UhStatus::NotUniformlyHyperbolic
        } else if rate < 10.0 * stderr {
            UhStatus::Inconclusive
        } else if min_angle > 0.05 {
            UhStatus::UniformlyHyperbolic
        } else if min_angle < 1e-3 {
            UhStatus::NotUniformlyHyperbolic
        } else {
            UhStatus::Inconclusive
        };
        Ok(UhResult { status, rate, stderr, min_splitting_angle: min_angle })
    }
}

fn sample_point(d: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..d).map(|_| rng.gen::<f64>()).collect()
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Degree of a torus map in the doubled convention: returns `k` when `B`
/// is homotopic to `R_{⟨k,x⟩/2}`. Counts half-turns of the line spanned by
/// `B(x)e₁` along each coordinate loop.
pub fn degree(b: &dyn MatrixField, resolution: usize) -> Result<Vec<i64>> {
    let d = b.dim();
    let mut out = Vec::with_capacity(d);
    for axis in 0..d {
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        let line = |x: &[f64]| {
            let m = b.eval(x);
            m.a21.atan2(m.a11)
        };
        let mut prev = line(&vec![0.0; d]);
        for j in 1..=resolution {
            let mut x = vec![0.0; d];
            x[axis] = j as f64 / resolution as f64;
            let cur = line(&x);
            // Line angles live mod π.
            let mut inc = (cur - prev).rem_euclid(PI);
            if inc > PI / 2.0 {
                inc -= PI;
            }
            worst = worst.max(inc.abs());
            total += inc;
            prev = cur;
        }
        if worst > PI / 4.0 {
            let factor = (worst / (PI / 8.0)).ceil() as usize;
            return Err(Error::UnderResolved { resolution, required: resolution * factor });
        }
        out.push((total / PI).round() as i64);
    }
    Ok(out)
}

/// `x ↦ B(x+α)⁻¹ A(x) B(x)`, after checking that `B` is invertible on a
/// sample grid.
pub fn conjugate(c: &Cocycle, b: Arc<dyn MatrixField>) -> Result<Cocycle> {
    if b.dim() != c.dim() {
        return Err(Error::InvalidInput("conjugation has wrong dimension".into()));
    }
    let res = if c.dim() == 1 { 128 } else { 16 };
    for x in grid_points(c.dim(), res) {
        let det = b.eval(&x).det();
        if !(det.abs() >= 1e-12) {
            return Err(Error::SingularConjugation { x, det });
        }
    }
    Ok(Cocycle {
        alpha: c.alpha.clone(),
        field: Arc::new(ConjugatedField { base: c.field.clone(), conj: b, alpha: c.alpha.components().to_vec() }),
        analytic_strip: None,
    })
}
