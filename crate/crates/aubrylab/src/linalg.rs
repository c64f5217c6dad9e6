//! Small dense linear algebra: real and complex 2×2 matrices with closed-form
//! `exp`/`log` on traceless matrices, plus a symmetric eigensolver
//! (Householder tridiagonalization followed by implicit QL) and Sturm
//! counting for tridiagonal matrices.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real 2×2 matrix, used for elements of SL(2,ℝ) and sl(2,ℝ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sl2Matrix {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Sl2Matrix {
    pub const IDENTITY: Self = Self { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0 };
    pub const ZERO: Self = Self { a11: 0.0, a12: 0.0, a21: 0.0, a22: 0.0 };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    /// `R_ρ`: rotation by `2πρ`.
    pub fn rotation(rho: f64) -> Self {
        let (s, c) = (2.0 * PI * rho).sin_cos();
        Self::new(c, -s, s, c)
    }

    /// The Schrödinger matrix `[[E − v, −1], [1, 0]]`.
    pub fn schrodinger(e_minus_v: f64) -> Self {
        Self::new(e_minus_v, -1.0, 1.0, 0.0)
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d)
    }

    /// Inverse assuming `det = 1`.
    pub fn adjugate(&self) -> Self {
        Self::new(self.a22, -self.a12, -self.a21, self.a11)
    }

    pub fn frobenius(&self) -> f64 {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22).sqrt()
    }

    /// Largest singular value via the closed 2×2 formula.
    pub fn norm(&self) -> f64 {
        let f2 = self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22;
        let d = self.det();
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0);
        ((f2 + disc.sqrt()) / 2.0).sqrt()
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    /// Rescale so that `det = 1` (requires `det > 0`).
    pub fn renormalized(&self) -> Self {
        self.scale(1.0 / self.det().sqrt())
    }

    /// Rotation angle `φ ∈ (−π, π]` of the orthogonal factor in the polar
    /// decomposition `A = R·S`, with `S` symmetric positive definite.
    pub fn polar_angle(&self) -> f64 {
        (self.a21 - self.a12).atan2(self.a11 + self.a22)
    }

    /// Right singular vector for the smallest singular value (the most
    /// contracted direction), as an angle in `[0, π)`.
    pub fn contracted_direction(&self) -> f64 {
        // Eigenvector of AᵀA for its smaller eigenvalue.
        let p = self.a11 * self.a11 + self.a21 * self.a21;
        let q = self.a11 * self.a12 + self.a21 * self.a22;
        let r = self.a12 * self.a12 + self.a22 * self.a22;
        // Major-axis angle of [[p,q],[q,r]] is ½·atan2(2q, p−r).
        let major = 0.5 * (2.0 * q).atan2(p - r);
        (major + PI / 2.0).rem_euclid(PI)
    }

    /// Left singular vector for the largest singular value (the image of
    /// the most expanded direction), as an angle in `[0, π)`.
    pub fn expanded_image_direction(&self) -> f64 {
        let p = self.a11 * self.a11 + self.a12 * self.a12;
        let q = self.a11 * self.a21 + self.a12 * self.a22;
        let r = self.a21 * self.a21 + self.a22 * self.a22;
        (0.5 * (2.0 * q).atan2(p - r)).rem_euclid(PI)
    }

    pub fn to_complex(&self) -> CMat2 {
        CMat2::new(
            C64::new(self.a11, 0.0),
            C64::new(self.a12, 0.0),
            C64::new(self.a21, 0.0),
            C64::new(self.a22, 0.0),
        )
    }

    /// `exp` of a traceless real matrix.
    pub fn exp_sl2(&self) -> Self {
        self.to_complex().exp_sl2().real_part()
    }
}

/// Complex 2×2 matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat2 {
    pub m: [C64; 4],
}

impl Default for CMat2 {
    fn default() -> Self {
        Self::ZERO
    }
}

const CZ: C64 = C64 { re: 0.0, im: 0.0 };
const C1: C64 = C64 { re: 1.0, im: 0.0 };

impl CMat2 {
    pub const IDENTITY: Self = Self { m: [C1, CZ, CZ, C1] };
    pub const ZERO: Self = Self { m: [CZ; 4] };

    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { m: [a, b, c, d] }
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Self::new(a, CZ, CZ, d)
    }

    #[inline]
    pub fn mul(&self, o: &Self) -> Self {
        let [a, b, c, d] = self.m;
        let [e, f, g, h] = o.m;
        Self::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.m[0] + o.m[0], self.m[1] + o.m[1], self.m[2] + o.m[2], self.m[3] + o.m[3])
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.m[0] - o.m[0], self.m[1] - o.m[1], self.m[2] - o.m[2], self.m[3] - o.m[3])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.m[0] * s, self.m[1] * s, self.m[2] * s, self.m[3] * s)
    }

    pub fn det(&self) -> C64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn trace(&self) -> C64 {
        self.m[0] + self.m[3]
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.m[3] / d, -self.m[1] / d, -self.m[2] / d, self.m[0] / d)
    }

    /// Inverse assuming `det = 1`.
    #[inline]
    pub fn adjugate(&self) -> Self {
        Self::new(self.m[3], -self.m[1], -self.m[2], self.m[0])
    }

    pub fn conj(&self) -> Self {
        Self::new(self.m[0].conj(), self.m[1].conj(), self.m[2].conj(), self.m[3].conj())
    }

    /// Largest singular value.
    pub fn norm(&self) -> f64 {
        let f2: f64 = self.m.iter().map(|z| z.norm_sqr()).sum();
        let d = self.det().norm();
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0);
        ((f2 + disc.sqrt()) / 2.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> Sl2Matrix {
        Sl2Matrix::new(self.m[0].re, self.m[1].re, self.m[2].re, self.m[3].re)
    }

    pub fn max_imag(&self) -> f64 {
        self.m.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// `exp(X)` for traceless `X`: with `μ² = −det X`,
    /// `exp X = cosh μ · I + (sinh μ / μ) · X`.
    pub fn exp_sl2(&self) -> Self {
        let mu2 = -self.det();
        let (ch, sh_over) = if mu2.norm() < 1e-8 {
            // Taylor terms up to μ⁶ keep full precision here.
            (
                C1 + mu2 / 2.0 + mu2 * mu2 / 24.0 + mu2 * mu2 * mu2 / 720.0,
                C1 + mu2 / 6.0 + mu2 * mu2 / 120.0 + mu2 * mu2 * mu2 / 5040.0,
            )
        } else {
            let mu = mu2.sqrt();
            (mu.cosh(), mu.sinh() / mu)
        };
        Self::new(ch + sh_over * self.m[0], sh_over * self.m[1], sh_over * self.m[2], ch + sh_over * self.m[3])
    }

    /// Principal logarithm of a unimodular matrix, returned traceless.
    /// Valid away from trace −2.
    pub fn log_sl2(&self) -> Self {
        let half_t = self.trace() / 2.0;
        let dev = Self::new(self.m[0] - half_t, self.m[1], self.m[2], self.m[3] - half_t);
        // μ with cosh μ = t/2; factor μ / sinh μ.
        let w = half_t - C1;
        let factor = if w.norm() < 1e-8 {
            // μ² ≈ 2w − w²/3 near the identity; μ/sinh μ = 1 − μ²/6 + 7μ⁴/360.
            let mu2 = 2.0 * w - w * w / 3.0;
            C1 - mu2 / 6.0 + 7.0 * mu2 * mu2 / 360.0
        } else {
            let mu = half_t.acosh();
            mu / mu.sinh()
        };
        dev.scale(factor)
    }
}

/// The Cayley-type matrix `M = (1/2i)[[1, −i], [1, i]]` mapping sl(2,ℝ) to
/// su(1,1) by conjugation.
pub fn cayley_m() -> CMat2 {
    let f = C64::new(0.0, -0.5);
    CMat2::new(f, f * C64::new(0.0, -1.0), f, f * C64::new(0.0, 1.0))
}

/// `M · A · M⁻¹`.
pub fn to_su11(a: &Sl2Matrix) -> CMat2 {
    let m = cayley_m();
    m.mul(&a.to_complex()).mul(&m.inverse())
}

/// `M⁻¹ · A · M`, returning the real part (the input should lie in the image
/// of [`to_su11`]).
pub fn from_su11(a: &CMat2) -> Sl2Matrix {
    let m = cayley_m();
    m.inverse().mul(a).mul(&m).real_part()
}

/// Dense symmetric matrix eigen-decomposition.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column-major eigenvectors: `vectors[j*n + i]` is component i of
    /// eigenvector j.
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl SymEigen {
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Eigen-decomposition of a dense symmetric matrix given row-major.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<SymEigen> {
    assert_eq!(a.len(), n * n);
    // Work in a row-major V, following the classical tred2/tql2 layout.
    let mut v = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e, n);
    tql2(&mut v, &mut d, &mut e, n)?;
    Ok(pack(v, d, n))
}

/// Eigen-decomposition of a symmetric tridiagonal matrix.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<SymEigen> {
    let n = diag.len();
    assert!(off.len() + 1 == n || n == 0);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(off);
    // tql2 expects e shifted: e[i] couples i-1 and i.
    e.rotate_right(1);
    tql2(&mut v, &mut d, &mut e, n)?;
    Ok(pack(v, d, n))
}

fn pack(v: Vec<f64>, d: Vec<f64>, n: usize) -> SymEigen {
    // v is row-major with eigenvectors in columns and d sorted ascending.
    let mut vectors = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            vectors[j * n + i] = v[i * n + j];
        }
    }
    SymEigen { values: d, vectors, n }
}

/// Householder reduction to tridiagonal form (after the EISPACK routine).
fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    if n == 0 {
        return;
    }
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in j + 1..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on a tridiagonal matrix, accumulating into `v`.
fn tql2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let idx = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::EigenNoConvergence { index: l, iterations: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in l + 2..n {
                    d[i] -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * h;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // Selection sort of eigenvalues and vectors.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in i + 1..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                v.swap(idx(j, i), idx(j, k));
            }
        }
    }
    Ok(())
}

/// Number of eigenvalues `≤ e` of the symmetric tridiagonal matrix with the
/// given diagonal and off-diagonal, by counting negative pivots of
/// `T − e·I = LDLᵀ`.
pub fn sturm_count(diag: &[f64], off: &[f64], e: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - e - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            // Nudge away from an exact zero pivot; counts e as an eigenvalue
            // "at or below" e.
            q = -f64::EPSILON * (diag[i].abs() + off.get(i).map_or(0.0, |x| x.abs()) + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &CMat2, b: &CMat2, tol: f64) -> bool {
        a.sub(b).max_abs() < tol
    }

    #[test]
    fn su11_matches_the_sl2_parametrisation() {
        // sl(2,ℝ) element [[x, y+z], [y−z, −x]] goes to [[iz, x−iy],[x+iy, −iz]].
        let (x, y, z) = (0.3, -0.7, 1.1);
        let a = Sl2Matrix::new(x, y + z, y - z, -x);
        let s = to_su11(&a);
        let expect = CMat2::new(C64::new(0.0, z), C64::new(x, -y), C64::new(x, y), C64::new(0.0, -z));
        assert!(close(&s, &expect, 1e-14), "{s:?}");
        let back = from_su11(&s);
        assert!(back.sub(&a).frobenius() < 1e-14);
        assert!(close(&to_su11(&Sl2Matrix::IDENTITY), &CMat2::IDENTITY, 1e-15));
    }

    #[test]
    fn rotation_becomes_diagonal() {
        let r = to_su11(&Sl2Matrix::rotation(0.17));
        let w = 2.0 * PI * 0.17;
        let expect = CMat2::diag(C64::from_polar(1.0, -w), C64::from_polar(1.0, w));
        assert!(close(&r, &expect, 1e-14));
    }

    #[test]
    fn exp_log_round_trip() {
        let xs = [
            Sl2Matrix::new(0.1, 0.4, -0.7, -0.1),
            Sl2Matrix::new(0.9, 0.1, 0.2, -0.9),
            Sl2Matrix::new(1e-9, 3e-9, -2e-9, -1e-9),
        ];
        for x in xs {
            let e = x.to_complex().exp_sl2();
            assert!((e.det() - C1).norm() < 1e-14);
            let l = e.log_sl2();
            assert!(close(&l, &x.to_complex(), 1e-13), "{l:?} vs {x:?}");
        }
        let r = Sl2Matrix::rotation(0.1).to_complex().log_sl2();
        let gen = Sl2Matrix::new(0.0, -2.0 * PI * 0.1, 2.0 * PI * 0.1, 0.0).to_complex();
        assert!(close(&r, &gen, 1e-13));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Sl2Matrix::new(3.0, 0.0, 0.0, 1.0 / 3.0);
        assert!((a.norm() - 3.0).abs() < 1e-14);
        assert!((Sl2Matrix::rotation(0.3).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_directions() {
        let a = Sl2Matrix::new(4.0, 0.0, 0.0, 0.25);
        assert!((a.contracted_direction() - PI / 2.0).abs() < 1e-12);
        assert!(a.expanded_image_direction().abs() < 1e-12);
    }

    #[test]
    fn free_laplacian_eigenvalues() {
        let n = 41;
        let diag = vec![0.0; n];
        let off = vec![1.0; n - 1];
        let eig = tridiagonal_eigen(&diag, &off).unwrap();
        for (j, &ev) in eig.values.iter().enumerate() {
            let exact = -2.0 * (PI * (j + 1) as f64 / (n + 1) as f64).cos();
            assert!((ev - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_matches_tridiagonal_and_residual_small() {
        let n = 30;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { i as f64 * 0.1 } else { 0.0 };
            }
        }
        let eig = symmetric_eigen(&a, n).unwrap();
        for j in 0..n {
            let v = eig.vector(j);
            let mut r = 0.0f64;
            for i in 0..n {
                let s: f64 = (0..n).map(|k| a[i * n + k] * v[k]).sum();
                r = r.max((s - eig.values[j] * v[i]).abs());
            }
            assert!(r < 1e-12);
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sturm_matches_eigenvalues() {
        let diag: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let off = vec![1.0; 49];
        let eig = tridiagonal_eigen(&diag, &off).unwrap();
        for e in [-2.5, -1.0, 0.0, 0.3, 1.7, 3.5] {
            let c = eig.values.iter().filter(|&&x| x <= e).count();
            assert_eq!(sturm_count(&diag, &off, e), c);
        }
    }
}
