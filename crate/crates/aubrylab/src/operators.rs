//! Potentials, finite-box truncations of the Schrödinger operator `H_x` and
//! the long-range operator `L_θ`, their eigen-decompositions, spectral
//! measures, and the integrated density of states.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{for_each_box, l1, wrap01, Frequency};
use crate::cocycle::Cocycle;
use crate::error::{Error, Result};
use crate::linalg::{sturm_count, symmetric_eigen, tridiagonal_eigen, SymEigen};
use crate::par;

/// Largest admissible box dimension `(2N+1)^d`.
pub const MAX_BOX_DIM: usize = 20_000;

/// Real, even potential `V(x) = Σ_k V̂_k e^{2πi⟨k,x⟩}` with `V̂_{−k} = V̂_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialFourier {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, f64>,
    claimed_strip: f64,
}

impl PotentialFourier {
    /// Build from `(k, V̂_k)` pairs. A mode given without its mirror `−k` is
    /// mirrored; a pair given with different values is rejected.
    pub fn new<I>(dim: usize, entries: I, claimed_strip: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, f64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("potential dimension must be >= 1".into()));
        }
        let mut given: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (k, v) in entries {
            if k.len() != dim {
                return Err(Error::InvalidInput(format!("mode {k:?} has wrong dimension (want {dim})")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("coefficient at {k:?} is not finite")));
            }
            if let Some(old) = given.insert(k.clone(), v) {
                if old != v {
                    return Err(Error::InvalidInput(format!("mode {k:?} given twice")));
                }
            }
        }
        let mut coeffs = given.clone();
        for (k, &v) in &given {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            match given.get(&neg) {
                Some(&w) if (w - v).abs() > 1e-15 * v.abs().max(1.0) => {
                    return Err(Error::InvalidInput(format!(
                        "V̂ must satisfy V̂(-k) = V̂(k); mode {k:?} has {v} vs {w}"
                    )))
                }
                Some(_) => {}
                None => {
                    coeffs.insert(neg, v);
                }
            }
        }
        coeffs.retain(|_, v| *v != 0.0);
        Ok(Self { dim, coeffs, claimed_strip })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, coeffs: BTreeMap::new(), claimed_strip: f64::INFINITY }
    }

    /// `V(x) = Σ_i 2c·cos 2πx_i`, i.e. `V̂_{±e_i} = c`.
    pub fn cosine(coupling: f64, dim: usize) -> Self {
        let mut entries = Vec::new();
        for i in 0..dim {
            let mut k = vec![0; dim];
            k[i] = 1;
            entries.push((k, coupling));
        }
        Self::new(dim, entries, f64::INFINITY).expect("cosine potential")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn claimed_strip(&self) -> f64 {
        self.claimed_strip
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i64>, f64> {
        &self.coeffs
    }

    pub fn coeff(&self, k: &[i64]) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.coeff(&vec![0; self.dim])
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.values().map(|v| v.abs()).sum()
    }

    /// Largest `|k|₁` in the support.
    pub fn cutoff(&self) -> i64 {
        self.coeffs.keys().map(|k| l1(k)).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| {
                let ph: f64 = k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
                v * (2.0 * PI * ph).cos()
            })
            .sum()
    }

    /// Holomorphic extension at a complex point.
    pub fn eval_complex(&self, z: &[C64]) -> C64 {
        self.coeffs
            .iter()
            .map(|(k, v)| {
                let ph: C64 = k.iter().zip(z).map(|(&a, &b)| b * a as f64).sum();
                (C64::new(0.0, 2.0 * PI) * ph).exp() * *v
            })
            .sum()
    }

    /// Parse lines `k1 [k2 ... kd] value`; `#` starts a comment. An optional
    /// line `strip h` sets the claimed analyticity strip.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut entries = Vec::new();
        let mut strip = f64::INFINITY;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "strip" {
                strip = toks
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("line {}: bad strip", lineno + 1)))?;
                continue;
            }
            if toks.len() < 2 {
                return Err(Error::Parse(format!("line {}: need 'k1 [.. kd] value'", lineno + 1)));
            }
            let k: Vec<i64> = toks[..toks.len() - 1]
                .iter()
                .map(|s| s.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let v: f64 = toks[toks.len() - 1]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            match dim {
                None => dim = Some(k.len()),
                Some(d) if d != k.len() => {
                    return Err(Error::Parse(format!("line {}: inconsistent dimension", lineno + 1)))
                }
                _ => {}
            }
            entries.push((k, v));
        }
        let dim = dim.ok_or_else(|| Error::Parse("no coefficients found".into()))?;
        Self::new(dim, entries, strip)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.claimed_strip.is_finite() {
            s.push_str(&format!("strip {:?}\n", self.claimed_strip));
        }
        for (k, v) in &self.coeffs {
            let ks: Vec<String> = k.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("{} {:?}\n", ks.join(" "), v));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `H_x` on ℤ with phase `x ∈ 𝕋^d`.
    Schrodinger1d { x: Vec<f64> },
    /// `L_θ` on ℤ^d.
    Longrange { theta: f64 },
}

#[derive(Debug, Clone)]
pub enum Storage {
    Tridiagonal { diag: Vec<f64>, off: Vec<f64> },
    Dense { data: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    pub kind: OperatorKind,
    pub box_radius: usize,
    /// Lattice dimension of the box (1 for the Schrödinger side).
    pub lattice_dim: usize,
    pub sites: Vec<Vec<i64>>,
    pub storage: Storage,
    pub alpha: Frequency,
}

impl TruncatedOperator {
    pub fn size(&self) -> usize {
        self.sites.len()
    }

    /// Row index of a lattice site, if it lies in the box.
    pub fn site_index(&self, n: &[i64]) -> Option<usize> {
        let r = self.box_radius as i64;
        if n.len() != self.lattice_dim || n.iter().any(|&v| v.abs() > r) {
            return None;
        }
        let side = 2 * r + 1;
        Some(n.iter().fold(0i64, |acc, &v| acc * side + (v + r)) as usize)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Tridiagonal { diag, off } => {
                if i == j {
                    diag[i]
                } else if i + 1 == j {
                    off[i]
                } else if j + 1 == i {
                    off[j]
                } else {
                    0.0
                }
            }
            Storage::Dense { data } => data[i * self.size() + j],
        }
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.size();
        match &self.storage {
            Storage::Tridiagonal { diag, off } => (0..n)
                .map(|i| {
                    let mut s = diag[i] * v[i];
                    if i > 0 {
                        s += off[i - 1] * v[i - 1];
                    }
                    if i + 1 < n {
                        s += off[i] * v[i + 1];
                    }
                    s
                })
                .collect(),
            Storage::Dense { data } => (0..n).map(|i| (0..n).map(|j| data[i * n + j] * v[j]).sum()).collect(),
        }
    }

    /// Max-row-sum bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| match &self.storage {
                Storage::Tridiagonal { diag, off } => {
                    diag[i].abs() + if i > 0 { off[i - 1].abs() } else { 0.0 } + off.get(i).map_or(0.0, |x| x.abs())
                }
                Storage::Dense { data } => data[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum(),
            })
            .fold(0.0, f64::max)
    }
}

fn box_sites(d: usize, r: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for_each_box(d, r as i64, |k| out.push(k.to_vec()));
    out
}

/// Truncate `H_x` (tridiagonal) or `L_θ` (dense) to the box `|n|∞ ≤ N`
/// with Dirichlet boundary conditions.
pub fn build_truncation(
    v: &PotentialFourier,
    alpha: &Frequency,
    kind: OperatorKind,
    n_box: usize,
) -> Result<TruncatedOperator> {
    if n_box < 1 {
        return Err(Error::InvalidInput("box radius must be >= 1".into()));
    }
    if v.dim() != alpha.dim() {
        return Err(Error::InvalidInput("potential and frequency dimensions differ".into()));
    }
    let lattice_dim = match &kind {
        OperatorKind::Schrodinger1d { x } => {
            if x.len() != alpha.dim() {
                return Err(Error::InvalidInput("phase x has wrong dimension".into()));
            }
            1
        }
        OperatorKind::Longrange { .. } => alpha.dim(),
    };
    let side = 2 * n_box + 1;
    let size = (side as f64).powi(lattice_dim as i32);
    if size > MAX_BOX_DIM as f64 {
        let mb = if lattice_dim == 1 { size * 16.0 } else { size * size * 8.0 } / 1e6;
        return Err(Error::BoxTooLarge { dim: size as usize, megabytes: mb as usize });
    }
    let sites = box_sites(lattice_dim, n_box);
    let storage = match &kind {
        OperatorKind::Schrodinger1d { x } => {
            let diag = sites
                .iter()
                .map(|n| {
                    let p: Vec<f64> = x.iter().zip(alpha.components()).map(|(xi, ai)| xi + n[0] as f64 * ai).collect();
                    v.eval(&p)
                })
                .collect();
            Storage::Tridiagonal { diag, off: vec![1.0; side - 1] }
        }
        OperatorKind::Longrange { theta } => {
            let m = sites.len();
            let mut data = vec![0.0; m * m];
            let op = TruncatedOperator {
                kind: kind.clone(),
                box_radius: n_box,
                lattice_dim,
                sites: sites.clone(),
                storage: Storage::Dense { data: Vec::new() },
                alpha: alpha.clone(),
            };
            for (i, n) in sites.iter().enumerate() {
                data[i * m + i] = 2.0 * (2.0 * PI * (theta + alpha.pair(n))).cos();
                for (k, c) in v.coeffs() {
                    let target: Vec<i64> = n.iter().zip(k).map(|(a, b)| a - b).collect();
                    if let Some(j) = op.site_index(&target) {
                        data[i * m + j] += c;
                    }
                }
            }
            Storage::Dense { data }
        }
    };
    Ok(TruncatedOperator { kind, box_radius: n_box, lattice_dim, sites, storage, alpha: alpha.clone() })
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigen: SymEigen,
    /// Per eigenvector, the squared mass on the outer shell of the box.
    pub boundary_masses: Vec<f64>,
    pub sites: Vec<Vec<i64>>,
    pub box_radius: usize,
}

impl SpectralData {
    /// `|⟨δ_n, φ_j⟩|²` for every j.
    pub fn weights_at(&self, row: usize) -> Vec<f64> {
        (0..self.eigenvalues.len()).map(|j| self.eigen.vector(j)[row].powi(2)).collect()
    }

    pub fn boundary_mass(&self) -> f64 {
        self.boundary_masses.iter().copied().fold(0.0, f64::max)
    }
}

/// Full symmetric eigen-decomposition with a per-pair residual check.
pub fn eigensolve(op: &TruncatedOperator) -> Result<SpectralData> {
    let eigen = match &op.storage {
        Storage::Tridiagonal { diag, off } => tridiagonal_eigen(diag, off)?,
        Storage::Dense { data } => symmetric_eigen(data, op.size())?,
    };
    let scale = op.norm_bound().max(1.0);
    for j in 0..eigen.n {
        let v = eigen.vector(j);
        let mv = op.mat_vec(v);
        let res: f64 = mv.iter().zip(v).map(|(a, b)| (a - eigen.values[j] * b).powi(2)).sum::<f64>().sqrt();
        if res > 1e-10 * scale {
            return Err(Error::EigenNoConvergence { index: j, iterations: 0 });
        }
    }
    let r = op.box_radius as i64;
    let boundary_masses = (0..eigen.n)
        .map(|j| {
            let v = eigen.vector(j);
            op.sites
                .iter()
                .enumerate()
                .filter(|(_, n)| n.iter().any(|&c| c.abs() == r))
                .map(|(i, _)| v[i] * v[i])
                .sum()
        })
        .collect();
    Ok(SpectralData {
        eigenvalues: eigen.values.clone(),
        eigen,
        boundary_masses,
        sites: op.sites.clone(),
        box_radius: op.box_radius,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralMeasure {
    /// `(E_j, |⟨δ_n, φ_j⟩|²)`.
    pub atoms: Vec<(f64, f64)>,
    pub total: f64,
    /// Mass-weighted boundary mass of the contributing eigenvectors.
    pub boundary_mass: f64,
}

/// Spectral measure of `δ_n` for the truncated operator.
pub fn spectral_measure(op: &TruncatedOperator, site: &[i64]) -> Result<SpectralMeasure> {
    let row = op
        .site_index(site)
        .ok_or_else(|| Error::InvalidInput(format!("site {site:?} outside the box")))?;
    let sd = eigensolve(op)?;
    let w = sd.weights_at(row);
    let atoms: Vec<(f64, f64)> = sd.eigenvalues.iter().copied().zip(w.iter().copied()).collect();
    let total = w.iter().sum();
    let boundary_mass = w.iter().zip(&sd.boundary_masses).map(|(a, b)| a * b).sum();
    Ok(SpectralMeasure { atoms, total, boundary_mass })
}

fn orbit_samples(alpha: &Frequency, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..alpha.dim()).map(|_| rng.gen::<f64>()).collect();
    (0..samples)
        .map(|j| x0.iter().zip(alpha.components()).map(|(x, a)| wrap01(x + j as f64 * a)).collect())
        .collect()
}

/// IDS at several energies, sharing the Sturm setup per sample.
pub fn ids_many(
    v: &PotentialFourier,
    alpha: &Frequency,
    energies: &[f64],
    n_box: usize,
    x_samples: usize,
    seed: u64,
) -> Vec<f64> {
    let xs = orbit_samples(alpha, x_samples.max(1), seed);
    let side = 2 * n_box + 1;
    let counts: Vec<Vec<usize>> = par::map_indexed(xs.len(), |s| {
        let diag: Vec<f64> = (0..side)
            .map(|i| {
                let n = i as f64 - n_box as f64;
                let p: Vec<f64> = xs[s].iter().zip(alpha.components()).map(|(x, a)| x + n * a).collect();
                v.eval(&p)
            })
            .collect();
        let off = vec![1.0; side - 1];
        energies.iter().map(|&e| sturm_count(&diag, &off, e)).collect()
    });
    (0..energies.len())
        .map(|i| counts.iter().map(|c| c[i] as f64).sum::<f64>() / (counts.len() * side) as f64)
        .collect()
}

/// Integrated density of states `𝒩(E)` by Sturm counting on `H_x`
/// truncations, averaged along the orbit `x₀ + jα`.
pub fn ids(v: &PotentialFourier, alpha: &Frequency, e: f64, n_box: usize, x_samples: usize, seed: u64) -> f64 {
    ids_many(v, alpha, &[e], n_box, x_samples, seed)[0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdsEntry {
    pub energy: f64,
    pub ids: f64,
    pub rho: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdsReport {
    pub entries: Vec<IdsEntry>,
    pub max_defect: f64,
    pub tol: f64,
    pub pass: bool,
    pub failures: Vec<f64>,
}

/// Compare `𝒩(E)` with `1 − 2ρ(E)` on a grid of energies.
#[allow(clippy::too_many_arguments)]
pub fn ids_rotation_check(
    v: &PotentialFourier,
    alpha: &Frequency,
    energies: &[f64],
    n_box: usize,
    n_rot: usize,
    tol: f64,
    x_samples: usize,
    seed: u64,
) -> Result<IdsReport> {
    let n_vals = ids_many(v, alpha, energies, n_box, x_samples, seed);
    let x0 = vec![0.0; alpha.dim()];
    let rhos: Vec<Result<f64>> = par::map_indexed(energies.len(), |i| {
        let c = Cocycle::schrodinger(alpha.clone(), v.clone(), energies[i]);
        c.rotation_number(n_rot, &x0).map(|r| r.rho)
    });
    let mut entries = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        let rho = rhos[i].clone()?;
        entries.push(IdsEntry { energy: e, ids: n_vals[i], rho, defect: (n_vals[i] - (1.0 - 2.0 * rho)).abs() });
    }
    let max_defect = entries.iter().map(|e| e.defect).fold(0.0, f64::max);
    let failures = entries.iter().filter(|e| e.defect > tol).map(|e| e.energy).collect();
    Ok(IdsReport { entries, max_defect, tol, pass: max_defect <= tol, failures })
}

/// Versioned JSON form of a computed spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub schema_version: u32,
    pub kind: String,
    pub alpha: String,
    pub phase: Vec<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
}

impl SpectrumRecord {
    pub fn from_spectrum(op: &TruncatedOperator, sd: &SpectralData, weights_site: Option<&[i64]>) -> Self {
        let (kind, phase) = match &op.kind {
            OperatorKind::Schrodinger1d { x } => ("schrodinger1d".to_string(), x.clone()),
            OperatorKind::Longrange { theta } => ("longrange".to_string(), vec![*theta]),
        };
        let weights = weights_site.and_then(|s| op.site_index(s)).map(|row| sd.weights_at(row));
        Self {
            schema_version: 1,
            kind,
            alpha: op.alpha.literal(),
            phase,
            n: op.box_radius,
            eigenvalues: sd.eigenvalues.clone(),
            weights,
        }
    }
}

/// Hausdorff distance between two finite subsets of ℝ.
pub fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |x: &[f64], y: &[f64]| -> f64 {
        let mut ys = y.to_vec();
        ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
        x.iter()
            .map(|&v| {
                let i = ys.partition_point(|&w| w < v);
                let mut d = f64::INFINITY;
                if i < ys.len() {
                    d = d.min((ys[i] - v).abs());
                }
                if i > 0 {
                    d = d.min((ys[i - 1] - v).abs());
                }
                d
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}
