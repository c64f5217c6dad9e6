//! Energy inversion along a phase orbit and the R-measure built from the
//! dual eigenfunctions.
//!
//! For a phase `θ` and each site `m` of a box, the pipeline
//!
//! 1. finds the energy `E_m` with `ρ(E_m) = θ + ⟨m,α⟩` (folded into `[0,1/2]`),
//! 2. reduces the Schrödinger cocycle at `E_m` with [`kam_reduce`],
//! 3. builds the dual eigenvector `u_m` of `L_{θ+⟨m,α⟩}`.
//!
//! The R-measure at site `n` puts mass `|u_m(n − m)|²` at `E_m`. Sites whose
//! shifted phase is resonant, which land in a spectral gap, or whose
//! reduction does not converge are recorded with a reason and contribute
//! nothing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::arithmetic::{
    check_phase_dc, for_each_box, homogeneity_estimate, paper_sigma_bound, shifted_phase_params, torus_norm, DiophantineFreqParams,
    DiophantinePhaseParams, HomogeneityReport,
};
use crate::cocycle::Cocycle;
use crate::duality::{aligned_distance, eigenfunction_from_conjugation, verify_long_range_eigen, EigenPair};
use crate::error::{Error, Result};
use crate::linalg::Sl2Matrix;
use crate::operators::PotentialFourier;
use crate::reducibility::{diagonalize_sl2, kam_reduce, KamConfig, KamReduction};
use crate::Frequency;

/// Fold a phase into `[0, 1/2]`, the range of Schrödinger rotation numbers.
pub fn fold_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(1.0);
    if t > 0.5 {
        1.0 - t
    } else {
        t
    }
}

/// Settings for the rotation-number bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySolverConfig {
    /// Orbit length for each rotation-number estimate.
    pub n_rot: usize,
    /// Accepted rotation-number error of a bisection point.
    pub tol_rho: f64,
    /// Width at which an energy bracket is considered resolved.
    pub tol_energy: f64,
}

impl Default for EnergySolverConfig {
    fn default() -> Self {
        Self { n_rot: 20_000, tol_rho: 1e-4, tol_energy: 1e-10 }
    }
}

impl EnergySolverConfig {
    /// Energy width of the set `|ρ(E) − t| ≤ tol_rho` inside a band, using
    /// the free-Laplacian slope `|dE/dρ| ≤ 4π` as the scale.
    pub fn band_resolution(&self) -> f64 {
        (2.0 * self.tol_rho * 4.0 * PI).max(self.tol_energy)
    }

    /// Plateaus wider than this are reported as gaps.
    pub fn gap_threshold(&self) -> f64 {
        10.0 * self.band_resolution()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rot < 100 || !(self.tol_rho > 0.0) || !(self.tol_energy > 0.0) {
            return Err(Error::InvalidInput("energy solver needs n_rot >= 100 and positive tolerances".into()));
        }
        Ok(())
    }
}

/// Result of [`energy_of_phase`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyOfPhase {
    pub theta: f64,
    /// Folded target rotation number.
    pub target: f64,
    /// One energy, or the two edges of a gap when `gap_flag` is set.
    pub values: Vec<f64>,
    pub gap_flag: bool,
    /// Energies bracketing `|ρ(E) − target| ≤ tol_rho`.
    pub plateau: (f64, f64),
}

/// Energy interval that contains the spectrum of `Δ + V`.
pub fn spectrum_bracket(v: &PotentialFourier) -> (f64, f64) {
    let r = 2.0 + v.l1_norm() + 0.1;
    (-r, r)
}

fn schrodinger_rho(alpha: &Frequency, v: &PotentialFourier, e: f64, n_rot: usize) -> Result<f64> {
    let c = Cocycle::schrodinger(alpha.clone(), v.clone(), e);
    Ok(fold_phase(c.rotation_number(n_rot, &vec![0.0; alpha.dim()])?.rho))
}

/// Smallest `E` in `[lo, hi]` with `pred(E)`, for `pred` false then true.
fn first_true(mut lo: f64, mut hi: f64, tol: f64, mut pred: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Energies with rotation number `fold(θ)`, by bisection on the decreasing
/// map `E ↦ ρ(E)`. A plateau wider than [`EnergySolverConfig::gap_threshold`]
/// is a gap: the gap flag is set and both edges are returned.
pub fn energy_of_phase(theta: f64, v: &PotentialFourier, alpha: &Frequency, cfg: &EnergySolverConfig) -> Result<EnergyOfPhase> {
    cfg.validate()?;
    if v.dim() != alpha.dim() {
        return Err(Error::InvalidInput("potential and frequency dimensions differ".into()));
    }
    let t = fold_phase(theta);
    let (lo, hi) = spectrum_bracket(v);
    let rho = |e: f64| schrodinger_rho(alpha, v, e, cfg.n_rot);
    let e_lo = first_true(lo, hi, cfg.tol_energy, |e| Ok(rho(e)? <= t + cfg.tol_rho))?;
    let e_hi = first_true(e_lo, hi, cfg.tol_energy, |e| Ok(rho(e)? < t - cfg.tol_rho))?;
    // A plateau reaching the bracket lies outside the spectrum: its inner
    // end is the spectral edge, not a gap.
    let edge = 2.0 * cfg.tol_energy;
    let values = if e_lo - lo <= edge {
        vec![e_hi]
    } else if hi - e_hi <= edge {
        vec![e_lo]
    } else if e_hi - e_lo > cfg.gap_threshold() {
        vec![e_lo, e_hi]
    } else {
        vec![0.5 * (e_lo + e_hi)]
    };
    let gap_flag = values.len() == 2;
    Ok(EnergyOfPhase { theta, target: t, values, gap_flag, plateau: (e_lo, e_hi) })
}

/// An energy refined so that the reduced constant rotates by exactly the
/// target, together with the reduction at that energy.
#[derive(Debug, Clone)]
pub struct RefinedEnergy {
    pub energy: f64,
    pub reduction: KamReduction,
    /// `|σ − target|` at the returned energy.
    pub rho_error: f64,
    pub steps: usize,
}

/// Tolerance on `|σ(E) − target|` in [`refine_energy`].
pub const RHO_MATCH_TOL: f64 = 1e-13;

/// Secant refinement of `σ(E) = target`, where `σ(E)` is the rotation of
/// the constant returned by [`kam_reduce`] at energy `E`.
pub fn refine_energy(alpha: &Frequency, v: &PotentialFourier, target: f64, e0: f64, kam: &KamConfig) -> Result<RefinedEnergy> {
    let e_free = 2.0 * (2.0 * PI * target).cos();
    let a0 = Sl2Matrix::schrodinger(e_free);
    let reduce = |e: f64| kam_reduce(&Cocycle::schrodinger(alpha.clone(), v.clone(), e), a0, None, kam);
    let mut e = e0;
    let mut red = reduce(e)?;
    let mut err = red.rho - target;
    // dσ/dE for the free Laplacian, used until a secant is available.
    let mut slope = -1.0 / (4.0 * PI * (2.0 * PI * target).sin().abs().max(1e-3));
    let mut steps = 0;
    while err.abs() > RHO_MATCH_TOL {
        if steps == 16 {
            return Err(Error::NoConvergence { history: vec![err.abs()] });
        }
        let e_next = e - err / slope;
        if e_next == e {
            break;
        }
        let red_next = reduce(e_next)?;
        let err_next = red_next.rho - target;
        if err_next != err {
            slope = (err_next - err) / (e_next - e);
        }
        e = e_next;
        red = red_next;
        err = err_next;
        steps += 1;
    }
    if err.abs() > 1e3 * RHO_MATCH_TOL {
        return Err(Error::NoConvergence { history: vec![err.abs()] });
    }
    Ok(RefinedEnergy { energy: e, reduction: red, rho_error: err.abs(), steps })
}

/// Settings for [`enumerate_eigensystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kam: KamConfig,
    pub energy: EnergySolverConfig,
    /// Phase class of the base phase; shifted per site.
    pub phase_params: DiophantinePhaseParams,
}

impl PipelineConfig {
    /// Defaults for dimension `d`: the phase class is 𝒜_γ with γ = 0.1,
    /// τ = 1, scanned over the modes the KAM solver can reach.
    pub fn for_dim(d: usize) -> Self {
        let kam = KamConfig::for_dim(d);
        let phase_params = DiophantinePhaseParams::localization_class(0.1, 1.0, d, kam.max_cutoff as i64);
        Self { kam, energy: EnergySolverConfig::default(), phase_params }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteStatus {
    Ok,
    Resonant,
    Gap,
    NonConvergent,
    Failed,
}

/// Outcome of the pipeline at one site.
#[derive(Debug, Clone)]
pub struct SiteResult {
    pub m: Vec<i64>,
    pub theta_m: f64,
    pub status: SiteStatus,
    pub detail: String,
    pub energy: Option<f64>,
    pub eigen: Option<EigenPair>,
    pub kam_iterations: usize,
    pub kam_residual: Option<f64>,
    pub convergence_order: Option<f64>,
    /// `‖(L_{θ_m} − E_m)u_m‖` on the inner half box.
    pub long_range_residual: Option<f64>,
}

impl SiteResult {
    fn failed(m: &[i64], theta_m: f64, status: SiteStatus, detail: String) -> Self {
        Self {
            m: m.to_vec(),
            theta_m,
            status,
            detail,
            energy: None,
            eigen: None,
            kam_iterations: 0,
            kam_residual: None,
            convergence_order: None,
            long_range_residual: None,
        }
    }
}

fn classify(e: &Error) -> SiteStatus {
    match e {
        Error::Resonance { .. } => SiteStatus::Resonant,
        Error::NoConvergence { .. } | Error::PerturbationTooLarge { .. } | Error::NotElliptic { .. } => SiteStatus::NonConvergent,
        _ => SiteStatus::Failed,
    }
}

/// Runs the pipeline at one shifted phase.
pub fn solve_site(theta: f64, m: &[i64], v: &PotentialFourier, alpha: &Frequency, cfg: &PipelineConfig) -> SiteResult {
    let theta_m = (theta + alpha.pair(m)).rem_euclid(1.0);
    let params = shifted_phase_params(&cfg.phase_params, m);
    let dc = check_phase_dc(theta_m, alpha, &params);
    if !dc.holds {
        let detail = format!("2θ_m is within the phase class margin of <k,α> at k = {:?}", dc.worst);
        return SiteResult::failed(m, theta_m, SiteStatus::Resonant, detail);
    }
    let eop = match energy_of_phase(theta_m, v, alpha, &cfg.energy) {
        Ok(x) => x,
        Err(e) => return SiteResult::failed(m, theta_m, classify(&e), e.to_string()),
    };
    if eop.gap_flag {
        let detail = format!("rotation number plateau [{:.6}, {:.6}]", eop.values[0], eop.values[1]);
        return SiteResult::failed(m, theta_m, SiteStatus::Gap, detail);
    }
    let refined = match refine_energy(alpha, v, eop.target, eop.values[0], &cfg.kam) {
        Ok(x) => x,
        Err(e) => return SiteResult::failed(m, theta_m, classify(&e), e.to_string()),
    };
    let red = &refined.reduction;
    let sigma = red.rho;
    let rho_a = if torus_norm(sigma - theta_m) <= torus_norm(sigma + theta_m) { sigma } else { -sigma };
    let eigen = diagonalize_sl2(&red.constant, rho_a, params.gamma, params.tau_prime).and_then(|u| {
        eigenfunction_from_conjugation(&red.conjugation, &u, rho_a, alpha, refined.energy, cfg.kam.divisor_floor)
    });
    let mut out = SiteResult {
        m: m.to_vec(),
        theta_m,
        status: SiteStatus::Ok,
        detail: String::new(),
        energy: Some(refined.energy),
        eigen: None,
        kam_iterations: red.iterations,
        kam_residual: Some(red.residual),
        convergence_order: red.convergence_order,
        long_range_residual: None,
    };
    match eigen {
        Ok(u) => {
            out.long_range_residual = Some(verify_long_range_eigen(&u, v, alpha, theta_m));
            out.eigen = Some(u);
        }
        Err(e) => {
            out.status = classify(&e);
            out.detail = e.to_string();
        }
    }
    out
}

/// Pipeline results over the box `|m|∞ ≤ radius`.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub theta: f64,
    pub radius: usize,
    pub sites: Vec<SiteResult>,
}

impl Eigensystem {
    pub fn successes(&self) -> impl Iterator<Item = &SiteResult> {
        self.sites.iter().filter(|s| s.status == SiteStatus::Ok)
    }

    pub fn success_rate(&self) -> f64 {
        self.successes().count() as f64 / self.sites.len().max(1) as f64
    }

    /// Sites that failed with `status`.
    pub fn with_status(&self, status: SiteStatus) -> Vec<Vec<i64>> {
        self.sites.iter().filter(|s| s.status == status).map(|s| s.m.clone()).collect()
    }

    pub fn site(&self, m: &[i64]) -> Option<&SiteResult> {
        self.sites.iter().find(|s| s.m == m)
    }
}

/// Run [`solve_site`] for every `m` with `|m|∞ ≤ radius`.
pub fn enumerate_eigensystem(theta: f64, v: &PotentialFourier, alpha: &Frequency, radius: usize, cfg: &PipelineConfig) -> Result<Eigensystem> {
    if v.dim() != alpha.dim() {
        return Err(Error::InvalidInput("potential and frequency dimensions differ".into()));
    }
    cfg.kam.validate()?;
    cfg.energy.validate()?;
    alpha.check_independence(cfg.kam.max_cutoff as i64)?;
    let mut ms = Vec::new();
    for_each_box(alpha.dim(), radius as i64, |m| ms.push(m.to_vec()));
    let sites = crate::par::map_indexed(ms.len(), |i| solve_site(theta, &ms[i], v, alpha, cfg));
    Ok(Eigensystem { theta, radius, sites })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RMeasureAtom {
    pub m: Vec<i64>,
    pub energy: f64,
    pub weight: f64,
}

/// Atoms of the R-measure at one site, sorted by energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RMeasure {
    pub theta: f64,
    pub site: Vec<i64>,
    pub atoms: Vec<RMeasureAtom>,
    pub total: f64,
    pub window: Option<(f64, f64)>,
}

impl RMeasure {
    /// Mass of `(−∞, e]`.
    pub fn mass_below(&self, e: f64) -> f64 {
        self.atoms.iter().filter(|a| a.energy <= e).map(|a| a.weight).sum()
    }

    /// CSV with header `m,energy,weight`; multi-index entries joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,energy,weight\n");
        for a in &self.atoms {
            let m: Vec<String> = a.m.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("{},{:.17e},{:.17e}\n", m.join(";"), a.energy, a.weight));
        }
        s
    }
}

fn linf(m: &[i64]) -> usize {
    m.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0)
}

/// The R-measure at site `n`, restricted to atoms with energies in `window`
/// (closed) and sites `|m|∞ ≤ truncation` when given.
pub fn r_measure(sys: &Eigensystem, n: &[i64], window: Option<(f64, f64)>, truncation: Option<usize>) -> RMeasure {
    let mut atoms: Vec<RMeasureAtom> = sys
        .successes()
        .filter(|s| truncation.map_or(true, |t| linf(&s.m) <= t))
        .filter_map(|s| {
            let (u, e) = (s.eigen.as_ref()?, s.energy?);
            if let Some((lo, hi)) = window {
                if e < lo || e > hi {
                    return None;
                }
            }
            let k: Vec<i64> = n.iter().zip(&s.m).map(|(a, b)| a - b).collect();
            Some(RMeasureAtom { m: s.m.clone(), energy: e, weight: u.get(&k).norm_sqr() })
        })
        .collect();
    atoms.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let total = atoms.iter().map(|a| a.weight).sum();
    RMeasure { theta: sys.theta, site: n.to_vec(), atoms, total, window }
}

/// Tail masses `ν(ℰ ∖ 𝒯_N ℰ)` and their decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    /// `(N, mass of atoms with |m|∞ > N)`.
    pub tails: Vec<(usize, f64)>,
    /// Fitted rate `r` in `tail(N) ≈ C e^{−rN}`.
    pub rate: Option<f64>,
    /// Mass missing from the enumerated box: failed sites and truncation.
    pub deficit: f64,
    pub epsilon: f64,
    /// Smallest listed `N` from which every listed tail is at most `epsilon`.
    pub n0: Option<usize>,
    /// Shape `Σ_{j>N} #{|k|₁ = j} e^{−πjh}` for comparison with `tails`.
    pub predicted_shape: Vec<f64>,
    pub strip: f64,
}

fn l1_sphere(d: usize, j: usize) -> f64 {
    let mut count = 0usize;
    for_each_box(d, j as i64, |k| {
        if k.iter().map(|v| v.unsigned_abs() as usize).sum::<usize>() == j {
            count += 1;
        }
    });
    count as f64
}

/// Tail masses of the R-measure at `n` for each `N` in `ns`.
pub fn tail_check(sys: &Eigensystem, n: &[i64], ns: &[usize], epsilon: f64, strip: f64) -> TailReport {
    let full = r_measure(sys, n, None, None);
    let tails: Vec<(usize, f64)> = ns
        .iter()
        .map(|&nn| (nn, full.atoms.iter().filter(|a| linf(&a.m) > nn).map(|a| a.weight).sum()))
        .collect();
    let pts: Vec<(f64, f64)> = tails.iter().filter(|t| t.1 > 0.0).map(|&(nn, t)| (nn as f64, t.ln())).collect();
    let rate = (pts.len() >= 2).then(|| {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    });
    let n0 = (0..tails.len()).find(|&i| tails[i..].iter().all(|t| t.1 <= epsilon)).map(|i| tails[i].0);
    let d = n.len();
    let predicted_shape = ns
        .iter()
        .map(|&nn| (nn + 1..nn + 200).map(|j| l1_sphere(d.min(2), j).max(1.0) * (-PI * j as f64 * strip).exp()).sum())
        .collect();
    TailReport { tails, rate, deficit: 1.0 - full.total, epsilon, n0, predicted_shape, strip }
}

/// Comparison of two eigensystems at nearby phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub theta_a: f64,
    pub theta_b: f64,
    pub truncation: usize,
    /// `|ν_a(𝒯_N) − ν_b(𝒯_N)|` over all energies.
    pub full_discrepancy: f64,
    /// Energy cut `E*` of the windowed comparison.
    pub energy_cut: f64,
    /// `|ν_a((−∞,E*] ∩ 𝒯_N) − ν_b((−∞,E*] ∩ 𝒯_N)|`.
    pub window_discrepancy: f64,
    /// Phase-aligned `ℓ²` distance `‖u_m(θ_a) − u_m(θ_b)‖` per site.
    pub distances: Vec<(Vec<i64>, f64)>,
    pub max_distance: f64,
    /// Sites that succeeded in one system only.
    pub mismatches: Vec<Vec<i64>>,
}

/// Midpoint of the widest spacing between consecutive atom energies in the
/// middle half of the spectrum. Small phase moves do not carry atoms across it.
pub fn energy_cut(measure: &RMeasure) -> f64 {
    let es: Vec<f64> = measure.atoms.iter().map(|a| a.energy).collect();
    if es.len() < 2 {
        return es.first().copied().unwrap_or(0.0);
    }
    let (lo, hi) = (es.len() / 4, (3 * es.len() / 4).max(es.len() / 4 + 1).min(es.len() - 1));
    let mut best = (0.0, 0.5 * (es[0] + es[1]));
    for i in lo..hi {
        let gap = es[i + 1] - es[i];
        if gap > best.0 {
            best = (gap, 0.5 * (es[i] + es[i + 1]));
        }
    }
    best.1
}

pub fn continuity_check(a: &Eigensystem, b: &Eigensystem, n: &[i64], truncation: usize) -> ContinuityReport {
    let ma = r_measure(a, n, None, Some(truncation));
    let mb = r_measure(b, n, None, Some(truncation));
    let cut = energy_cut(&ma);
    let mut distances = Vec::new();
    let mut mismatches = Vec::new();
    for sa in a.sites.iter().filter(|s| linf(&s.m) <= truncation) {
        match (sa.eigen.as_ref(), b.site(&sa.m).and_then(|sb| sb.eigen.as_ref())) {
            (Some(ua), Some(ub)) => distances.push((sa.m.clone(), aligned_distance(ua, ub))),
            (None, None) => {}
            _ => mismatches.push(sa.m.clone()),
        }
    }
    let max_distance = distances.iter().map(|d| d.1).fold(0.0, f64::max);
    ContinuityReport {
        theta_a: a.theta,
        theta_b: b.theta,
        truncation,
        full_discrepancy: (ma.total - mb.total).abs(),
        energy_cut: cut,
        window_discrepancy: (ma.mass_below(cut) - mb.mass_below(cut)).abs(),
        distances,
        max_distance,
        mismatches,
    }
}

/// A phase `θ + δ(1 + j/1000)` in the Diophantine class, first `j ≥ 0`
/// that passes, trying at most 50 values.
pub fn paired_phase(theta: f64, delta: f64, alpha: &Frequency, params: &DiophantinePhaseParams) -> Option<f64> {
    (0..50)
        .map(|j| (theta + delta * (1.0 + j as f64 / 1000.0)).rem_euclid(1.0))
        .find(|&t| check_phase_dc(t, alpha, params).holds)
}

/// Discrepancies that never grow as `δ` shrinks, up to an absolute
/// `floor` that absorbs rounding.
pub fn monotone_with_floor(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + floor || w[1] <= floor)
}

/// Version of the [`CriteriaReport`] JSON layout.
pub const CRITERIA_SCHEMA_VERSION: u32 = 1;

/// Everything [`run_criteria`] needs besides the operator and the phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaConfig {
    pub pipeline: PipelineConfig,
    /// Enumeration box radius; must be at least the largest tail `N`.
    pub radius: usize,
    pub tail_ns: Vec<usize>,
    pub epsilon: f64,
    /// Strip `h̃` of the tail shape comparison.
    pub strip: f64,
    /// Phase offsets for the continuity pairs, largest first.
    pub continuity_deltas: Vec<f64>,
    pub continuity_truncation: usize,
    pub freq_params: DiophantineFreqParams,
    /// Homogeneity half-width; `None` uses the paper bound.
    pub homogeneity_sigma: Option<f64>,
    pub homogeneity_k_cut: usize,
    /// Recorded for reproducibility; the pipeline itself is deterministic.
    pub seed: u64,
}

impl CriteriaConfig {
    pub fn for_dim(d: usize) -> Self {
        let pipeline = PipelineConfig::for_dim(d);
        let strip = *pipeline.kam.strip_schedule.last().unwrap();
        let (radius, tail_ns, truncation) = if d == 1 { (25, vec![5, 10, 15, 20], 10) } else { (6, vec![1, 2, 3, 4, 5], 3) };
        let freq_params = if d == 1 {
            DiophantineFreqParams { kappa: 0.3, tau: 1.0, scan_bound: DiophantineFreqParams::default_scan(1) }
        } else {
            DiophantineFreqParams { kappa: 0.01, tau: d as f64, scan_bound: DiophantineFreqParams::default_scan(d) }
        };
        Self {
            pipeline,
            radius,
            tail_ns,
            epsilon: 1e-3,
            strip,
            continuity_deltas: vec![1e-5, 1e-6, 1e-7],
            continuity_truncation: truncation,
            freq_params,
            homogeneity_sigma: None,
            homogeneity_k_cut: if d == 1 { 200 } else { 20 },
            seed: 0,
        }
    }
}

/// Criteria summary for one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub theta: f64,
    pub site: Vec<i64>,
    pub radius: usize,
    pub total_mass: f64,
    pub success_rate: f64,
    pub failures: Vec<(Vec<i64>, SiteStatus, String)>,
    pub tail: TailReport,
    pub continuity: Vec<ContinuityReport>,
    pub homogeneity: Option<HomogeneityReport>,
    pub uniformity_pass: bool,
    pub continuity_pass: bool,
    pub density_pass: Option<bool>,
}

/// Assemble the uniformity, continuity and density verdicts.
///
/// Uniformity needs a tail threshold `N₀`. Continuity needs windowed
/// discrepancies that shrink with `δ` (up to `1e−13`) and end at most
/// `1e−3`. Density needs a homogeneity ratio of at least one half.
pub fn criteria_report(
    sys: &Eigensystem,
    n: &[i64],
    tail: TailReport,
    continuity: Vec<ContinuityReport>,
    homogeneity: Option<HomogeneityReport>,
) -> CriteriaReport {
    let full = r_measure(sys, n, None, None);
    let failures = sys
        .sites
        .iter()
        .filter(|s| s.status != SiteStatus::Ok)
        .map(|s| (s.m.clone(), s.status, s.detail.clone()))
        .collect();
    let disc: Vec<f64> = continuity.iter().map(|c| c.window_discrepancy).collect();
    let continuity_pass =
        !continuity.is_empty() && monotone_with_floor(&disc, 1e-13) && disc.last().is_some_and(|&x| x <= 1e-3);
    let density_pass = homogeneity.as_ref().map(|h| h.ratio >= 0.5);
    CriteriaReport {
        theta: sys.theta,
        site: n.to_vec(),
        radius: sys.radius,
        total_mass: full.total,
        success_rate: sys.success_rate(),
        failures,
        uniformity_pass: tail.n0.is_some(),
        tail,
        continuity,
        homogeneity,
        continuity_pass,
        density_pass,
    }
}

/// A full criteria run with its configuration and the atoms at site `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaRun {
    pub schema_version: u32,
    pub config: CriteriaConfig,
    pub report: CriteriaReport,
    pub measure: RMeasure,
}

/// Enumerate at `θ` and at the continuity neighbours, then assemble the
/// criteria. Homogeneity failures (for example a cutoff that is too small)
/// leave the density verdict empty rather than aborting the run.
pub fn run_criteria(theta: f64, v: &PotentialFourier, alpha: &Frequency, n: &[i64], cfg: &CriteriaConfig) -> Result<CriteriaRun> {
    if n.len() != alpha.dim() {
        return Err(Error::InvalidInput("site dimension differs from frequency dimension".into()));
    }
    if cfg.tail_ns.iter().any(|&t| t > cfg.radius) || cfg.continuity_truncation > cfg.radius {
        return Err(Error::InvalidInput("tail and continuity truncations must not exceed the enumeration radius".into()));
    }
    let sys = enumerate_eigensystem(theta, v, alpha, cfg.radius, &cfg.pipeline)?;
    let tail = tail_check(&sys, n, &cfg.tail_ns, cfg.epsilon, cfg.strip);
    let base = Eigensystem {
        theta,
        radius: cfg.continuity_truncation,
        sites: sys.sites.iter().filter(|s| linf(&s.m) <= cfg.continuity_truncation).cloned().collect(),
    };
    let mut continuity = Vec::new();
    for &delta in &cfg.continuity_deltas {
        if let Some(tb) = paired_phase(theta, delta, alpha, &cfg.pipeline.phase_params) {
            let other = enumerate_eigensystem(tb, v, alpha, cfg.continuity_truncation, &cfg.pipeline)?;
            continuity.push(continuity_check(&base, &other, n, cfg.continuity_truncation));
        }
    }
    let sigma = cfg.homogeneity_sigma.unwrap_or_else(|| 0.5 * paper_sigma_bound(&cfg.freq_params, &cfg.pipeline.phase_params));
    let homogeneity =
        homogeneity_estimate(alpha, &cfg.freq_params, &cfg.pipeline.phase_params, theta, sigma, cfg.homogeneity_k_cut).ok();
    let report = criteria_report(&sys, n, tail, continuity, homogeneity);
    let measure = r_measure(&sys, n, None, None);
    Ok(CriteriaRun { schema_version: CRITERIA_SCHEMA_VERSION, config: cfg.clone(), report, measure })
}
