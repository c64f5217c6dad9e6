//! Experiment configuration: TOML in, fully resolved TOML/JSON out.
//!
//! Every optional field is filled during [`ExperimentConfig::resolve`] so
//! that a persisted record states every tolerance it ran with.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use aubrylab::arithmetic::{sample_phases, DiophantineFreqParams, DiophantinePhaseParams};
use aubrylab::reducibility::KamConfig;
use aubrylab::rmeasure::{spectrum_bracket, CriteriaConfig, EnergySolverConfig, PipelineConfig};
use aubrylab::{Frequency, PotentialFourier};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Frequency literal such as `golden` or `golden, silver`.
    pub frequency: String,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub phase: PhaseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub spectral: SpectralParams,
    #[serde(default)]
    pub reduce: ReduceParams,
    #[serde(default)]
    pub duality: DualityParams,
    #[serde(default)]
    pub rmeasure: RMeasureParams,
    #[serde(default)]
    pub homogeneity: HomogeneityParams,
    #[serde(default)]
    pub census: CensusParams,
}

fn default_output_dir() -> String {
    "results".into()
}

/// Exactly one of the three sources.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    /// `V(x) = 2c Σ_a cos 2πx_a`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    /// Coefficient lines `k1 .. kd value`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Dimension for `cosine`; defaults to the frequency dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSampler {
    pub count: usize,
    pub gamma: f64,
    pub tau: f64,
    pub scan_bound: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<PhaseSampler>,
}

impl Default for PhaseSpec {
    fn default() -> Self {
        Self { values: None, sample: Some(PhaseSampler { count: 1, gamma: 0.1, tau: 1.0, scan_bound: 30 }) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralParams {
    pub energies: Option<Vec<f64>>,
    pub energy_count: usize,
    pub lyapunov_n: usize,
    pub x_samples: usize,
    pub n_rot: usize,
    pub ids_box: usize,
    pub ids_tol: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self { energies: None, energy_count: 20, lyapunov_n: 100_000, x_samples: 4, n_rot: 100_000, ids_box: 2000, ids_tol: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceParams {
    pub kam: Option<KamConfig>,
    pub energy: EnergySolverConfig,
    pub residual_tol: f64,
    pub n_rot_check: usize,
}

impl Default for ReduceParams {
    fn default() -> Self {
        Self { kam: None, energy: EnergySolverConfig::default(), residual_tol: 1e-10, n_rot_check: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityParams {
    pub residual_tol: f64,
    pub bloch_tol: f64,
    pub decay_inner_fraction: f64,
    /// Required decay rate as a fraction of `2πh̃`.
    pub decay_rate_factor: f64,
    pub bloch_points: usize,
}

impl Default for DualityParams {
    fn default() -> Self {
        Self { residual_tol: 1e-8, bloch_tol: 1e-6, decay_inner_fraction: 0.5, decay_rate_factor: 0.9, bloch_points: 16 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RMeasureParams {
    pub criteria: Option<CriteriaConfig>,
    pub site: Option<Vec<i64>>,
    pub completeness_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogeneityParams {
    pub count: usize,
    pub phase_class: Option<DiophantinePhaseParams>,
    pub freq: Option<DiophantineFreqParams>,
    /// `None` uses half the paper bound on σ.
    pub sigma: Option<f64>,
    pub k_cut: Option<usize>,
}

impl Default for HomogeneityParams {
    fn default() -> Self {
        Self { count: 20, phase_class: None, freq: None, sigma: None, k_cut: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusParams {
    pub couplings: Vec<f64>,
    pub radius: usize,
}

impl Default for CensusParams {
    fn default() -> Self {
        Self { couplings: vec![0.05, 0.1, 0.2], radius: 4 }
    }
}

/// Runtime objects built from a resolved configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub alpha: Frequency,
    pub potential: PotentialFourier,
    pub phases: Vec<f64>,
}

fn check(cond: bool, key: &str, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        bail!("invalid config key `{key}`: {msg}")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(file) = &cfg.potential.file {
            let p = Path::new(file);
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.potential.file = Some(dir.join(p).to_string_lossy().into_owned());
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Validate, fill every default, and build the runtime objects.
    /// A potential file is inlined so the result is self-contained.
    pub fn resolve(&mut self) -> Result<Resolved> {
        let alpha = Frequency::parse(&self.frequency).map_err(|e| anyhow!("invalid config key `frequency`: {e}"))?;
        let d = alpha.dim();

        let p = &mut self.potential;
        let sources = [p.cosine.is_some(), p.inline.is_some(), p.file.is_some()].iter().filter(|&&b| b).count();
        check(sources == 1, "potential", "give exactly one of `cosine`, `inline`, `file`")?;
        if let Some(file) = p.file.take() {
            let text = std::fs::read_to_string(&file).with_context(|| format!("invalid config key `potential.file`: reading {file}"))?;
            p.inline = Some(text);
        }
        let potential = if let Some(c) = p.cosine {
            check(c.is_finite(), "potential.cosine", "must be finite")?;
            let pd = *p.dim.get_or_insert(d);
            PotentialFourier::cosine(c, pd)
        } else {
            let text = p.inline.as_deref().unwrap_or_default();
            PotentialFourier::parse(text).map_err(|e| anyhow!("invalid config key `potential.inline`: {e}"))?
        };
        check(potential.dim() == d, "potential", "dimension differs from the frequency dimension")?;

        if let Some(s) = &self.phase.sample {
            check(s.gamma > 0.0 && s.tau > 0.0, "phase.sample", "gamma and tau must be positive")?;
            check(s.scan_bound >= 1, "phase.sample.scan_bound", "must be >= 1")?;
        }
        if self.phase.values.is_none() {
            let s = self.phase.sample.as_ref().ok_or_else(|| anyhow!("invalid config key `phase`: give `values` or `sample`"))?;
            let params = DiophantinePhaseParams::localization_class(s.gamma, s.tau, d, s.scan_bound);
            let vals = sample_phases(&alpha, &params, s.count, self.seed);
            check(vals.len() == s.count, "phase.sample", "could not draw enough admissible phases")?;
            self.phase.values = Some(vals);
        }
        let phases = self.phase.values.clone().unwrap();
        check(!phases.is_empty(), "phase.values", "must not be empty")?;
        check(phases.iter().all(|t| t.is_finite()), "phase.values", "must be finite")?;

        let sp = &mut self.spectral;
        check(sp.n_rot >= 100, "spectral.n_rot", "must be >= 100")?;
        check(sp.lyapunov_n >= 10, "spectral.lyapunov_n", "must be >= 10")?;
        check(sp.x_samples >= 1, "spectral.x_samples", "must be >= 1")?;
        check(sp.ids_box >= 1, "spectral.ids_box", "must be >= 1")?;
        check(sp.ids_tol > 0.0, "spectral.ids_tol", "must be positive")?;
        if sp.energies.is_none() {
            check(sp.energy_count >= 1, "spectral.energy_count", "must be >= 1")?;
            let (lo, hi) = spectrum_bracket(&potential);
            let n = sp.energy_count;
            let step = (hi - lo) / (n + 1) as f64;
            sp.energies = Some((1..=n).map(|i| lo + step * i as f64).collect());
        }

        let kam = self.reduce.kam.get_or_insert_with(|| KamConfig::for_dim(d));
        kam.validate().map_err(|e| anyhow!("invalid config key `reduce.kam`: {e}"))?;
        self.reduce.energy.validate().map_err(|e| anyhow!("invalid config key `reduce.energy`: {e}"))?;
        check(self.reduce.residual_tol > 0.0, "reduce.residual_tol", "must be positive")?;
        check(self.reduce.n_rot_check >= 100, "reduce.n_rot_check", "must be >= 100")?;

        let du = &self.duality;
        check(du.residual_tol > 0.0 && du.bloch_tol > 0.0, "duality", "tolerances must be positive")?;
        check(du.decay_inner_fraction > 0.0 && du.decay_inner_fraction <= 1.0, "duality.decay_inner_fraction", "must lie in (0,1]")?;
        check(du.bloch_points >= 1, "duality.bloch_points", "must be >= 1")?;

        let rm = &mut self.rmeasure;
        let crit = rm.criteria.get_or_insert_with(|| {
            let mut c = CriteriaConfig::for_dim(d);
            c.seed = self.seed;
            c
        });
        check(crit.tail_ns.iter().all(|&n| n <= crit.radius), "rmeasure.criteria.tail_ns", "must not exceed radius")?;
        check(crit.continuity_truncation <= crit.radius, "rmeasure.criteria.continuity_truncation", "must not exceed radius")?;
        let site = rm.site.get_or_insert_with(|| vec![0; d]);
        check(site.len() == d, "rmeasure.site", "dimension differs from the frequency dimension")?;
        rm.completeness_min.get_or_insert(if d == 1 { 0.999 } else { 0.99 });

        let ho = &mut self.homogeneity;
        let class = *ho.phase_class.get_or_insert_with(|| PipelineConfig::for_dim(d).phase_params);
        check(class.gamma > 0.0, "homogeneity.phase_class.gamma", "must be positive")?;
        let default_freq = CriteriaConfig::for_dim(d).freq_params;
        ho.freq.get_or_insert(default_freq);
        ho.k_cut.get_or_insert(if d == 1 { 200 } else { 20 });
        check(ho.count >= 1, "homogeneity.count", "must be >= 1")?;
        if let Some(s) = ho.sigma {
            check(s > 0.0, "homogeneity.sigma", "must be positive")?;
        }

        check(!self.census.couplings.is_empty(), "census.couplings", "must not be empty")?;
        Ok(Resolved { alpha, potential, phases })
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let d = Frequency::parse(&self.frequency).map(|a| a.dim()).unwrap_or(1);
        let mut p = PipelineConfig::for_dim(d);
        if let Some(k) = &self.reduce.kam {
            p.kam = k.clone();
        }
        p.energy = self.reduce.energy;
        p
    }
}
