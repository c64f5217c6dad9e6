use std::f64::consts::PI;

use anyhow::{anyhow, Result};
use aubrylab::arithmetic::{homogeneity_estimate, paper_sigma_bound, sample_phases};
use aubrylab::cocycle::Cocycle;
use aubrylab::duality::{bloch_from_eigenvector, decay_fit};
use aubrylab::operators::ids_rotation_check;
use aubrylab::reducibility::verify_conjugation;
use aubrylab::rmeasure::{
    energy_of_phase, enumerate_eigensystem, fold_phase, r_measure, refine_energy, run_criteria, solve_site, SiteStatus,
};
use aubrylab::PotentialFourier;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Resolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Lyapunov,
    Rotation,
    IdsCheck,
    Reduce,
    Duality,
    Rmeasure,
    Homogeneity,
    Census,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lyapunov => "lyapunov",
            Command::Rotation => "rotation",
            Command::IdsCheck => "ids-check",
            Command::Reduce => "reduce",
            Command::Duality => "duality",
            Command::Rmeasure => "rmeasure",
            Command::Homogeneity => "homogeneity",
            Command::Census => "census",
        }
    }
}

/// Numeric payload of one subcommand plus its verdict.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub outputs: Value,
    pub pass: bool,
    pub failures: Vec<String>,
    /// Plot-ready CSV.
    pub csv: String,
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    match cmd {
        Command::Lyapunov => lyapunov(cfg, res),
        Command::Rotation => rotation(cfg, res),
        Command::IdsCheck => ids_check(cfg, res),
        Command::Reduce => reduce(cfg, res),
        Command::Duality => duality(cfg, res),
        Command::Rmeasure => rmeasure(cfg, res),
        Command::Homogeneity => homogeneity(cfg, res),
        Command::Census => census(cfg, res),
    }
}

fn energies(cfg: &ExperimentConfig) -> &[f64] {
    cfg.spectral.energies.as_deref().unwrap_or(&[])
}

fn lyapunov(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut csv = String::from("energy,L,stderr\n");
    for &e in energies(cfg) {
        let c = Cocycle::schrodinger(res.alpha.clone(), res.potential.clone(), e);
        let est = c.lyapunov(cfg.spectral.lyapunov_n, cfg.spectral.x_samples, cfg.seed)?;
        csv.push_str(&format!("{e:.17e},{:.17e},{:.17e}\n", est.l, est.stderr));
        rows.push(json!({"energy": e, "L": est.l, "stderr": est.stderr}));
    }
    Ok(Outcome { outputs: json!({ "rows": rows }), pass: true, failures: vec![], csv })
}

fn rotation(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut csv = String::from("energy,rho,error_estimate,one_minus_two_rho\n");
    let x0 = vec![0.0; res.alpha.dim()];
    for &e in energies(cfg) {
        let c = Cocycle::schrodinger(res.alpha.clone(), res.potential.clone(), e);
        let r = c.rotation_number(cfg.spectral.n_rot, &x0)?;
        csv.push_str(&format!("{e:.17e},{:.17e},{:.17e},{:.17e}\n", r.rho, r.error_estimate, 1.0 - 2.0 * r.rho));
        rows.push(json!({"energy": e, "rho": r.rho, "error_estimate": r.error_estimate}));
    }
    Ok(Outcome { outputs: json!({ "rows": rows }), pass: true, failures: vec![], csv })
}

fn ids_check(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let sp = &cfg.spectral;
    let rep = ids_rotation_check(&res.potential, &res.alpha, energies(cfg), sp.ids_box, sp.n_rot, sp.ids_tol, sp.x_samples, cfg.seed)?;
    let mut csv = String::from("energy,ids,rho,defect\n");
    for e in &rep.entries {
        csv.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", e.energy, e.ids, e.rho, e.defect));
    }
    let failures = rep.failures.iter().map(|e| format!("IDS defect above {} at E = {e}", sp.ids_tol)).collect();
    Ok(Outcome { outputs: serde_json::to_value(&rep)?, pass: rep.pass, failures, csv })
}

fn reduce(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let kam = cfg.reduce.kam.clone().ok_or_else(|| anyhow!("config not resolved"))?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("theta,energy,iterations,residual,convergence_order\n");
    for &theta in &res.phases {
        let target = fold_phase(theta);
        let eop = energy_of_phase(theta, &res.potential, &res.alpha, &cfg.reduce.energy)?;
        if eop.gap_flag {
            failures.push(format!("theta = {theta}: target lies in a spectral gap"));
            rows.push(json!({"theta": theta, "status": "gap", "edges": eop.values}));
            continue;
        }
        match refine_energy(&res.alpha, &res.potential, target, eop.values[0], &kam) {
            Ok(r) => {
                let red = &r.reduction;
                let c = Cocycle::schrodinger(res.alpha.clone(), res.potential.clone(), r.energy);
                let chk = verify_conjugation(&c, &red.conjugation, &red.constant, cfg.reduce.n_rot_check)?;
                let ok = chk.residual <= cfg.reduce.residual_tol && red.quadratic() && chk.rho_shift_ok;
                if !ok {
                    failures.push(format!(
                        "theta = {theta}: residual {:.3e}, order {:?}, rotation bookkeeping {}",
                        chk.residual, red.convergence_order, chk.rho_shift_ok
                    ));
                }
                csv.push_str(&format!(
                    "{theta:.17e},{:.17e},{},{:.17e},{}\n",
                    r.energy,
                    red.iterations,
                    chk.residual,
                    red.convergence_order.map_or(String::new(), |o| format!("{o:.6}"))
                ));
                rows.push(json!({
                    "theta": theta, "status": "ok", "target": target, "energy": r.energy,
                    "iterations": red.iterations, "history": red.history,
                    "convergence_order": red.convergence_order, "check": chk,
                    "constant": [red.constant.a11, red.constant.a12, red.constant.a21, red.constant.a22],
                    "degree": red.conjugation.degree,
                    "decay_certificate": red.conjugation.decay_certificate(kam.final_strip()),
                }));
            }
            Err(e) => {
                failures.push(format!("theta = {theta}: {e}"));
                rows.push(json!({"theta": theta, "status": "failed", "detail": e.to_string()}));
            }
        }
    }
    Ok(Outcome { outputs: json!({ "rows": rows }), pass: failures.is_empty(), failures, csv })
}

fn bloch_grid(d: usize, points: usize) -> Vec<Vec<f64>> {
    let pts = if d == 1 { points } else { (points as f64).sqrt().ceil() as usize };
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| (0..pts).map(move |j| [p.clone(), vec![(j as f64 + 0.5) / pts as f64]].concat()))
            .collect();
    }
    out
}

fn duality(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let pipeline = cfg.pipeline();
    let du = &cfg.duality;
    let d = res.alpha.dim();
    let strip = pipeline.kam.final_strip();
    let min_rate = du.decay_rate_factor * 2.0 * PI * strip;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("theta,site,abs_u\n");
    for &theta in &res.phases {
        let s = solve_site(theta, &vec![0; d], &res.potential, &res.alpha, &pipeline);
        let Some(u) = s.eigen.as_ref() else {
            failures.push(format!("theta = {theta}: {:?} {}", s.status, s.detail));
            rows.push(json!({"theta": theta, "status": s.status, "detail": s.detail}));
            continue;
        };
        let fit = decay_fit(u, du.decay_inner_fraction)?;
        let bloch = bloch_from_eigenvector(u, s.theta_m, &res.potential, &res.alpha, &bloch_grid(d, du.bloch_points));
        let lr = s.long_range_residual.unwrap_or(f64::INFINITY);
        if lr > du.residual_tol {
            failures.push(format!("theta = {theta}: long-range residual {lr:.3e}"));
        }
        if fit.rate < min_rate {
            failures.push(format!("theta = {theta}: decay rate {:.4} below {min_rate:.4}", fit.rate));
        }
        if bloch.schrodinger_residual > du.bloch_tol {
            failures.push(format!("theta = {theta}: Bloch residual {:.3e}", bloch.schrodinger_residual));
        }
        for (n, z) in u.sites().iter().zip(&u.values) {
            let ns: Vec<String> = n.iter().map(|v| v.to_string()).collect();
            csv.push_str(&format!("{theta:.17e},{},{:.17e}\n", ns.join(";"), z.norm()));
        }
        rows.push(json!({
            "theta": theta, "status": s.status, "energy": s.energy, "long_range_residual": lr,
            "decay_rate": fit.rate, "decay_prefactor": fit.prefactor, "decay_r2": fit.r2,
            "required_rate": min_rate, "bloch_residual": bloch.schrodinger_residual,
            "eigenvector": u.to_json(),
        }));
    }
    Ok(Outcome { outputs: json!({ "rows": rows }), pass: failures.is_empty(), failures, csv })
}

fn rmeasure(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let mut crit = cfg.rmeasure.criteria.clone().ok_or_else(|| anyhow!("config not resolved"))?;
    crit.pipeline = cfg.pipeline();
    let site = cfg.rmeasure.site.clone().unwrap_or_else(|| vec![0; res.alpha.dim()]);
    let min_total = cfg.rmeasure.completeness_min.unwrap_or(0.999);
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("theta,m,energy,weight\n");
    for &theta in &res.phases {
        let run = run_criteria(theta, &res.potential, &res.alpha, &site, &crit)?;
        let r = &run.report;
        if r.total_mass < min_total {
            failures.push(format!("theta = {theta}: completeness {:.6} below {min_total}", r.total_mass));
        }
        if !r.uniformity_pass {
            failures.push(format!("theta = {theta}: no tail threshold N0 at epsilon {}", r.tail.epsilon));
        }
        if !r.continuity_pass {
            failures.push(format!("theta = {theta}: continuity discrepancies do not shrink below 1e-3"));
        }
        match r.density_pass {
            Some(true) => {}
            Some(false) => failures.push(format!("theta = {theta}: homogeneity ratio below 1/2")),
            None => failures.push(format!("theta = {theta}: homogeneity estimate unavailable")),
        }
        for a in &run.measure.atoms {
            let m: Vec<String> = a.m.iter().map(|v| v.to_string()).collect();
            csv.push_str(&format!("{theta:.17e},{},{:.17e},{:.17e}\n", m.join(";"), a.energy, a.weight));
        }
        runs.push(run);
    }
    Ok(Outcome { outputs: json!({ "runs": runs }), pass: failures.is_empty(), failures, csv })
}

fn homogeneity(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let ho = &cfg.homogeneity;
    let class = ho.phase_class.ok_or_else(|| anyhow!("config not resolved"))?;
    let freq = ho.freq.ok_or_else(|| anyhow!("config not resolved"))?;
    let k_cut = ho.k_cut.unwrap_or(200);
    let sigma = ho.sigma.unwrap_or_else(|| 0.5 * paper_sigma_bound(&freq, &class));
    let phases = sample_phases(&res.alpha, &class, ho.count, cfg.seed);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from("theta0,sigma,ratio,excluded_measure\n");
    for &t in &phases {
        let rep = homogeneity_estimate(&res.alpha, &freq, &class, t, sigma, k_cut)?;
        if rep.ratio < 0.5 {
            failures.push(format!("theta0 = {t}: ratio {:.4}", rep.ratio));
        }
        csv.push_str(&format!("{t:.17e},{sigma:.17e},{:.17e},{:.17e}\n", rep.ratio, rep.excluded_measure));
        rows.push(json!({"theta0": t, "sigma": sigma, "report": rep}));
    }
    if phases.len() < ho.count {
        failures.push(format!("only {} of {} admissible phases sampled", phases.len(), ho.count));
    }
    Ok(Outcome { outputs: json!({ "rows": rows }), pass: failures.is_empty(), failures, csv })
}

fn census(cfg: &ExperimentConfig, res: &Resolved) -> Result<Outcome> {
    let pipeline = cfg.pipeline();
    let d = res.alpha.dim();
    let site = vec![0; d];
    let mut rows = Vec::new();
    let mut csv = String::from("theta,coupling,success_rate,total,resonant,gap,non_convergent,failed\n");
    for &theta in &res.phases {
        for &c in &cfg.census.couplings {
            let v = PotentialFourier::cosine(c, d);
            let sys = enumerate_eigensystem(theta, &v, &res.alpha, cfg.census.radius, &pipeline)?;
            let total = r_measure(&sys, &site, None, None).total;
            let count = |s: SiteStatus| sys.with_status(s).len();
            let (rs, gp, nc, fl) =
                (count(SiteStatus::Resonant), count(SiteStatus::Gap), count(SiteStatus::NonConvergent), count(SiteStatus::Failed));
            csv.push_str(&format!("{theta:.17e},{c},{:.6},{total:.17e},{rs},{gp},{nc},{fl}\n", sys.success_rate()));
            rows.push(json!({
                "theta": theta, "coupling": c, "radius": cfg.census.radius, "success_rate": sys.success_rate(),
                "total": total, "resonant": rs, "gap": gp, "non_convergent": nc, "failed": fl,
            }));
        }
    }
    Ok(Outcome { outputs: json!({ "rows": rows }), pass: true, failures: vec![], csv })
}
