//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no generated type definitions. Errors come back as
//! `{"error": "..."}`.

use aubrylab::cocycle::Cocycle;
use aubrylab::duality::decay_fit;
use aubrylab::rmeasure::{enumerate_eigensystem, r_measure, solve_site, PipelineConfig, SiteStatus};
use aubrylab::{Frequency, PotentialFourier};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn finish(v: Result<Value, String>) -> String {
    match v {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn frequency(literal: &str) -> Result<Frequency, String> {
    let a = Frequency::parse(literal).map_err(|e| e.to_string())?;
    if a.dim() != 1 {
        return Err("the demo handles one-frequency operators only".into());
    }
    Ok(a)
}

/// Lyapunov exponent and rotation number of `Δ + 2λ cos 2π(x + nα)` on
/// `points` energies in `[e_min, e_max]`.
pub fn spectral_curves_json(lambda: f64, freq: &str, e_min: f64, e_max: f64, points: usize, n: usize) -> Result<Value, String> {
    let alpha = frequency(freq)?;
    if points < 2 || points > 2000 || !(e_max > e_min) || n < 10 {
        return Err("need 2..=2000 points, e_max > e_min and n >= 10".into());
    }
    let v = PotentialFourier::cosine(lambda, 1);
    let mut energy = Vec::with_capacity(points);
    let mut lyap = Vec::with_capacity(points);
    let mut rho = Vec::with_capacity(points);
    for i in 0..points {
        let e = e_min + (e_max - e_min) * i as f64 / (points - 1) as f64;
        let c = Cocycle::schrodinger(alpha.clone(), v.clone(), e);
        lyap.push(c.lyapunov(n, 1, 0).map_err(|e| e.to_string())?.l);
        rho.push(c.rotation_number(n, &[0.0]).map_err(|e| e.to_string())?.rho);
        energy.push(e);
    }
    Ok(json!({ "energy": energy, "lyapunov": lyap, "rho": rho }))
}

/// Dual eigenvector at phase `theta` for the small coupling `lambda`:
/// site magnitudes, energy and fitted decay rate.
pub fn dual_eigenfunction_json(lambda: f64, freq: &str, theta: f64) -> Result<Value, String> {
    let alpha = frequency(freq)?;
    let v = PotentialFourier::cosine(lambda, 1);
    let s = solve_site(theta, &[0], &v, &alpha, &PipelineConfig::for_dim(1));
    let u = s.eigen.as_ref().ok_or_else(|| format!("{:?}: {}", s.status, s.detail))?;
    let fit = decay_fit(u, 0.5).map_err(|e| e.to_string())?;
    let sites: Vec<i64> = u.sites().iter().map(|n| n[0]).collect();
    let mags: Vec<f64> = u.values.iter().map(|z| z.norm()).collect();
    Ok(json!({
        "energy": s.energy,
        "theta": s.theta_m,
        "sites": sites,
        "abs_u": mags,
        "decay_rate": fit.rate,
        "residual": s.long_range_residual,
        "kam_iterations": s.kam_iterations,
    }))
}

/// R-measure atoms at the origin for phase `theta` over `|m| ≤ radius`.
pub fn r_measure_json(lambda: f64, freq: &str, theta: f64, radius: usize) -> Result<Value, String> {
    let alpha = frequency(freq)?;
    if radius > 40 {
        return Err("radius is capped at 40 in the browser".into());
    }
    let v = PotentialFourier::cosine(lambda, 1);
    let sys = enumerate_eigensystem(theta, &v, &alpha, radius, &PipelineConfig::for_dim(1)).map_err(|e| e.to_string())?;
    let mu = r_measure(&sys, &[0], None, None);
    let failures: Vec<Value> = sys
        .sites
        .iter()
        .filter(|s| s.status != SiteStatus::Ok)
        .map(|s| json!({ "m": s.m[0], "status": s.status, "detail": s.detail }))
        .collect();
    Ok(json!({
        "atoms": mu.atoms.iter().map(|a| json!({ "m": a.m[0], "energy": a.energy, "weight": a.weight })).collect::<Vec<_>>(),
        "total": mu.total,
        "failures": failures,
    }))
}

#[wasm_bindgen]
pub fn spectral_curves(lambda: f64, freq: &str, e_min: f64, e_max: f64, points: usize, n: usize) -> String {
    finish(spectral_curves_json(lambda, freq, e_min, e_max, points, n))
}

#[wasm_bindgen]
pub fn dual_eigenfunction(lambda: f64, freq: &str, theta: f64) -> String {
    finish(dual_eigenfunction_json(lambda, freq, theta))
}

#[wasm_bindgen]
pub fn r_measure_atoms(lambda: f64, freq: &str, theta: f64, radius: usize) -> String {
    finish(r_measure_json(lambda, freq, theta, radius))
}
