use aubrylab_web::{dual_eigenfunction_json, r_measure_json, spectral_curves_json};

#[test]
fn spectral_curves_have_zero_exponent_inside_the_free_band() {
    let out = spectral_curves_json(0.0, "golden", -1.5, 1.5, 7, 2000).unwrap();
    let l = out["lyapunov"].as_array().unwrap();
    let rho = out["rho"].as_array().unwrap();
    assert_eq!(l.len(), 7);
    assert!(l.iter().all(|v| v.as_f64().unwrap() < 1e-2));
    // Rotation number decreases with the energy.
    let r: Vec<f64> = rho.iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(r.windows(2).all(|w| w[1] <= w[0] + 1e-3));
}

#[test]
fn supercritical_coupling_has_positive_exponent() {
    let out = spectral_curves_json(2.0, "golden", 0.0, 0.0 + 1e-9, 2, 4000).unwrap();
    let l = out["lyapunov"][0].as_f64().unwrap();
    assert!((l - 2f64.ln()).abs() < 0.05, "{l}");
}

#[test]
fn dual_eigenfunction_is_localized() {
    let out = dual_eigenfunction_json(0.05, "golden", 0.2071067811865476).unwrap();
    assert!(out["residual"].as_f64().unwrap() < 1e-8);
    assert!(out["decay_rate"].as_f64().unwrap() > 1.0);
}

#[test]
fn r_measure_mass_is_close_to_one() {
    let out = r_measure_json(0.05, "golden", 0.2071067811865476, 8).unwrap();
    let total = out["total"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn bad_input_is_reported() {
    assert!(spectral_curves_json(1.0, "golden, silver", -1.0, 1.0, 10, 100).is_err());
    assert!(r_measure_json(0.05, "golden", 0.2, 41).is_err());
    assert!(spectral_curves_json(1.0, "not a number", -1.0, 1.0, 10, 100).is_err());
}
