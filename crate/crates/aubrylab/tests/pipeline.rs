use aubrylab::operators::{build_truncation, eigensolve, hausdorff, spectral_measure, OperatorKind};
use aubrylab::rmeasure::{enumerate_eigensystem, r_measure, solve_site, PipelineConfig, SiteStatus};
use aubrylab::{Frequency, PotentialFourier};

const THETA: f64 = 0.2071067811865476;

/// Eigenvalues of a truncation whose eigenvectors stay away from the box
/// edge. Dirichlet edge states fill the gaps and have no bulk partner.
fn bulk_spectrum(v: &PotentialFourier, kind: OperatorKind, n: usize) -> Vec<f64> {
    let op = build_truncation(v, &Frequency::golden(), kind, n).unwrap();
    let sd = eigensolve(&op).unwrap();
    sd.eigenvalues.iter().zip(&sd.boundary_masses).filter(|(_, &b)| b < 0.05).map(|(&e, _)| e).collect()
}

#[test]
fn dual_spectra_agree_after_rescaling() {
    // With λ = 2, the long-range operator at coupling 1/λ is H_λ / λ, and its
    // spectrum also equals that of H_{1/λ}.
    let lambda = 2.0;
    let n = 300;
    let long = bulk_spectrum(&PotentialFourier::cosine(1.0 / lambda, 1), OperatorKind::Longrange { theta: 0.3 }, n);
    let strong: Vec<f64> = bulk_spectrum(&PotentialFourier::cosine(lambda, 1), OperatorKind::Schrodinger1d { x: vec![0.1] }, n)
        .into_iter()
        .map(|e| e / lambda)
        .collect();
    let weak = bulk_spectrum(&PotentialFourier::cosine(1.0 / lambda, 1), OperatorKind::Schrodinger1d { x: vec![0.65] }, n);
    assert!(long.len() > 500 && strong.len() > 500 && weak.len() > 500);
    let d_strong = hausdorff(&long, &strong);
    let d_weak = hausdorff(&long, &weak);
    assert!(d_strong <= 0.05, "rescaled spectrum at distance {d_strong}");
    assert!(d_weak <= 0.05, "weak-coupling spectrum at distance {d_weak}");
}

#[test]
fn r_measure_matches_the_truncated_spectral_measure() {
    // At weak coupling the dual eigenvectors decay fast enough that a box of
    // radius 40 resolves the spectral measure of δ_0 to rounding.
    let v = PotentialFourier::cosine(0.05, 1);
    let alpha = Frequency::golden();
    let sys = enumerate_eigensystem(THETA, &v, &alpha, 12, &PipelineConfig::for_dim(1)).unwrap();
    let rm = r_measure(&sys, &[0], None, None);

    let op = build_truncation(&v, &alpha, OperatorKind::Longrange { theta: THETA }, 40).unwrap();
    let sm = spectral_measure(&op, &[0]).unwrap();
    assert!((sm.total - 1.0).abs() < 1e-12);

    let mut matched = 0.0;
    for atom in rm.atoms.iter().filter(|a| a.weight > 1e-12) {
        let (e, w) = sm
            .atoms
            .iter()
            .copied()
            .min_by(|a, b| (a.0 - atom.energy).abs().total_cmp(&(b.0 - atom.energy).abs()))
            .unwrap();
        assert!((e - atom.energy).abs() < 1e-9, "m = {:?}: E {} vs {}", atom.m, atom.energy, e);
        assert!((w - atom.weight).abs() < 1e-9, "m = {:?}: weight {} vs {}", atom.m, atom.weight, w);
        matched += w;
    }
    // Whatever the enumeration misses is the mass of its failed sites.
    assert!((matched - rm.total).abs() < 1e-8);
    assert!(rm.total > 1.0 - 1e-6, "{}", rm.total);
}

#[test]
fn two_frequency_site_energy_is_a_truncated_eigenvalue() {
    let v = PotentialFourier::cosine(0.05, 2);
    let alpha = Frequency::parse("golden, silver").unwrap();
    let theta = (3f64.sqrt() - 1.0) / 4.0;
    let site = solve_site(theta, &[0, 0], &v, &alpha, &PipelineConfig::for_dim(2));
    assert_eq!(site.status, SiteStatus::Ok, "{}", site.detail);
    let e = site.energy.unwrap();
    assert!(site.long_range_residual.unwrap() < 1e-8);

    let op = build_truncation(&v, &alpha, OperatorKind::Longrange { theta }, 8).unwrap();
    let sd = eigensolve(&op).unwrap();
    let gap = sd.eigenvalues.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
    assert!(gap < 1e-8, "nearest truncated eigenvalue is {gap} away");
}
