use std::f64::consts::PI;

use aubrylab::arithmetic::{check_phase_dc, continued_fraction, torus_norm};
use aubrylab::linalg::{sturm_count, symmetric_eigen};
use aubrylab::reducibility::{diagonalize_sl2, elliptic_frame};
use aubrylab::rmeasure::fold_phase;
use aubrylab::{Cocycle, DiophantinePhaseParams, Frequency, PotentialFourier, Sl2Matrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_norm_is_periodic_and_bounded(x in -50.0f64..50.0, n in -20i32..20) {
        let a = torus_norm(x);
        prop_assert!((0.0..=0.5).contains(&a));
        prop_assert!((torus_norm(x + n as f64) - a).abs() < 1e-12);
        prop_assert!((torus_norm(-x) - a).abs() < 1e-15);
    }

    #[test]
    fn folded_phase_is_even_and_in_half_circle(t in -3.0f64..3.0) {
        let f = fold_phase(t);
        prop_assert!((0.0..=0.5).contains(&f));
        prop_assert!((fold_phase(-t) - f).abs() < 1e-14);
    }

    #[test]
    fn convergents_approximate_within_one_over_q_squared(x in 0.001f64..0.999) {
        let cf = continued_fraction(x, 6).or_else(|_| continued_fraction(x, 2));
        if let Ok(cf) = cf {
            for &(p, q) in &cf.convergents {
                let err = (x - p as f64 / q as f64).abs();
                prop_assert!(err <= 1.0 / (q as f64 * q as f64) + 1e-15);
            }
        }
    }

    #[test]
    fn phase_check_is_symmetric_under_reflection(t in 0.0f64..1.0) {
        let alpha = Frequency::golden();
        let p = DiophantinePhaseParams { gamma: 0.05, tau_prime: 2.0, scan_bound: 30 };
        prop_assert_eq!(check_phase_dc(t, &alpha, &p).holds, check_phase_dc(1.0 - t, &alpha, &p).holds);
    }

    #[test]
    fn exp_of_traceless_matrix_is_unimodular(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let y = Sl2Matrix::new(a, b, c, -a);
        prop_assert!((y.exp_sl2().det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn elliptic_matrices_diagonalize(rho in 0.02f64..0.48, s in 0.3f64..3.0, shear in -2.0f64..2.0) {
        // Conjugate a rotation by an arbitrary SL(2) matrix.
        let p = Sl2Matrix::new(s, shear, 0.0, 1.0 / s);
        let a = p.mul(&Sl2Matrix::rotation(rho)).mul(&p.inverse());
        let (_, sigma) = elliptic_frame(&a).unwrap();
        prop_assert!((torus_norm(sigma - rho).min(torus_norm(sigma + rho))) < 1e-10);
        let u = diagonalize_sl2(&a, sigma, 1e-3, 4.0).unwrap();
        let d = u.inverse().mul(&a.to_complex()).mul(&u);
        prop_assert!(d.m[1].norm() < 1e-10 && d.m[2].norm() < 1e-10);
        prop_assert!((d.m[0].arg() - 2.0 * PI * sigma).abs() < 1e-9);
    }

    #[test]
    fn sturm_count_matches_dense_eigenvalues(diag in prop::collection::vec(-3.0f64..3.0, 8), off in prop::collection::vec(0.1f64..1.5, 7), e in -4.0f64..4.0) {
        let n = diag.len();
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + i] = diag[i];
            if i + 1 < n {
                dense[i * n + i + 1] = off[i];
                dense[(i + 1) * n + i] = off[i];
            }
        }
        let eig = symmetric_eigen(&dense, n).unwrap();
        let below = eig.values.iter().filter(|&&x| x <= e).count();
        let near = eig.values.iter().any(|&x| (x - e).abs() < 1e-9);
        if !near {
            prop_assert_eq!(sturm_count(&diag, &off, e), below);
        }
    }

    #[test]
    fn potential_text_round_trips(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let v = PotentialFourier::new(1, vec![(vec![1], c1), (vec![2], c2)], 1.0).unwrap();
        let back = PotentialFourier::parse(&v.to_text()).unwrap();
        prop_assert_eq!(back, v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn free_rotation_number_inverts_the_cosine(rho0 in 0.02f64..0.48) {
        let c = Cocycle::schrodinger(Frequency::golden(), PotentialFourier::zero(1), 2.0 * (2.0 * PI * rho0).cos());
        let r = c.rotation_number(20_000, &[0.0]).unwrap().rho;
        prop_assert!((r - rho0).abs() < 1e-3, "{} vs {}", r, rho0);
    }
}
