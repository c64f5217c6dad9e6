//! R-measure completeness at the origin for the almost Mathieu dual regime.
//!
//! `cargo run --release --example completeness` runs the one-frequency case
//! with every criterion; `... -- 2d` enumerates the two-frequency box.

use std::time::Instant;

use aubrylab::rmeasure::{enumerate_eigensystem, r_measure, run_criteria, tail_check, CriteriaConfig, PipelineConfig, SiteStatus};
use aubrylab::{Frequency, PotentialFourier};

fn main() {
    let two_d = std::env::args().nth(1).as_deref() == Some("2d");
    let start = Instant::now();
    if !two_d {
        let theta = (2f64.sqrt() - 1.0) / 2.0;
        let cfg = CriteriaConfig::for_dim(1);
        let run = run_criteria(theta, &PotentialFourier::cosine(0.05, 1), &Frequency::golden(), &[0], &cfg).expect("valid input");
        let r = &run.report;
        println!("theta {theta}, radius {}, total mass {:.13}", r.radius, r.total_mass);
        println!("tails {:?}, fitted rate {:?}", r.tail.tails, r.tail.rate);
        for c in &r.continuity {
            println!("continuity at distance {:.0e}: {:.3e}", c.theta_b - c.theta_a, c.window_discrepancy);
        }
        println!("uniformity {}, continuity {}, density {:?}", r.uniformity_pass, r.continuity_pass, r.density_pass);
        for (m, status, detail) in &r.failures {
            println!("site {m:?}: {status:?} {detail}");
        }
    } else {
        let alpha = Frequency::parse("golden, silver").expect("valid literal");
        let theta = (3f64.sqrt() - 1.0) / 4.0;
        let sys = enumerate_eigensystem(theta, &PotentialFourier::cosine(0.05, 2), &alpha, 6, &PipelineConfig::for_dim(2)).expect("valid input");
        let mu = r_measure(&sys, &[0, 0], None, None);
        let tail = tail_check(&sys, &[0, 0], &[1, 2, 3, 4, 5], 1e-3, 0.125);
        println!("theta {theta}, total mass {:.12}, solved {:.3}", mu.total, sys.success_rate());
        println!("tails {:?}, fitted rate {:?}", tail.tails, tail.rate);
        for s in sys.sites.iter().filter(|s| s.status != SiteStatus::Ok) {
            println!("site {:?}: {:?}", s.m, s.status);
        }
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
}
