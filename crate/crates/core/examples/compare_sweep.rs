//! Analytic expectation against the simulated mean over a small backlog
//! sweep, for all three protocols.
//!
//!     cargo run --release --example compare_sweep

use lplmac::harness::config;
use lplmac::harness::report::analytic_point;
use lplmac::harness::sweep::{sweep, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = config::standard();
    let spec = SweepSpec {
        buffers: 1..=6,
        runs: 50,
        extrapolate: true,
        ..SweepSpec::default()
    };
    println!(
        "{:<6} {:>3} {:>10} {:>18} {:>8}",
        "proto", "B", "analytic", "simulated", "gap"
    );
    for p in sweep(&base, &spec)? {
        let a = analytic_point(&base, p.protocol, p.buffer, spec.extrapolate)?.unwrap();
        let e = a.expected.e_total;
        println!(
            "{:<6} {:>3} {:>10.5} {:>9.5} ± {:<6.5} {:>+7.1}%{}",
            p.protocol,
            p.buffer,
            e,
            p.energy.mean,
            p.energy.half_width,
            100.0 * (p.energy.mean - e) / e,
            if a.extrapolated {
                "  (extrapolated)"
            } else {
                ""
            }
        );
    }
    Ok(())
}
