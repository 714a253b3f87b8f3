//! Closed-form energy for each protocol, and the X-MAC single-packet
//! wakeup tree leaf by leaf.
//!
//!     cargo run --example analytic_tree

use lplmac::analytic::{expected_energy, xmac_b1, AnalyticOptions};
use lplmac::harness::config;
use lplmac::params::Protocol;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = config::standard();

    println!("{:<6} {:>3} {:>12}", "proto", "B", "total J");
    for p in Protocol::ALL {
        for b in [0, 1, 2] {
            let cfg = base.with_protocol(p).with_buffer(b);
            let r = expected_energy(&cfg, AnalyticOptions::default())?;
            println!("{:<6} {:>3} {:>12.6}", p, b, r.expected.e_total);
        }
    }

    let tree = xmac_b1(&base.with_protocol(Protocol::Xmac).with_buffer(1))?;
    println!("\nX-MAC, one packet: {} leaves", tree.cases.len());
    for c in &tree.cases {
        println!(
            "  {:<16} p = {:.5}  overhearers {:.6} J",
            c.case_id, c.probability, c.energy.e_overhear
        );
    }
    println!("  probability mass {:.12}", tree.probability_mass());

    // Past two packets only the linear extension is available.
    let cfg = base.with_protocol(Protocol::Lamac).with_buffer(10);
    let err = expected_energy(&cfg, AnalyticOptions::default()).unwrap_err();
    println!("\nLA-MAC B=10 without extrapolation: {err}");
    let ext = expected_energy(&cfg, AnalyticOptions { extrapolate: true })?;
    println!("with extrapolation: {:.6} J", ext.expected.e_total);
    Ok(())
}
