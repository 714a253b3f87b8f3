//! Radio trace and transmission log of a hand-placed B-MAC exchange: the
//! sink wakes in the middle of the long preamble and locks on at the next
//! preamble packet.
//!
//!     cargo run --example trace_dump

use lplmac::harness::{config, report};
use lplmac::params::Protocol;
use lplmac::simkernel::{run, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = config::standard().with_scenario(lplmac::params::NetworkScenario::new(
        Protocol::Bmac,
        2,
        1,
    ))?;
    let opts = SimOptions {
        phases: Some(vec![0.100, 0.010, 0.200]),
        packet_owners: Some(vec![1]),
        ..SimOptions::default()
    };
    let out = run(&cfg, 0, &opts)?;
    print!("{}", report::trace_intervals(&out)?);
    println!();
    print!("{}", report::trace_transmissions(&out)?);
    Ok(())
}
