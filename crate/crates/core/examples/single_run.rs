//! One seeded simulation and the metrics derived from it.
//!
//!     cargo run --release --example single_run

use lplmac::harness::config;
use lplmac::metrics::SimResult;
use lplmac::params::Protocol;
use lplmac::simkernel::{run, RadioState, SimOptions, TxOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = config::standard()
        .with_protocol(Protocol::Xmac)
        .with_buffer(8);
    let out = run(&cfg, 42, &SimOptions::default())?;
    let res = SimResult::from_run(&out, &cfg, 0.0)?;

    println!("X-MAC, N = 9, B = 8, seed 42");
    println!("  frames simulated   {}", res.frames);
    println!("  total energy       {:.6} J", res.total_energy);
    println!("  net of idle frames {:.6} J", res.net_energy);
    println!(
        "  delivered          {}/{}",
        out.packets.received, out.buffer_size
    );
    println!("  lost               {}", out.packets.lost);
    if let Some(l) = res.mean_latency {
        println!("  mean latency       {l:.4} s");
    }
    for s in RadioState::ALL {
        println!("  {:<5} share        {:.4}", s.name(), res.share(s));
    }
    let collided = out
        .transmissions
        .iter()
        .filter(|t| out.outcome_of(t) == TxOutcome::Collided)
        .count();
    println!(
        "  frames on air      {} ({collided} collided)",
        out.transmissions.len()
    );
    Ok(())
}
