//! Mean per-packet latency and delivery ratio against the backlog.
//!
//!     cargo run --release --example latency_delivery

use lplmac::harness::config;
use lplmac::harness::sweep::simulate_point;
use lplmac::params::Protocol;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = config::standard();
    println!(
        "{:>3}  {:>22}  {:>22}  {:>22}",
        "B", "bmac lat / deliv", "xmac lat / deliv", "lamac lat / deliv"
    );
    for b in [1, 2, 5, 10, 20, 35, 50] {
        print!("{b:>3}");
        for p in Protocol::ALL {
            let pt = simulate_point(&base, p, b, 40, 7, 4.0)?;
            let lat = pt.latency.map(|c| c.mean).unwrap_or(f64::NAN);
            print!("  {:>12.3} s / {:>5.3}", lat, pt.delivery.mean);
        }
        println!();
    }
    Ok(())
}
