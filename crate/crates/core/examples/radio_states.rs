//! Share of node time in each radio state as the backlog grows.
//!
//!     cargo run --release --example radio_states

use lplmac::harness::config;
use lplmac::harness::sweep::simulate_point;
use lplmac::params::Protocol;
use lplmac::simkernel::RadioState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = config::standard();
    print!("{:<6} {:>3}", "proto", "B");
    for s in RadioState::ALL {
        print!(" {:>7}", s.name());
    }
    println!();
    for p in Protocol::ALL {
        for b in [0, 5, 20, 50] {
            let pt = simulate_point(&base, p, b, 20, 1, 4.0)?;
            print!("{:<6} {:>3}", p, b);
            for s in RadioState::ALL {
                print!(" {:>7.4}", pt.mean_share[s.index()]);
            }
            println!();
        }
    }
    Ok(())
}
