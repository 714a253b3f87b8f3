//! Loading a key = value configuration and what it changes.
//!
//!     cargo run --example config_file

use lplmac::analytic::{expected_energy, AnalyticOptions};
use lplmac::harness::config;
use lplmac::params::Protocol;

const TEXT: &str = "\
# 500 ms frame, same 10 % idle duty cycle
t_listen_ms = 50
t_sleep_ms  = 450
t_data_ms   = 10     # 25-byte frames
n_devices   = 20
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let standard = config::standard();
    let custom = config::parse(TEXT)?;

    for (name, cfg) in [("standard", &standard), ("custom", &custom)] {
        let d = cfg.derived();
        println!("{name}: sha256 {}", config::config_hash(cfg));
        println!(
            "  p_sync {:.3}, strobes expected {:.2}",
            d.p_sync, d.gamma_x
        );
        for p in Protocol::ALL {
            let e = expected_energy(
                &cfg.with_protocol(p).with_buffer(1),
                AnalyticOptions::default(),
            )?;
            println!("  {p:<5} B=1 {:.6} J", e.expected.e_total);
        }
    }
    println!(
        "\ncanonical form of the custom file:\n{}",
        config::render(&custom)
    );

    match config::parse("t_listen_ms = 5") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("a 5 ms poll cannot fit a strobe and its ACK"),
    }
    Ok(())
}
