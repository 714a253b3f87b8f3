use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lplmac::harness::sweep::SweepSpec;
use lplmac::harness::{self, HarnessError, SimulateArgs};
use lplmac::params::Protocol;
use lplmac::simkernel::SimOptions;

#[derive(Parser)]
#[command(
    name = "lplmac",
    version,
    about = "Energy model and simulator for B-MAC, X-MAC and LA-MAC"
)]
struct Cli {
    /// Flat key = value file (durations in ms, powers in mW).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form expected energy for one backlog size.
    Analytic {
        #[arg(long)]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        buffer: usize,
        /// Extend X-MAC and LA-MAC past B = 2 linearly.
        #[arg(long)]
        extrapolate: bool,
        /// List every leaf of the probability tree.
        #[arg(long)]
        cases: bool,
    },
    /// Seeded simulation runs at one point, with a 95% interval.
    Simulate {
        #[arg(long)]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        buffer: usize,
        #[command(flatten)]
        run: RunArgs,
        /// Also write the first run's radio trace and transmission log.
        #[arg(long)]
        dump_trace: bool,
    },
    /// Analytic vs simulated energy, latency, delivery and radio states.
    Compare(SweepArgs),
    /// Share of node time in each radio state.
    States(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Max run length as a multiple of (B + 10) frames.
    #[arg(long, default_value_t = SimOptions::default().guard_multiplier)]
    guard_multiplier: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Repeatable; all three when omitted.
    #[arg(long)]
    protocol: Vec<Protocol>,
    /// Inclusive range `A..B`.
    #[arg(long, default_value = "1..50", conflicts_with = "buffer")]
    buffer_range: String,
    /// A single backlog size instead of a range.
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long)]
    extrapolate: bool,
    #[command(flatten)]
    run: RunArgs,
}

impl SweepArgs {
    fn spec(self) -> Result<SweepSpec, HarnessError> {
        let buffers = match self.buffer {
            Some(b) => b..=b,
            None => harness::parse_range(&self.buffer_range)?,
        };
        Ok(SweepSpec {
            protocols: if self.protocol.is_empty() {
                Protocol::ALL.to_vec()
            } else {
                self.protocol
            },
            buffers,
            runs: self.run.runs,
            base_seed: self.run.seed,
            out_dir: self.run.out,
            extrapolate: self.extrapolate,
            guard_multiplier: self.run.guard_multiplier,
        })
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let base = harness::load_base(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Analytic {
            protocol,
            buffer,
            extrapolate,
            cases,
        } => print!(
            "{}",
            harness::cmd_analytic(&base, protocol, buffer, extrapolate, cases)?
        ),
        Cmd::Simulate {
            protocol,
            buffer,
            run,
            dump_trace,
        } => {
            let args = SimulateArgs {
                protocol,
                buffer,
                runs: run.runs,
                seed: run.seed,
                guard_multiplier: run.guard_multiplier,
                out_dir: run.out,
                dump_trace,
            };
            let (summary, written) = harness::cmd_simulate(&base, &args)?;
            println!("{summary}");
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Compare(args) => {
            for p in harness::cmd_compare(&base, &args.spec()?)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::States(args) => {
            let p = harness::cmd_states(&base, &args.spec()?)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
