//! Command implementations behind the `lplmac` binary: config loading,
//! seeded sweeps and CSV reports.

pub mod config;
pub mod report;
pub mod sweep;

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analytic::{expected_energy, AnalyticError, AnalyticOptions};
use crate::metrics::TooFewSamples;
use crate::params::{Protocol, ValidConfig};
use crate::simkernel::{SimError, SimOptions, TraceError};
use config::ConfigFileError;
use sweep::{simulate_once, simulate_point, sweep, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Samples(#[from] TooFewSamples),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad buffer range `{0}` (expected A..B, e.g. 1..50)")]
    BadRange(String),
    #[error("buffer range {0} is empty")]
    EmptyRange(String),
    #[error("at least 2 runs are needed for a confidence interval, got {0}")]
    TooFewRuns(usize),
    #[error("no protocol selected")]
    NoProtocols,
}

/// Parses an inclusive `A..B` range; `A..=B` and a single `A` are accepted too.
pub fn parse_range(s: &str) -> Result<RangeInclusive<usize>, HarnessError> {
    let bad = || HarnessError::BadRange(s.to_string());
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let range = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.strip_prefix('=').unwrap_or(b))?,
        None => {
            let v = num(s)?;
            v..=v
        }
    };
    if range.is_empty() {
        return Err(HarnessError::EmptyRange(s.to_string()));
    }
    Ok(range)
}

pub fn load_base(path: Option<&Path>) -> Result<ValidConfig, HarnessError> {
    Ok(match path {
        Some(p) => config::load(p)?,
        None => config::standard(),
    })
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(io(&path))?;
    Ok(path)
}

/// Analytic breakdown as CSV text.
pub fn cmd_analytic(
    base: &ValidConfig,
    protocol: Protocol,
    buffer: usize,
    extrapolate: bool,
    cases: bool,
) -> Result<String, HarnessError> {
    let cfg = base.with_protocol(protocol).with_buffer(buffer);
    let result = expected_energy(&cfg, AnalyticOptions { extrapolate })?;
    report::analytic(base, protocol, buffer, &result, cases)
}

pub struct SimulateArgs {
    pub protocol: Protocol,
    pub buffer: usize,
    pub runs: usize,
    pub seed: u64,
    pub guard_multiplier: f64,
    pub out_dir: PathBuf,
    /// Also dump the first run's radio trace and transmission log.
    pub dump_trace: bool,
}

/// Writes `simulate.csv` (and trace dumps if asked); returns a summary.
pub fn cmd_simulate(
    base: &ValidConfig,
    a: &SimulateArgs,
) -> Result<(String, Vec<PathBuf>), HarnessError> {
    let point = simulate_point(
        base,
        a.protocol,
        a.buffer,
        a.runs,
        a.seed,
        a.guard_multiplier,
    )?;
    let mut written = vec![write(
        &a.out_dir,
        report::SIMULATE,
        &report::simulate(base, &point)?,
    )?];
    if a.dump_trace {
        let cfg = base.with_protocol(a.protocol).with_buffer(a.buffer);
        let opts = SimOptions {
            guard_multiplier: a.guard_multiplier,
            ..SimOptions::default()
        };
        let (run, _) = simulate_once(&cfg, a.seed, &opts)?;
        written.push(write(
            &a.out_dir,
            report::TRACE_INTERVALS,
            &report::trace_intervals(&run)?,
        )?);
        written.push(write(
            &a.out_dir,
            report::TRACE_TRANSMISSIONS,
            &report::trace_transmissions(&run)?,
        )?);
    }
    let latency = match point.latency {
        Some(c) => format!("{:.4} ± {:.4} s", c.mean, c.half_width),
        None => "n/a".to_string(),
    };
    let summary = format!(
        "{} B={} runs={}: energy {:.6} ± {:.6} J, latency {latency}, delivery {:.4} ± {:.4}, guard expired {}",
        a.protocol,
        a.buffer,
        a.runs,
        point.energy.mean,
        point.energy.half_width,
        point.delivery.mean,
        point.delivery.half_width,
        point.guard_expired,
    );
    Ok((summary, written))
}

/// Full sweep; writes all four comparison files.
pub fn cmd_compare(base: &ValidConfig, spec: &SweepSpec) -> Result<Vec<PathBuf>, HarnessError> {
    let points = sweep(base, spec)?;
    let seed = spec.base_seed;
    let dir = &spec.out_dir;
    Ok(vec![
        write(
            dir,
            report::ENERGY_COMPARE,
            &report::energy_compare(base, &points, spec.extrapolate, seed)?,
        )?,
        write(dir, report::LATENCY, &report::latency(base, &points, seed)?)?,
        write(
            dir,
            report::DELIVERY,
            &report::delivery(base, &points, seed)?,
        )?,
        write(dir, report::STATES, &report::states(base, &points, seed)?)?,
    ])
}

/// Radio-state shares only.
pub fn cmd_states(base: &ValidConfig, spec: &SweepSpec) -> Result<PathBuf, HarnessError> {
    let points = sweep(base, spec)?;
    write(
        &spec.out_dir,
        report::STATES,
        &report::states(base, &points, spec.base_seed)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..50").unwrap(), 1..=50);
        assert_eq!(parse_range("0..=3").unwrap(), 0..=3);
        assert_eq!(parse_range("7").unwrap(), 7..=7);
        assert!(matches!(
            parse_range("5..2"),
            Err(HarnessError::EmptyRange(_))
        ));
        assert!(matches!(
            parse_range("a..2"),
            Err(HarnessError::BadRange(_))
        ));
    }

    #[test]
    fn analytic_error_names_the_flag() {
        let err = cmd_analytic(&config::standard(), Protocol::Xmac, 5, false, false).unwrap_err();
        assert!(err.to_string().contains("--extrapolate"), "{err}");
    }

    #[test]
    fn analytic_cases_listed() {
        let text = cmd_analytic(&config::standard(), Protocol::Xmac, 1, false, true).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        // header, expected, nine leaves
        assert_eq!(rows.len(), 11);
    }
}
