//! Seeded multi-run simulation at one or many (protocol, B) points.
//!
//! Runs fan out over rayon, but results are collected in index order, so
//! the thread count never changes any output.

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::HarnessError;
use crate::metrics::{confidence_interval, CiSummary, PerState, SimResult};
use crate::params::{Protocol, ValidConfig};
use crate::simkernel::{run, RunOutput, SimOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<Protocol>,
    pub buffers: RangeInclusive<usize>,
    pub runs: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub extrapolate: bool,
    pub guard_multiplier: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            protocols: Protocol::ALL.to_vec(),
            buffers: 1..=50,
            runs: 100,
            base_seed: 1,
            out_dir: PathBuf::from("out"),
            extrapolate: false,
            guard_multiplier: SimOptions::default().guard_multiplier,
        }
    }
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), HarnessError> {
        if self.buffers.is_empty() {
            return Err(HarnessError::EmptyRange(format!(
                "{}..{}",
                self.buffers.start(),
                self.buffers.end()
            )));
        }
        if self.runs < 2 {
            return Err(HarnessError::TooFewRuns(self.runs));
        }
        if self.protocols.is_empty() {
            return Err(HarnessError::NoProtocols);
        }
        Ok(())
    }

    /// All (protocol, B) points in output order.
    pub fn points(&self) -> Vec<(Protocol, usize)> {
        self.protocols
            .iter()
            .flat_map(|&p| self.buffers.clone().map(move |b| (p, b)))
            .collect()
    }
}

/// Aggregate of `runs` seeded simulations at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub protocol: Protocol,
    pub buffer: usize,
    pub base_seed: u64,
    pub runs: Vec<SimResult>,
    /// Over `net_energy`.
    pub energy: CiSummary,
    /// Over runs that delivered at least one packet; absent with fewer
    /// than two such runs.
    pub latency: Option<CiSummary>,
    pub delivery: CiSummary,
    pub mean_share: PerState,
    pub guard_expired: usize,
}

pub fn seed_for(base: u64, run_index: usize) -> u64 {
    base.wrapping_add(run_index as u64)
}

/// One run, returning the raw output alongside its metrics.
pub fn simulate_once(
    cfg: &ValidConfig,
    seed: u64,
    opts: &SimOptions,
) -> Result<(RunOutput, SimResult), HarnessError> {
    let started = Instant::now();
    let out = run(cfg, seed, opts)?;
    let res = SimResult::from_run(&out, cfg, started.elapsed().as_secs_f64())?;
    Ok((out, res))
}

pub fn simulate_point(
    base: &ValidConfig,
    protocol: Protocol,
    buffer: usize,
    runs: usize,
    base_seed: u64,
    guard_multiplier: f64,
) -> Result<PointResult, HarnessError> {
    if runs < 2 {
        return Err(HarnessError::TooFewRuns(runs));
    }
    let cfg = base.with_protocol(protocol).with_buffer(buffer);
    let opts = SimOptions {
        guard_multiplier,
        ..SimOptions::default()
    };
    let results: Vec<SimResult> = (0..runs)
        .into_par_iter()
        .map(|i| simulate_once(&cfg, seed_for(base_seed, i), &opts).map(|(_, r)| r))
        .collect::<Result<_, _>>()?;

    let column = |f: &dyn Fn(&SimResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
    let energy = confidence_interval(&column(&|r| r.net_energy))?;
    let delivery = confidence_interval(&column(&|r| r.delivery_ratio))?;
    let latencies: Vec<f64> = results.iter().filter_map(|r| r.mean_latency).collect();
    let latency = confidence_interval(&latencies).ok();
    let mut mean_share = [0.0; 4];
    for r in &results {
        for (m, s) in mean_share.iter_mut().zip(r.state_share) {
            *m += s / runs as f64;
        }
    }
    Ok(PointResult {
        protocol,
        buffer,
        base_seed,
        guard_expired: results.iter().filter(|r| r.guard_expired).count(),
        runs: results,
        energy,
        latency,
        delivery,
        mean_share,
    })
}

pub fn sweep(base: &ValidConfig, spec: &SweepSpec) -> Result<Vec<PointResult>, HarnessError> {
    spec.check()?;
    spec.points()
        .into_par_iter()
        .map(|(p, b)| simulate_point(base, p, b, spec.runs, spec.base_seed, spec.guard_multiplier))
        .collect()
}
