//! CSV rendering. Every file opens with `#` comment lines naming the tool
//! version, the config hash and the base seed, then a single header row.
//! Numbers use fixed precision so identical inputs give identical bytes.

use super::config::config_hash;
use super::sweep::PointResult;
use super::HarnessError;
use crate::analytic::{expected_energy, AnalyticError, AnalyticOptions, AnalyticResult};
use crate::params::{EnergyBreakdown, Protocol, ValidConfig};
use crate::simkernel::{RadioState, RunOutput};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ENERGY_COMPARE: &str = "energy_compare.csv";
pub const LATENCY: &str = "latency.csv";
pub const DELIVERY: &str = "delivery.csv";
pub const STATES: &str = "states.csv";
pub const SIMULATE: &str = "simulate.csv";
pub const TRACE_INTERVALS: &str = "trace_intervals.csv";
pub const TRACE_TRANSMISSIONS: &str = "trace_transmissions.csv";

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(preamble: &str, columns: &[&str]) -> Result<Self, HarnessError> {
        let mut w = csv::WriterBuilder::new().from_writer(preamble.as_bytes().to_vec());
        w.write_record(columns)?;
        Ok(Self { w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    fn finish(self) -> Result<String, HarnessError> {
        let bytes = self
            .w
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn header(cfg: &ValidConfig, seed: u64) -> String {
    format!(
        "# lplmac {VERSION}\n# config_sha256 {}\n# seed {seed}\n",
        config_hash(cfg)
    )
}

fn f9(x: f64) -> String {
    format!("{x:.9}")
}

fn opt9(x: Option<f64>) -> String {
    x.map(f9).unwrap_or_default()
}

/// Analytic expectation for a point, or `None` where the closed form does
/// not exist and extrapolation is off.
pub fn analytic_point(
    base: &ValidConfig,
    protocol: Protocol,
    buffer: usize,
    extrapolate: bool,
) -> Result<Option<AnalyticResult>, HarnessError> {
    let cfg = base.with_protocol(protocol).with_buffer(buffer);
    match expected_energy(&cfg, AnalyticOptions { extrapolate }) {
        Ok(r) => Ok(Some(r)),
        Err(AnalyticError::UnsupportedBufferSize { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn energy_compare(
    base: &ValidConfig,
    points: &[PointResult],
    extrapolate: bool,
    seed: u64,
) -> Result<String, HarnessError> {
    let mut t = Table::new(
        &header(base, seed),
        &[
            "protocol",
            "B",
            "analytic_J",
            "sim_mean_J",
            "sim_ci_J",
            "rel_gap",
            "extrapolated",
        ],
    )?;
    for p in points {
        let an = analytic_point(base, p.protocol, p.buffer, extrapolate)?;
        let total = an.as_ref().map(|r| r.expected.e_total);
        let gap = total.map(|a| (p.energy.mean - a) / a);
        t.row([
            p.protocol.name().to_string(),
            p.buffer.to_string(),
            opt9(total),
            f9(p.energy.mean),
            f9(p.energy.half_width),
            opt9(gap),
            an.map(|r| r.extrapolated.to_string()).unwrap_or_default(),
        ])?;
    }
    t.finish()
}

pub fn latency(
    base: &ValidConfig,
    points: &[PointResult],
    seed: u64,
) -> Result<String, HarnessError> {
    let mut t = Table::new(
        &header(base, seed),
        &["protocol", "B", "mean_s", "ci_s", "n_runs"],
    )?;
    for p in points {
        t.row([
            p.protocol.name().to_string(),
            p.buffer.to_string(),
            opt9(p.latency.map(|c| c.mean)),
            opt9(p.latency.map(|c| c.half_width)),
            p.latency.map(|c| c.n_runs).unwrap_or(0).to_string(),
        ])?;
    }
    t.finish()
}

pub fn delivery(
    base: &ValidConfig,
    points: &[PointResult],
    seed: u64,
) -> Result<String, HarnessError> {
    let mut t = Table::new(
        &header(base, seed),
        &["protocol", "B", "mean", "ci", "guard_expired"],
    )?;
    for p in points {
        t.row([
            p.protocol.name().to_string(),
            p.buffer.to_string(),
            f9(p.delivery.mean),
            f9(p.delivery.half_width),
            p.guard_expired.to_string(),
        ])?;
    }
    t.finish()
}

pub fn states(
    base: &ValidConfig,
    points: &[PointResult],
    seed: u64,
) -> Result<String, HarnessError> {
    let mut t = Table::new(
        &header(base, seed),
        &[
            "protocol",
            "B",
            "tx_share",
            "rx_share",
            "poll_share",
            "sleep_share",
        ],
    )?;
    for p in points {
        let mut row = vec![p.protocol.name().to_string(), p.buffer.to_string()];
        row.extend(RadioState::ALL.iter().map(|s| f9(p.mean_share[s.index()])));
        t.row(row)?;
    }
    t.finish()
}

/// Per-run rows followed by `mean` and `ci95` aggregate rows.
pub fn simulate(base: &ValidConfig, point: &PointResult) -> Result<String, HarnessError> {
    let mut t = Table::new(
        &header(base, point.base_seed),
        &[
            "protocol",
            "B",
            "run",
            "seed",
            "total_J",
            "net_J",
            "latency_s",
            "delivery",
            "guard_expired",
        ],
    )?;
    let name = point.protocol.name().to_string();
    let b = point.buffer.to_string();
    for (i, r) in point.runs.iter().enumerate() {
        t.row([
            name.clone(),
            b.clone(),
            i.to_string(),
            super::sweep::seed_for(point.base_seed, i).to_string(),
            f9(r.total_energy),
            f9(r.net_energy),
            opt9(r.mean_latency),
            f9(r.delivery_ratio),
            r.guard_expired.to_string(),
        ])?;
    }
    let mean_total =
        point.runs.iter().map(|r| r.total_energy).sum::<f64>() / point.runs.len() as f64;
    t.row([
        name.clone(),
        b.clone(),
        "mean".into(),
        String::new(),
        f9(mean_total),
        f9(point.energy.mean),
        opt9(point.latency.map(|c| c.mean)),
        f9(point.delivery.mean),
        point.guard_expired.to_string(),
    ])?;
    t.row([
        name,
        b,
        "ci95".into(),
        String::new(),
        String::new(),
        f9(point.energy.half_width),
        opt9(point.latency.map(|c| c.half_width)),
        f9(point.delivery.half_width),
        String::new(),
    ])?;
    t.finish()
}

fn breakdown_fields(e: &EnergyBreakdown) -> Vec<String> {
    let mut v: Vec<String> = e.components().iter().map(|&x| f9(x)).collect();
    v.push(f9(e.e_total));
    v
}

/// Expected breakdown, and with `cases` every leaf of the tree.
pub fn analytic(
    base: &ValidConfig,
    protocol: Protocol,
    buffer: usize,
    result: &AnalyticResult,
    cases: bool,
) -> Result<String, HarnessError> {
    let mut pre = format!(
        "# lplmac {VERSION}\n# config_sha256 {}\n",
        config_hash(base)
    );
    for d in &result.diagnostics {
        pre.push_str(&format!("# clamped: {d}\n"));
    }
    let mut t = Table::new(
        &pre,
        &[
            "protocol",
            "B",
            "item",
            "probability",
            "e_tx_J",
            "e_rx_J",
            "e_poll_J",
            "e_sleep_J",
            "e_overhear_J",
            "total_J",
            "extrapolated",
        ],
    )?;
    let lead = |item: &str, prob: f64| {
        vec![
            protocol.name().to_string(),
            buffer.to_string(),
            item.to_string(),
            format!("{prob:.12}"),
        ]
    };
    let mut row = lead("expected", 1.0);
    row.extend(breakdown_fields(&result.expected));
    row.push(result.extrapolated.to_string());
    t.row(row)?;
    if cases {
        for c in &result.cases {
            let mut row = lead(&c.case_id, c.probability);
            row.extend(breakdown_fields(&c.energy));
            row.push(result.extrapolated.to_string());
            t.row(row)?;
        }
    }
    t.finish()
}

pub fn trace_intervals(run: &RunOutput) -> Result<String, HarnessError> {
    let pre = format!("# lplmac {VERSION}\n# seed {}\n", run.seed);
    let mut t = Table::new(&pre, &["node", "state", "start", "end"])?;
    for (node, ivs) in run.trace.nodes.iter().enumerate() {
        for iv in ivs {
            t.row([
                node.to_string(),
                iv.state.name().to_string(),
                f9(iv.start),
                f9(iv.end),
            ])?;
        }
    }
    t.finish()
}

pub fn trace_transmissions(run: &RunOutput) -> Result<String, HarnessError> {
    let pre = format!("# lplmac {VERSION}\n# seed {}\n", run.seed);
    let mut t = Table::new(&pre, &["sender", "kind", "dest", "start", "end", "outcome"])?;
    for tx in &run.transmissions {
        t.row([
            tx.sender.to_string(),
            tx.kind.name().to_string(),
            tx.dest.to_string(),
            f9(tx.start),
            f9(tx.end()),
            run.outcome_of(tx).name().to_string(),
        ])?;
    }
    t.finish()
}
