//! Energy, latency and delivery from simulation output, plus run aggregation.

use thiserror::Error;

use crate::params::{RadioPowerProfile, ValidConfig};
use crate::simkernel::{Delivery, RadioState, RadioTrace, RunOutput, TraceError};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

/// Seconds (or joules) indexed by [`RadioState::index`].
pub type PerState = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    pub per_state_time: PerState,
    pub per_state_energy: PerState,
}

fn power_of(p: &RadioPowerProfile, s: RadioState) -> f64 {
    match s {
        RadioState::Tx => p.p_tx,
        RadioState::Rx => p.p_rx,
        RadioState::Poll => p.p_poll,
        RadioState::Sleep => p.p_sleep,
    }
}

/// Energy of a trace summed over all nodes. Rejects traces whose nodes do
/// not tile a common window without gaps.
pub fn energy_of(
    trace: &RadioTrace,
    power: &RadioPowerProfile,
) -> Result<EnergyReport, TraceError> {
    trace.common_end()?;
    let mut time = [0.0; 4];
    for iv in trace.nodes.iter().flatten() {
        time[iv.state.index()] += iv.duration();
    }
    let mut energy = [0.0; 4];
    for s in RadioState::ALL {
        energy[s.index()] = time[s.index()] * power_of(power, s);
    }
    Ok(EnergyReport {
        total: energy.iter().sum(),
        per_state_time: time,
        per_state_energy: energy,
    })
}

/// Mean reception instant over received packets, all packets being queued
/// at t = 0. Lost packets are left out.
pub fn latency_of(log: &[Delivery]) -> Option<f64> {
    if log.is_empty() {
        return None;
    }
    Some(log.iter().map(|d| d.time).sum::<f64>() / log.len() as f64)
}

/// Received over offered; 1.0 when nothing was offered.
pub fn delivery_of(log: &[Delivery], buffer_size: usize) -> f64 {
    if buffer_size == 0 {
        1.0
    } else {
        log.len() as f64 / buffer_size as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiSummary {
    pub mean: f64,
    pub half_width: f64,
    pub n_runs: usize,
}

impl CiSummary {
    pub const LEVEL: f64 = 0.95;

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &CiSummary) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("a confidence interval needs at least 2 samples, got {0}")]
pub struct TooFewSamples(pub usize);

/// Normal-approximation 95% interval using the sample standard deviation.
pub fn confidence_interval(samples: &[f64]) -> Result<CiSummary, TooFewSamples> {
    let n = samples.len();
    if n < 2 {
        return Err(TooFewSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(CiSummary {
        mean,
        half_width: Z_95 * var.sqrt() / (n as f64).sqrt(),
        n_runs: n,
    })
}

/// Idle cost of one frame for the whole group, sink included.
pub fn idle_frame_energy(cfg: &ValidConfig) -> f64 {
    let (p, t) = (cfg.power(), cfg.timing());
    (cfg.scenario().n_devices + 1) as f64 * (t.t_listen * p.p_poll + t.t_sleep * p.p_sleep)
}

/// Metrics of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Everything the trace consumed over `frames` whole frames.
    pub total_energy: f64,
    /// `total_energy` less the idle cost of every frame after the first:
    /// one idle frame plus what the traffic added. This is the quantity the
    /// closed-form model predicts.
    pub net_energy: f64,
    pub frames: usize,
    pub per_state_time: PerState,
    pub state_share: PerState,
    pub mean_latency: Option<f64>,
    pub delivery_ratio: f64,
    pub guard_expired: bool,
    pub runtime_seconds: f64,
}

impl SimResult {
    pub fn from_run(
        run: &RunOutput,
        cfg: &ValidConfig,
        runtime_seconds: f64,
    ) -> Result<Self, TraceError> {
        let e = energy_of(&run.trace, cfg.power())?;
        let node_time: f64 = e.per_state_time.iter().sum();
        let mut share = [0.0; 4];
        if node_time > 0.0 {
            for (s, t) in share.iter_mut().zip(e.per_state_time) {
                *s = t / node_time;
            }
        }
        Ok(SimResult {
            total_energy: e.total,
            net_energy: e.total - run.frames.saturating_sub(1) as f64 * idle_frame_energy(cfg),
            frames: run.frames,
            per_state_time: e.per_state_time,
            state_share: share,
            mean_latency: latency_of(&run.deliveries),
            delivery_ratio: delivery_of(&run.deliveries, run.buffer_size),
            guard_expired: run.guard_expired,
            runtime_seconds,
        })
    }

    pub fn share(&self, s: RadioState) -> f64 {
        self.state_share[s.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::Interval;

    fn iv(state: RadioState, start: f64, end: f64) -> Interval {
        Interval { state, start, end }
    }

    fn delivery(time: f64) -> Delivery {
        Delivery {
            tx: 0,
            packet: 0,
            sender: 1,
            time,
        }
    }

    #[test]
    fn idle_trace_with_free_listening_costs_nothing() {
        let node = vec![
            iv(RadioState::Poll, 0.0, 0.025),
            iv(RadioState::Sleep, 0.025, 0.25),
        ];
        let trace = RadioTrace {
            nodes: vec![node; 10],
        };
        let mut p = RadioPowerProfile::cc1100();
        p.p_poll = 0.0;
        p.p_sleep = 0.0;
        assert_eq!(energy_of(&trace, &p).unwrap().total, 0.0);
    }

    #[test]
    fn single_transmit_interval() {
        let trace = RadioTrace {
            nodes: vec![vec![iv(RadioState::Tx, 0.0, 0.27)]],
        };
        let p = RadioPowerProfile {
            p_tx: 0.0507,
            ..RadioPowerProfile::cc1100()
        };
        let e = energy_of(&trace, &p).unwrap().total;
        assert!((e - 0.013689).abs() < 1e-15, "{e}");
    }

    #[test]
    fn gaps_are_rejected() {
        let trace = RadioTrace {
            nodes: vec![vec![
                iv(RadioState::Poll, 0.0, 0.1),
                iv(RadioState::Sleep, 0.2, 0.3),
            ]],
        };
        assert!(energy_of(&trace, &RadioPowerProfile::cc1100()).is_err());
    }

    #[test]
    fn unequal_node_ends_are_rejected() {
        let trace = RadioTrace {
            nodes: vec![
                vec![iv(RadioState::Poll, 0.0, 0.1)],
                vec![iv(RadioState::Poll, 0.0, 0.2)],
            ],
        };
        assert!(energy_of(&trace, &RadioPowerProfile::cc1100()).is_err());
    }

    #[test]
    fn latency_means() {
        assert_eq!(latency_of(&[]), None);
        assert_eq!(latency_of(&[delivery(0.3), delivery(0.5)]), Some(0.4));
        assert_eq!(latency_of(&[delivery(1.25)]), Some(1.25));
    }

    #[test]
    fn delivery_ratios() {
        let log: Vec<_> = (0..48).map(|i| delivery(i as f64)).collect();
        assert_eq!(delivery_of(&log, 50), 0.96);
        assert_eq!(delivery_of(&[], 0), 1.0);
        assert_eq!(delivery_of(&log, 48), 1.0);
    }

    #[test]
    fn ci_examples() {
        let flat = confidence_interval(&[3.0; 7]).unwrap();
        assert_eq!((flat.mean, flat.half_width), (3.0, 0.0));
        assert_eq!(confidence_interval(&[0.0, 2.0]).unwrap().mean, 1.0);
        let c = confidence_interval(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(c.mean, 3.0);
        // s = sqrt(2.5)
        let expect = 1.959964 * 2.5f64.sqrt() / 5f64.sqrt();
        assert!((c.half_width - expect).abs() < 1e-12);
        assert!((c.half_width - 1.386).abs() < 1e-3);
        assert_eq!(confidence_interval(&[1.0]), Err(TooFewSamples(1)));
    }

    #[test]
    fn overlap_is_symmetric() {
        let a = CiSummary {
            mean: 1.0,
            half_width: 0.1,
            n_runs: 2,
        };
        let b = CiSummary {
            mean: 1.25,
            half_width: 0.1,
            n_runs: 2,
        };
        assert!(!a.overlaps(&b) && !b.overlaps(&a));
        let c = CiSummary { mean: 1.15, ..b };
        assert!(a.overlaps(&c) && c.overlaps(&a));
    }
}
