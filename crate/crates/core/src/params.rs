//! Radio power, timing and scenario parameters shared by the analytic model
//! and the simulator.
//!
//! All durations are seconds and all powers are watts. Configuration files
//! and CLI flags use milliseconds and milliwatts; conversion happens in
//! [`crate::harness::config`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Per-state radio power draw in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioPowerProfile {
    pub p_tx: f64,
    pub p_rx: f64,
    pub p_poll: f64,
    pub p_sleep: f64,
}

impl RadioPowerProfile {
    /// Placeholder figures for a CC1100-class transceiver at 3 V.
    ///
    /// These are datasheet-style numbers, not measurements; override them
    /// for any real study.
    pub const fn cc1100() -> Self {
        Self {
            p_tx: 50.7e-3,
            p_rx: 46.8e-3,
            p_poll: 46.8e-3,
            p_sleep: 1.2e-6,
        }
    }

    /// Every state draws the same power `p`.
    pub const fn uniform(p: f64) -> Self {
        Self {
            p_tx: p,
            p_rx: p,
            p_poll: p,
            p_sleep: p,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            p_tx: self.p_tx * k,
            p_rx: self.p_rx * k,
            p_poll: self.p_poll * k,
            p_sleep: self.p_sleep * k,
        }
    }
}

impl Default for RadioPowerProfile {
    fn default() -> Self {
        Self::cc1100()
    }
}

/// Frame, polling and per-message durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingProfile {
    /// Wakeup period, `t_listen + t_sleep`.
    pub t_frame: f64,
    /// Channel polling duration at each wakeup.
    pub t_listen: f64,
    pub t_sleep: f64,
    /// Data frame airtime.
    pub t_data: f64,
    /// B-MAC long preamble; must span a whole frame.
    pub bmac_preamble: f64,
    pub xmac_preamble: f64,
    pub xmac_ack: f64,
    /// Receiver hold after data during which one extra frame may arrive.
    pub xmac_backoff: f64,
    pub lamac_preamble: f64,
    pub lamac_ack: f64,
    /// SCHEDULE frame airtime.
    pub lamac_schedule: f64,
}

impl TimingProfile {
    /// 250 ms frame with a 25 ms poll (10 % idle duty cycle) and message
    /// sizes for a 20 kbps radio.
    pub fn standard() -> Self {
        Self::with_frame(0.025, 0.225)
    }

    /// Default message durations around a custom poll/sleep split.
    pub fn with_frame(t_listen: f64, t_sleep: f64) -> Self {
        let t_frame = t_listen + t_sleep;
        Self {
            t_frame,
            t_listen,
            t_sleep,
            t_data: 0.020,
            bmac_preamble: t_frame,
            xmac_preamble: 0.004,
            xmac_ack: 0.004,
            xmac_backoff: 0.050,
            lamac_preamble: 0.004,
            lamac_ack: 0.004,
            lamac_schedule: 0.012,
        }
    }
}

impl Default for TimingProfile {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Bmac,
    Xmac,
    Lamac,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Bmac, Protocol::Xmac, Protocol::Lamac];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Bmac => "bmac",
            Protocol::Xmac => "xmac",
            Protocol::Lamac => "lamac",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown protocol `{0}` (expected bmac, xmac or lamac)")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "bmac" => Ok(Protocol::Bmac),
            "xmac" => Ok(Protocol::Xmac),
            "lamac" => Ok(Protocol::Lamac),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}

/// A star network: one sink plus `n_devices` potential senders sharing a
/// global backlog of `buffer_size` packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkScenario {
    pub n_devices: usize,
    pub buffer_size: usize,
    pub protocol: Protocol,
}

impl NetworkScenario {
    pub fn new(protocol: Protocol, n_devices: usize, buffer_size: usize) -> Self {
        Self {
            n_devices,
            buffer_size,
            protocol,
        }
    }

    pub fn with_buffer(&self, buffer_size: usize) -> Self {
        Self {
            buffer_size,
            ..*self
        }
    }

    pub fn with_protocol(&self, protocol: Protocol) -> Self {
        Self { protocol, ..*self }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("power `{field}` is negative ({value} W)")]
    NegativePower { field: &'static str, value: f64 },
    #[error("sleep power {p_sleep} W exceeds polling power {p_poll} W")]
    SleepAbovePoll { p_sleep: f64, p_poll: f64 },
    #[error("duration `{field}` must be positive and finite (got {value} s)")]
    NonPositiveDuration { field: &'static str, value: f64 },
    #[error("frame identity violated: t_frame {t_frame} s != t_listen {t_listen} s + t_sleep {t_sleep} s")]
    FrameIdentity {
        t_frame: f64,
        t_listen: f64,
        t_sleep: f64,
    },
    #[error("B-MAC preamble {bmac_preamble} s must equal the frame {t_frame} s")]
    BmacPreambleNotFrame { bmac_preamble: f64, t_frame: f64 },
    #[error("gamma precondition violated for {protocol}: t_listen {t_listen} s must exceed preamble + ack {strobe} s")]
    GammaPrecondition {
        protocol: Protocol,
        t_listen: f64,
        strobe: f64,
    },
    #[error("LA-MAC preamble + ack + schedule ({total} s) exceeds the frame {t_frame} s")]
    ScheduleTooLong { total: f64, t_frame: f64 },
    #[error("scenario needs at least one sending device")]
    NoDevices,
}

/// A configuration that passed [`validate`]. Immutable from here on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidConfig {
    power: RadioPowerProfile,
    timing: TimingProfile,
    scenario: NetworkScenario,
}

impl ValidConfig {
    pub fn power(&self) -> &RadioPowerProfile {
        &self.power
    }

    pub fn timing(&self) -> &TimingProfile {
        &self.timing
    }

    pub fn scenario(&self) -> &NetworkScenario {
        &self.scenario
    }

    /// Same power/timing, different scenario. The scenario invariant is
    /// re-checked.
    pub fn with_scenario(&self, scenario: NetworkScenario) -> Result<Self, ConfigError> {
        validate(self.power, self.timing, scenario)
    }

    pub fn with_buffer(&self, buffer_size: usize) -> Self {
        Self {
            scenario: self.scenario.with_buffer(buffer_size),
            ..*self
        }
    }

    pub fn with_protocol(&self, protocol: Protocol) -> Self {
        Self {
            scenario: self.scenario.with_protocol(protocol),
            ..*self
        }
    }

    pub fn with_power(&self, power: RadioPowerProfile) -> Result<Self, ConfigError> {
        validate(power, self.timing, self.scenario)
    }

    pub fn derived(&self) -> DerivedProbabilities {
        derive(&self.timing)
    }
}

// Slack for the frame identity when durations arrive as milliseconds and
// are divided down to seconds.
const FRAME_IDENTITY_RTOL: f64 = 1e-12;

/// Checks every parameter invariant and returns the first violation.
pub fn validate(
    power: RadioPowerProfile,
    timing: TimingProfile,
    scenario: NetworkScenario,
) -> Result<ValidConfig, ConfigError> {
    for (field, value) in [
        ("p_tx", power.p_tx),
        ("p_rx", power.p_rx),
        ("p_poll", power.p_poll),
        ("p_sleep", power.p_sleep),
    ] {
        if !value.is_finite() || value < 0.0 {
            return Err(ConfigError::NegativePower { field, value });
        }
    }
    if power.p_sleep > power.p_poll {
        return Err(ConfigError::SleepAbovePoll {
            p_sleep: power.p_sleep,
            p_poll: power.p_poll,
        });
    }

    let t = &timing;
    for (field, value) in [
        ("t_frame", t.t_frame),
        ("t_listen", t.t_listen),
        ("t_sleep", t.t_sleep),
        ("t_data", t.t_data),
        ("bmac_preamble", t.bmac_preamble),
        ("xmac_preamble", t.xmac_preamble),
        ("xmac_ack", t.xmac_ack),
        ("xmac_backoff", t.xmac_backoff),
        ("lamac_preamble", t.lamac_preamble),
        ("lamac_ack", t.lamac_ack),
        ("lamac_schedule", t.lamac_schedule),
    ] {
        if !value.is_finite() || value <= 0.0 {
            return Err(ConfigError::NonPositiveDuration { field, value });
        }
    }
    if (t.t_listen + t.t_sleep - t.t_frame).abs() > FRAME_IDENTITY_RTOL * t.t_frame {
        return Err(ConfigError::FrameIdentity {
            t_frame: t.t_frame,
            t_listen: t.t_listen,
            t_sleep: t.t_sleep,
        });
    }
    if (t.bmac_preamble - t.t_frame).abs() > FRAME_IDENTITY_RTOL * t.t_frame {
        return Err(ConfigError::BmacPreambleNotFrame {
            bmac_preamble: t.bmac_preamble,
            t_frame: t.t_frame,
        });
    }
    for (protocol, strobe) in [
        (Protocol::Xmac, t.xmac_preamble + t.xmac_ack),
        (Protocol::Lamac, t.lamac_preamble + t.lamac_ack),
    ] {
        if t.t_listen <= strobe {
            return Err(ConfigError::GammaPrecondition {
                protocol,
                t_listen: t.t_listen,
                strobe,
            });
        }
    }
    let lamac_total = t.lamac_preamble + t.lamac_ack + t.lamac_schedule;
    if lamac_total > t.t_frame {
        return Err(ConfigError::ScheduleTooLong {
            total: lamac_total,
            t_frame: t.t_frame,
        });
    }
    if scenario.n_devices < 1 {
        return Err(ConfigError::NoDevices);
    }
    Ok(ValidConfig {
        power,
        timing,
        scenario,
    })
}

/// Probability that a receiver wakes while the sender is still polling.
pub fn sync_probability(t_listen: f64, t_frame: f64) -> f64 {
    t_listen / t_frame
}

/// Expected number of strobes needed to land one inside a receiver's poll
/// window: the mean of a geometric distribution whose per-strobe success
/// probability is `(t_listen - ack - preamble) / t_frame`.
pub fn expected_strobes(t_frame: f64, t_listen: f64, preamble: f64, ack: f64) -> f64 {
    1.0 / ((t_listen - ack - preamble) / t_frame)
}

/// Branch probabilities and strobe counts derived from a timing profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedProbabilities {
    pub p_sync: f64,
    pub gamma_x: f64,
    pub gamma_l: f64,
    /// Chance that a late second X-MAC sender still catches the ACK.
    pub q_x: f64,
    /// Chance that such a sender also hears the preamble preceding that ACK.
    pub u_x: f64,
    /// LA-MAC second-sender catch probability when the first pair is in sync.
    pub q_l_case2: f64,
    /// LA-MAC second-sender catch probability when nobody is in sync.
    pub q_l_case5: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_c: f64,
    pub p_d: f64,
    pub p_e: f64,
    /// `q_l_case2` exceeded 1 before clamping.
    pub q_l_case2_clamped: bool,
}

pub fn derive(timing: &TimingProfile) -> DerivedProbabilities {
    let t = timing;
    let tf = t.t_frame;
    let p_sync = sync_probability(t.t_listen, tf);
    let gamma_x = expected_strobes(tf, t.t_listen, t.xmac_preamble, t.xmac_ack);
    let gamma_l = expected_strobes(tf, t.t_listen, t.lamac_preamble, t.lamac_ack);
    let raw_q_l2 = 1.0 / gamma_l + (t.t_listen - t.lamac_ack) / tf;
    DerivedProbabilities {
        p_sync,
        gamma_x,
        gamma_l,
        q_x: (t.t_listen - t.xmac_ack) / tf,
        u_x: (t.xmac_preamble + t.xmac_ack) / (2.0 * t.xmac_preamble + t.xmac_ack),
        q_l_case2: raw_q_l2.min(1.0),
        q_l_case5: 1.0 / gamma_l,
        p_a: t.xmac_preamble / tf,
        p_b: t.xmac_ack / tf,
        p_c: t.lamac_preamble / tf,
        p_d: t.lamac_ack / tf,
        p_e: t.lamac_schedule / tf,
        q_l_case2_clamped: raw_q_l2 > 1.0,
    }
}

/// Expected energy split by role: sender (`e_tx`), receiver (`e_rx`),
/// polling (`e_poll`), sleeping (`e_sleep`) and all overhearers together
/// (`e_overhear`). Joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub e_tx: f64,
    pub e_rx: f64,
    pub e_poll: f64,
    pub e_sleep: f64,
    pub e_overhear: f64,
    pub e_total: f64,
}

impl EnergyBreakdown {
    pub fn new(e_tx: f64, e_rx: f64, e_poll: f64, e_sleep: f64, e_overhear: f64) -> Self {
        Self {
            e_tx,
            e_rx,
            e_poll,
            e_sleep,
            e_overhear,
            e_total: e_tx + e_rx + e_poll + e_sleep + e_overhear,
        }
    }

    pub fn components(&self) -> [f64; 5] {
        [
            self.e_tx,
            self.e_rx,
            self.e_poll,
            self.e_sleep,
            self.e_overhear,
        ]
    }

    fn from_components(c: [f64; 5]) -> Self {
        Self::new(c[0], c[1], c[2], c[3], c[4])
    }

    /// Component-wise scaling; the total is scaled too rather than re-summed.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            e_tx: self.e_tx * k,
            e_rx: self.e_rx * k,
            e_poll: self.e_poll * k,
            e_sleep: self.e_sleep * k,
            e_overhear: self.e_overhear * k,
            e_total: self.e_total * k,
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let (a, b) = (self.components(), other.components());
        Self::from_components(std::array::from_fn(|i| a[i] + b[i]))
    }

    pub fn minus(&self, other: &Self) -> Self {
        let (a, b) = (self.components(), other.components());
        Self::from_components(std::array::from_fn(|i| a[i] - b[i]))
    }

    /// Relative gap between `e_total` and the component sum.
    pub fn additivity_error(&self) -> f64 {
        let sum: f64 = self.components().iter().sum();
        if self.e_total == 0.0 {
            sum.abs()
        } else {
            ((sum - self.e_total) / self.e_total).abs()
        }
    }
}
