//! Shared fixtures and independent oracles for the integration tests.
//!
//! The Monte Carlo samplers below walk the wakeup-phase trees one sampled
//! scenario at a time: phases are drawn uniformly, the branch is decided
//! from the phases, strobe counts are drawn from a geometric law, and the
//! per-branch costs are written out from scratch. Nothing here calls into
//! the analytic module.

#![allow(dead_code)]

use lplmac::params::{
    validate, NetworkScenario, Protocol, RadioPowerProfile, TimingProfile, ValidConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

/// CC1100-class radio at 3 V, spelled out.
pub const POWER: RadioPowerProfile = RadioPowerProfile {
    p_tx: 0.0507,
    p_rx: 0.0468,
    p_poll: 0.0468,
    p_sleep: 1.2e-6,
};

/// 250 ms frame with a 25 ms poll, 20 ms data, 4 ms strobes and ACKs.
pub fn timing() -> TimingProfile {
    TimingProfile {
        t_frame: 0.250,
        t_listen: 0.025,
        t_sleep: 0.225,
        t_data: 0.020,
        bmac_preamble: 0.250,
        xmac_preamble: 0.004,
        xmac_ack: 0.004,
        xmac_backoff: 0.050,
        lamac_preamble: 0.004,
        lamac_ack: 0.004,
        lamac_schedule: 0.012,
    }
}

pub fn config(protocol: Protocol, n_devices: usize, buffer: usize) -> ValidConfig {
    validate(
        POWER,
        timing(),
        NetworkScenario::new(protocol, n_devices, buffer),
    )
    .unwrap()
}

/// Maps nine unit draws onto a timing profile that always validates.
pub fn timing_from(u: [f64; 9]) -> TimingProfile {
    let ms = |x: f64| x / 1000.0;
    let t_listen = ms(10.0 + 90.0 * u[0]);
    let t_frame = t_listen + ms(20.0 + 980.0 * u[1]);
    // Preamble + ACK stays under 90 % of the poll window.
    let strobe_budget = 0.9 * t_listen;
    let split = |a: f64, b: f64| {
        let total = strobe_budget * (0.1 + 0.9 * a);
        let pre = total * (0.2 + 0.6 * b);
        (pre, total - pre)
    };
    let (xp, xa) = split(u[2], u[3]);
    let (lp, la) = split(u[4], u[5]);
    let room = t_frame - lp - la;
    TimingProfile {
        t_frame,
        t_listen,
        t_sleep: t_frame - t_listen,
        t_data: ms(1.0 + 49.0 * u[6]),
        bmac_preamble: t_frame,
        xmac_preamble: xp,
        xmac_ack: xa,
        xmac_backoff: ms(1.0 + 99.0 * u[7]),
        lamac_preamble: lp,
        lamac_ack: la,
        lamac_schedule: (ms(1.0) + ms(29.0) * u[8]).min(room),
    }
}

pub fn random_timing(rng: &mut impl Rng) -> TimingProfile {
    let mut u = [0.0; 9];
    for x in &mut u {
        *x = rng.random();
    }
    timing_from(u)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mean strobes until one lands in a poll window, by direct trials.
pub fn sampled_strobes(
    t: &TimingProfile,
    preamble: f64,
    ack: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let hit = (t.t_listen - ack - preamble) / t.t_frame;
    let mut rng = rng(seed);
    let mut total = 0u64;
    for _ in 0..samples {
        let mut n = 1u64;
        while rng.random::<f64>() >= hit {
            n += 1;
        }
        total += n;
    }
    total as f64 / samples as f64
}

/// Cost of a node that polls `poll`, receives `rx` and sleeps the rest of
/// one frame.
fn brief(t: &TimingProfile, p: &RadioPowerProfile, poll: f64, rx: f64) -> f64 {
    poll * p.p_poll + rx * p.p_rx + (t.t_frame - poll - rx) * p.p_sleep
}

/// Phases relative to the sender's wakeup at 0, which polls `[0, t_l)`.
struct Phases {
    receiver: f64,
    overhearer: f64,
}

impl Phases {
    fn draw(rng: &mut impl Rng, t_frame: f64) -> Self {
        Self {
            receiver: rng.random::<f64>() * t_frame,
            overhearer: rng.random::<f64>() * t_frame,
        }
    }
}

/// Where a not-in-sync overhearer lands on the exchange timeline, as a
/// uniform offset in `[0, t_f)` re-derived from its phase.
fn offset(phase: f64, from: f64, t_frame: f64) -> f64 {
    (phase - from) / (t_frame - from) * t_frame
}

pub fn bmac_rx_oracle(t: &TimingProfile, p: &RadioPowerProfile, samples: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let phase = rng.random::<f64>() * t.t_frame;
        let heard = if phase < t.t_listen {
            t.bmac_preamble
        } else {
            t.bmac_preamble * offset(phase, t.t_listen, t.t_frame) / t.t_frame
        };
        acc += (heard + t.t_data) * p.p_rx;
    }
    acc / samples as f64
}

pub fn bmac_b1_oracle(cfg: &ValidConfig, samples: usize, seed: u64) -> f64 {
    let (t, p) = (cfg.timing(), cfg.power());
    let n_o = (cfg.scenario().n_devices - 1) as f64;
    let tpb = t.bmac_preamble;
    let mut rng = rng(seed);
    // Preamble heard and extra poll for a node waking at `phase`.
    let listen = |phase: f64| {
        if phase < t.t_listen {
            (tpb, t.t_listen / 2.0)
        } else {
            (tpb * offset(phase, t.t_listen, t.t_frame) / t.t_frame, 0.0)
        }
    };
    let mut acc = 0.0;
    for _ in 0..samples {
        let ph = Phases::draw(&mut rng, t.t_frame);
        let (heard, extra) = listen(ph.receiver);
        let sender_on = tpb + t.t_data + t.t_listen;
        let receiver_on = extra + heard + t.t_data;
        let pair = (tpb + t.t_data) * p.p_tx
            + (heard + t.t_data) * p.p_rx
            + (t.t_listen + extra) * p.p_poll
            + (2.0 * t.t_frame - sender_on - receiver_on) * p.p_sleep;
        let (o_heard, o_extra) = listen(ph.overhearer);
        let o_on = o_extra + o_heard + t.t_data;
        let overhearer =
            (o_heard + t.t_data) * p.p_rx + o_extra * p.p_poll + (t.t_frame - o_on) * p.p_sleep;
        acc += pair + n_o * overhearer;
    }
    acc / samples as f64
}

/// Shared by the strobed protocols: `sync` says the receiver woke during
/// the sender's poll, `strobes` is the realised strobe count.
struct Draw {
    sync: bool,
    strobes: f64,
    ph: Phases,
}

fn draws(
    t: &TimingProfile,
    preamble: f64,
    ack: f64,
    samples: usize,
    seed: u64,
) -> impl Iterator<Item = Draw> {
    let mut rng = rng(seed);
    let hit = (t.t_listen - ack - preamble) / t.t_frame;
    let geo = Geometric::new(hit).unwrap();
    let (tl, tf) = (t.t_listen, t.t_frame);
    (0..samples).map(move |_| {
        let ph = Phases::draw(&mut rng, tf);
        let sync = ph.receiver < tl;
        let strobes = if sync {
            1.0
        } else {
            (geo.sample(&mut rng) + 1) as f64
        };
        Draw { sync, strobes, ph }
    })
}

/// Which overhearer branch applies: `None` for "in sync with the sender",
/// `Some(None)` for "woke before the receiver", `Some(Some(w))` for a
/// uniform offset `w` on the exchange that follows the receiver's wakeup.
fn overhearer_branch(d: &Draw, t: &TimingProfile) -> Option<Option<f64>> {
    let (tl, tf) = (t.t_listen, t.t_frame);
    let o = d.ph.overhearer;
    if o < tl {
        None
    } else if d.sync {
        Some(Some(offset(o, tl, tf)))
    } else if o < d.ph.receiver {
        Some(None)
    } else {
        Some(Some(offset(o, d.ph.receiver, tf)))
    }
}

pub fn xmac_b1_oracle(cfg: &ValidConfig, samples: usize, seed: u64) -> f64 {
    let (t, p) = (cfg.timing(), cfg.power());
    let n_o = (cfg.scenario().n_devices - 1) as f64;
    let (tp, ta, td, tl, tb) = (
        t.xmac_preamble,
        t.xmac_ack,
        t.t_data,
        t.t_listen,
        t.xmac_backoff,
    );
    let mut acc = 0.0;
    for d in draws(t, tp, ta, samples, seed) {
        let k = d.strobes;
        let receiver_poll = if d.sync { tl / 2.0 } else { (tp + ta) / 2.0 };
        let sender_on = tl + k * (tp + ta) + td;
        let receiver_on = receiver_poll + tp + ta + td + tb;
        let pair = k * tp * p.p_tx
            + ta * p.p_rx
            + td * p.p_tx
            + (td + tp) * p.p_rx
            + ta * p.p_tx
            + (tl + (k - 1.0) * ta + receiver_poll + tb) * p.p_poll
            + (2.0 * t.t_frame - sender_on - receiver_on) * p.p_sleep;
        let overhearer = match overhearer_branch(&d, t) {
            None => brief(t, p, tl / 2.0, tp),
            Some(None) => brief(t, p, (tp + ta) / 2.0, tp),
            Some(Some(w)) if w < tp => brief(t, p, tp / 2.0, ta),
            Some(Some(w)) if w < tp + ta => brief(t, p, ta / 2.0, td),
            Some(Some(_)) => brief(t, p, tl, 0.0),
        };
        acc += pair + n_o * overhearer;
    }
    acc / samples as f64
}

pub fn lamac_b1_oracle(cfg: &ValidConfig, samples: usize, seed: u64) -> f64 {
    let (t, p) = (cfg.timing(), cfg.power());
    let n_o = (cfg.scenario().n_devices - 1) as f64;
    let (tp, ta, tg, td, tl) = (
        t.lamac_preamble,
        t.lamac_ack,
        t.lamac_schedule,
        t.t_data,
        t.t_listen,
    );
    let mut acc = 0.0;
    for d in draws(t, tp, ta, samples, seed) {
        let k = d.strobes;
        let sender_on = tl + k * tp + ta + (k - 1.0) * ta + td + tg;
        let receiver_on = tl + td + tg;
        let pair = (k * tp + td) * p.p_tx
            + (ta + tg) * p.p_rx
            + (tp + td) * p.p_rx
            + (ta + tg) * p.p_tx
            + ((tl + (k - 1.0) * ta) + (tl - tp - ta)) * p.p_poll
            + (2.0 * t.t_frame - sender_on - receiver_on) * p.p_sleep;
        let overhearer = match overhearer_branch(&d, t) {
            None => brief(t, p, tl / 2.0, tp),
            Some(None) => brief(t, p, (tp + ta) / 2.0, tp),
            Some(Some(w)) if w < tp => brief(t, p, tp / 2.0, ta),
            Some(Some(w)) if w < tp + ta => brief(t, p, ta / 2.0, tg),
            Some(Some(w)) if w < tp + ta + tg => brief(t, p, tg / 2.0, td),
            Some(Some(_)) => brief(t, p, tl, 0.0),
        };
        acc += pair + n_o * overhearer;
    }
    acc / samples as f64
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
