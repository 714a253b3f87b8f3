//! Randomised invariants over configurations, traces and simulated runs.

mod common;

use common::{config, timing, timing_from, POWER};
use lplmac::analytic::{
    bmac_energy, expected_energy, idle_energy, lamac_b1, lamac_b2, xmac_b1, xmac_b2,
    AnalyticOptions,
};
use lplmac::metrics::{delivery_of, energy_of};
use lplmac::params::{
    derive, validate, NetworkScenario, Protocol, RadioPowerProfile, TimingProfile, ValidConfig,
};
use lplmac::protocols::strobe_limit;
use lplmac::simkernel::{run, MessageKind, RadioTrace, RunOutput, SimOptions};
use proptest::prelude::*;
use rayon::prelude::*;

fn unit9() -> impl Strategy<Value = [f64; 9]> {
    prop::array::uniform9(0.0..1.0f64)
}

fn power() -> impl Strategy<Value = RadioPowerProfile> {
    (0.0..0.2f64, 0.0..0.2f64, 0.0..0.2f64, 0.0..1.0f64).prop_map(|(t, r, l, s)| {
        RadioPowerProfile {
            p_tx: t,
            p_rx: r,
            p_poll: l,
            p_sleep: s * l,
        }
    })
}

fn cfg_with(
    t: TimingProfile,
    power: RadioPowerProfile,
    p: Protocol,
    n: usize,
    b: usize,
) -> ValidConfig {
    validate(power, t, NetworkScenario::new(p, n, b)).unwrap()
}

fn additive(e: &lplmac::params::EnergyBreakdown) -> bool {
    let sum: f64 = e.components().iter().sum();
    (sum - e.e_total).abs() <= 1e-12 * e.e_total.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trees_are_normalised(u in unit9(), n in 2usize..40) {
        let t = timing_from(u);
        for (name, r) in [
            ("xmac_b1", xmac_b1(&cfg_with(t, POWER, Protocol::Xmac, n, 1)).unwrap()),
            ("xmac_b2", xmac_b2(&cfg_with(t, POWER, Protocol::Xmac, n, 2)).unwrap()),
            ("lamac_b1", lamac_b1(&cfg_with(t, POWER, Protocol::Lamac, n, 1)).unwrap()),
            ("lamac_b2", lamac_b2(&cfg_with(t, POWER, Protocol::Lamac, n, 2)).unwrap()),
        ] {
            prop_assert!((r.probability_mass() - 1.0).abs() < 1e-12, "{name}: {}", r.probability_mass());
            prop_assert!(r.cases.iter().all(|c| (0.0..=1.0).contains(&c.probability)), "{name}");
            prop_assert!(additive(&r.expected), "{name}");
            prop_assert!(r.cases.iter().all(|c| additive(&c.energy)), "{name}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derived_quantities_stay_in_range(u in unit9()) {
        let t = timing_from(u);
        let d = derive(&t);
        prop_assert_eq!(d, derive(&t));
        prop_assert!(d.p_sync > 0.0 && d.p_sync < 1.0);
        prop_assert!(d.gamma_x > 1.0 && d.gamma_l > 1.0);
        for x in [d.q_x, d.u_x, d.q_l_case2, d.q_l_case5, d.p_a, d.p_b, d.p_c, d.p_d, d.p_e] {
            prop_assert!((0.0..=1.0).contains(&x), "{x}");
        }
        prop_assert!(d.p_a + d.p_b <= 1.0);
        prop_assert!(d.p_c + d.p_d + d.p_e <= 1.0);
    }

    #[test]
    fn every_result_is_additive(u in unit9(), pw in power(), n in 2usize..20, b in 0usize..60) {
        let t = timing_from(u);
        for p in Protocol::ALL {
            let r = expected_energy(&cfg_with(t, pw, p, n, b), AnalyticOptions { extrapolate: true }).unwrap();
            prop_assert!(additive(&r.expected), "{p} B={b}");
        }
    }

    #[test]
    fn bmac_is_exactly_linear(u in unit9(), pw in power(), n in 1usize..20) {
        let t = timing_from(u);
        let one = bmac_energy(&cfg_with(t, pw, Protocol::Bmac, n, 1)).expected;
        for b in 1..=50 {
            let e = bmac_energy(&cfg_with(t, pw, Protocol::Bmac, n, b)).expected;
            prop_assert_eq!(e.components(), one.scaled(b as f64).components());
        }
    }

    #[test]
    fn idling_is_protocol_blind(u in unit9(), pw in power(), n in 1usize..30) {
        let t = timing_from(u);
        let base = idle_energy(&cfg_with(t, pw, Protocol::Bmac, n, 0)).unwrap();
        for p in [Protocol::Xmac, Protocol::Lamac] {
            let r = expected_energy(&cfg_with(t, pw, p, n, 0), AnalyticOptions::default()).unwrap();
            prop_assert_eq!(&r, &base);
        }
    }

    #[test]
    fn trace_energy_is_linear_in_power(seed in any::<u64>(), b in 0usize..8, k in 1u32..6) {
        let cfg = config(Protocol::Lamac, 6, b);
        let r = run(&cfg, seed, &SimOptions::default()).unwrap();
        let e1 = energy_of(&r.trace, &POWER).unwrap().total;
        let scale = f64::from(1u32 << k);
        let ek = energy_of(&r.trace, &POWER.scaled(scale)).unwrap().total;
        prop_assert_eq!(ek, scale * e1);
    }

    #[test]
    fn trace_energy_adds_over_node_sets(seed in any::<u64>(), b in 0usize..8, cut in 1usize..7) {
        let cfg = config(Protocol::Xmac, 6, b);
        let r = run(&cfg, seed, &SimOptions::default()).unwrap();
        let whole = energy_of(&r.trace, &POWER).unwrap().total;
        let (a, c) = r.trace.nodes.split_at(cut);
        let part = |nodes: &[Vec<_>]| energy_of(&RadioTrace { nodes: nodes.to_vec() }, &POWER).unwrap().total;
        prop_assert!((part(a) + part(c) - whole).abs() <= 1e-12 * whole);
    }
}

#[test]
fn strobe_count_falls_as_the_poll_window_grows() {
    let mut t = timing();
    let mut last = f64::INFINITY;
    for ms in 9..=200 {
        t.t_listen = ms as f64 / 1000.0;
        t.t_sleep = t.t_frame - t.t_listen;
        let g = derive(&t).gamma_x;
        assert!(g < last, "t_listen {ms} ms");
        last = g;
    }
}

#[test]
fn bmac_send_cost_grows_with_the_preamble() {
    let mut last = 0.0;
    for ms in (60..=2000).step_by(10) {
        let tf = ms as f64 / 1000.0;
        let t = TimingProfile {
            t_frame: tf,
            t_sleep: tf - 0.025,
            bmac_preamble: tf,
            ..timing()
        };
        let e = bmac_energy(&cfg_with(t, POWER, Protocol::Bmac, 9, 1))
            .expected
            .e_tx;
        assert!(e >= last);
        last = e;
    }
}

fn random_runs(count: u64) -> impl ParallelIterator<Item = (Protocol, usize, u64, RunOutput)> {
    (0..count).into_par_iter().map(|i| {
        let p = Protocol::ALL[(i % 3) as usize];
        let n = 1 + (i / 3 % 15) as usize;
        let b = (i / 45 % 31) as usize;
        let seed = 0x5eed ^ i;
        let r = run(&config(p, n, b), seed, &SimOptions::default())
            .unwrap_or_else(|e| panic!("{p} N={n} B={b} seed {seed}: {e}"));
        (p, b, seed, r)
    })
}

#[test]
fn reachable_transitions_are_defined_and_runs_conserve() {
    random_runs(10_000).for_each(|(p, b, seed, r)| {
        let tag = format!("{p} B={b} seed {seed}");
        r.trace.check_tiling(r.sim_end).expect(&tag);
        assert_eq!(
            r.packets.received + r.packets.lost + r.packets.remaining,
            b,
            "{tag}"
        );
        let mut ids: Vec<_> = r.deliveries.iter().map(|d| d.packet).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), r.deliveries.len(), "{tag}: duplicate delivery");
        let ratio = delivery_of(&r.deliveries, b);
        assert!((0.0..=1.0).contains(&ratio), "{tag}");
    });
}

#[test]
fn lamac_granted_frames_never_overlap() {
    random_runs(3_000)
        .filter(|(p, ..)| *p == Protocol::Lamac)
        .for_each(|(_, b, seed, r)| {
            let data: Vec<_> = r
                .transmissions
                .iter()
                .filter(|t| t.kind == MessageKind::Data)
                .collect();
            for (i, x) in data.iter().enumerate() {
                for y in &data[i + 1..] {
                    assert!(
                        x.end() <= y.start || y.end() <= x.start,
                        "B={b} seed {seed}"
                    );
                }
                assert!(!x.collided, "B={b} seed {seed}");
            }
        });
}

#[test]
fn xmac_strobes_per_attempt_are_bounded() {
    let t = timing();
    let limit = strobe_limit(&t, t.xmac_preamble, t.xmac_ack) as usize;
    random_runs(3_000)
        .filter(|(p, ..)| *p == Protocol::Xmac)
        .for_each(|(_, b, seed, r)| {
            for sender in 1..r.trace.nodes.len() {
                // A new attempt needs a fresh wakeup and a full poll, so a
                // gap of at least one poll window separates attempts.
                let mut run_len = 0;
                let mut last_end = f64::NEG_INFINITY;
                for s in r
                    .transmissions
                    .iter()
                    .filter(|x| x.sender == sender && x.kind == MessageKind::ShortPreamble)
                {
                    if s.start - last_end >= t.t_listen {
                        run_len = 0;
                    }
                    run_len += 1;
                    last_end = s.end();
                    assert!(run_len <= limit, "B={b} seed {seed} node {sender}");
                }
            }
        });
}
