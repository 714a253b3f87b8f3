//! Closed-form values against hand evaluations and sampled oracles.

mod common;

use common::{config, rel, timing, POWER};
use lplmac::analytic::{
    bmac_b1, expected_energy, idle_energy, lamac_b1, xmac_b1, xmac_b2, AnalyticOptions,
};
use lplmac::params::{derive, Protocol};

const SAMPLES: usize = 1_000_000;

#[test]
fn strobe_count_matches_geometric_trials() {
    let t = timing();
    let d = derive(&t);
    assert!((d.gamma_x - 250.0 / 17.0).abs() < 1e-12);
    let sampled = common::sampled_strobes(&t, t.xmac_preamble, t.xmac_ack, SAMPLES, 7);
    assert!(
        rel(sampled, d.gamma_x) < 0.005,
        "sampled {sampled} vs {}",
        d.gamma_x
    );
    let sampled_l = common::sampled_strobes(&t, t.lamac_preamble, t.lamac_ack, SAMPLES, 8);
    assert!(rel(sampled_l, d.gamma_l) < 0.005);
}

#[test]
fn idle_group_by_hand() {
    // 10 * (0.025 * 0.0468 + 0.225 * 0.0000012)
    let by_hand: f64 = 10.0 * (0.025 * 0.0468 + 0.225 * 0.0000012);
    assert!((by_hand - 0.0117027).abs() < 1e-12);
    for p in Protocol::ALL {
        let e = idle_energy(&config(p, 9, 0)).unwrap().expected.e_total;
        assert!((e - by_hand).abs() < 1e-15, "{p}: {e}");
    }
}

#[test]
fn bmac_receive_cost_by_hand_and_by_sampling() {
    let e = bmac_b1(&config(Protocol::Bmac, 9, 1))
        .unwrap()
        .expected
        .e_rx;
    let by_hand = (0.1 * 0.25 + 0.9 * 0.125 + 0.020) * 0.0468;
    assert!((e - by_hand).abs() < 1e-15);
    assert!((e - 0.007371).abs() < 1e-6);
    let sampled = common::bmac_rx_oracle(&timing(), &POWER, SAMPLES, 3);
    assert!(rel(sampled, e) < 0.01, "sampled {sampled} vs {e}");
}

#[test]
fn bmac_total_matches_sampled_tree() {
    let cfg = config(Protocol::Bmac, 9, 1);
    let e = bmac_b1(&cfg).unwrap().expected.e_total;
    let sampled = common::bmac_b1_oracle(&cfg, SAMPLES, 11);
    assert!(rel(sampled, e) < 0.02, "sampled {sampled} vs {e}");
}

#[test]
fn xmac_total_matches_sampled_tree() {
    let cfg = config(Protocol::Xmac, 9, 1);
    let e = xmac_b1(&cfg).unwrap().expected.e_total;
    let sampled = common::xmac_b1_oracle(&cfg, SAMPLES, 12);
    assert!(rel(sampled, e) < 0.02, "sampled {sampled} vs {e}");
}

#[test]
fn lamac_total_matches_sampled_tree() {
    let cfg = config(Protocol::Lamac, 9, 1);
    let e = lamac_b1(&cfg).unwrap().expected.e_total;
    let sampled = common::lamac_b1_oracle(&cfg, SAMPLES, 13);
    assert!(rel(sampled, e) < 0.02, "sampled {sampled} vs {e}");
}

#[test]
fn sampled_trees_track_other_group_sizes() {
    for n in [2, 5, 20] {
        for (p, oracle) in [
            (
                Protocol::Xmac,
                common::xmac_b1_oracle as fn(&_, usize, u64) -> f64,
            ),
            (Protocol::Lamac, common::lamac_b1_oracle),
        ] {
            let cfg = config(p, n, 1);
            let e = expected_energy(&cfg, AnalyticOptions::default())
                .unwrap()
                .expected
                .e_total;
            let sampled = oracle(&cfg, 200_000, n as u64);
            assert!(rel(sampled, e) < 0.02, "{p} N={n}: {sampled} vs {e}");
        }
    }
}

#[test]
fn xmac_two_packet_third_case_recomputed() {
    // Sum the printed terms for the "second sender misses the ACK" branch
    // directly, reusing only the single-packet components.
    let cfg = config(Protocol::Xmac, 9, 2);
    let one = xmac_b1(&cfg.with_buffer(1)).unwrap().expected;
    let r = xmac_b2(&cfg).unwrap();
    let case = r
        .cases
        .iter()
        .find(|c| c.case_id == "XMAC/B2/Case3")
        .unwrap();
    let (tp, ta, td, tl, tf) = (0.004, 0.004, 0.020, 0.025, 0.250);
    let (pt, pr, pl, ps) = (0.0507, 0.0468, 0.0468, 1.2e-6);
    let n_o = 7.0;
    let e_t = tp * pt + ta * pr + td * pt + one.e_tx;
    let e_r = tp * pr + ta * pt + td * pr + one.e_rx;
    let e_l = (tl + tl + tl / 2.0) * pl + one.e_poll;
    let e_s = (3.0 * tf - (tl + tp + ta + td) - tl - (tl / 2.0 + tp + ta + td)) * ps + one.e_sleep;
    let e_o = (n_o + (n_o + 1.0)) * one.e_overhear / (n_o + 1.0);
    for (got, want) in case
        .energy
        .components()
        .iter()
        .zip([e_t, e_r, e_l, e_s, e_o])
    {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}
