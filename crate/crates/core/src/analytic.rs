//! Closed-form expected energy for a star of `N` senders and one sink, as a
//! function of the global backlog `B`.
//!
//! Each evaluator returns the expected [`EnergyBreakdown`] and, where the
//! model is a probability tree over wakeup orderings, the tree itself as a
//! list of [`CaseOutcome`] leaves. Every leaf carries the *whole-group*
//! energy conditioned on that case, so the expectation is always
//! `sum(probability * energy)` over the leaves.
//!
//! For the single-packet trees the enumerated cases describe where one
//! overhearer wakes relative to the active pair; the leaf energy is the
//! pair's expected cost plus `N_o` overhearers all paying that case's cost.

use std::fmt;

use thiserror::Error;

use crate::params::{
    derive, DerivedProbabilities, EnergyBreakdown, NetworkScenario, Protocol, RadioPowerProfile,
    TimingProfile, ValidConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub case_id: String,
    pub probability: f64,
    pub energy: EnergyBreakdown,
}

/// A quantity that left its physical range and was clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub what: String,
    pub raw: f64,
    pub clamped_to: f64,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {:.6e} clamped to {}",
            self.what, self.raw, self.clamped_to
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticResult {
    pub expected: EnergyBreakdown,
    pub cases: Vec<CaseOutcome>,
    /// Set when the value comes from the linear B > 2 extension rather than
    /// the model proper.
    pub extrapolated: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl AnalyticResult {
    fn plain(expected: EnergyBreakdown) -> Self {
        Self {
            expected,
            cases: Vec::new(),
            extrapolated: false,
            diagnostics: Vec::new(),
        }
    }

    fn from_tree(cases: Vec<CaseOutcome>, diagnostics: Vec<Diagnostic>) -> Self {
        let mut acc = [0.0; 5];
        for c in &cases {
            for (a, e) in acc.iter_mut().zip(c.energy.components()) {
                *a += c.probability * e;
            }
        }
        Self {
            expected: EnergyBreakdown::new(acc[0], acc[1], acc[2], acc[3], acc[4]),
            cases,
            extrapolated: false,
            diagnostics,
        }
    }

    pub fn probability_mass(&self) -> f64 {
        self.cases.iter().map(|c| c.probability).sum()
    }

    /// Relative gap between `expected.e_total` and the probability-weighted
    /// leaf totals. Zero for results without a tree.
    pub fn tree_consistency_error(&self) -> f64 {
        if self.cases.is_empty() {
            return 0.0;
        }
        let weighted: f64 = self
            .cases
            .iter()
            .map(|c| c.probability * c.energy.e_total)
            .sum();
        let scale = self.expected.e_total.abs().max(f64::MIN_POSITIVE);
        (weighted - self.expected.e_total).abs() / scale
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalyticError {
    #[error("{protocol} has no closed-form model for B = {buffer}; pass --extrapolate to use the linear extension from B = 1, 2")]
    UnsupportedBufferSize { buffer: usize, protocol: Protocol },
    #[error("{operation} requires B = {expected}, got B = {got}")]
    WrongBufferSize {
        operation: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{operation} needs at least two senders (N = {n_devices})")]
    TooFewDevices {
        operation: &'static str,
        n_devices: usize,
    },
}

/// Shorthand bundle so the formulas read close to their symbolic form.
struct Sym {
    tf: f64,
    tl: f64,
    td: f64,
    tb: f64,
    pt: f64,
    pr: f64,
    pl: f64,
    ps: f64,
    p: f64,
    d: DerivedProbabilities,
    t: TimingProfile,
}

impl Sym {
    fn new(power: &RadioPowerProfile, timing: &TimingProfile) -> Self {
        Self {
            tf: timing.t_frame,
            tl: timing.t_listen,
            td: timing.t_data,
            tb: timing.xmac_backoff,
            pt: power.p_tx,
            pr: power.p_rx,
            pl: power.p_poll,
            ps: power.p_sleep,
            p: timing.t_listen / timing.t_frame,
            d: derive(timing),
            t: *timing,
        }
    }
}

#[derive(Default)]
struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    /// Sleep energy derived from a residual time budget can go negative
    /// for extreme timings; floor it at zero and record that it happened.
    fn sleep(&mut self, what: &str, raw: f64) -> f64 {
        if raw < 0.0 {
            self.0.push(Diagnostic {
                what: format!("{what} sleep energy"),
                raw,
                clamped_to: 0.0,
            });
            0.0
        } else {
            raw
        }
    }

    fn prob(&mut self, what: &str, raw: f64) -> f64 {
        if raw > 1.0 {
            self.0.push(Diagnostic {
                what: what.to_string(),
                raw,
                clamped_to: 1.0,
            });
            1.0
        } else {
            raw
        }
    }
}

fn expect_buffer(
    scenario: &NetworkScenario,
    operation: &'static str,
    expected: usize,
) -> Result<(), AnalyticError> {
    if scenario.buffer_size != expected {
        return Err(AnalyticError::WrongBufferSize {
            operation,
            expected,
            got: scenario.buffer_size,
        });
    }
    Ok(())
}

fn expect_pairs(scenario: &NetworkScenario, operation: &'static str) -> Result<(), AnalyticError> {
    if scenario.n_devices < 2 {
        return Err(AnalyticError::TooFewDevices {
            operation,
            n_devices: scenario.n_devices,
        });
    }
    Ok(())
}

/// Empty backlog: every node, sink included, polls once and sleeps for the
/// rest of the frame. Identical for all protocols.
pub fn idle_energy(cfg: &ValidConfig) -> Result<AnalyticResult, AnalyticError> {
    expect_buffer(cfg.scenario(), "idle_energy", 0)?;
    Ok(idle_unchecked(
        cfg.power(),
        cfg.timing(),
        cfg.scenario().n_devices,
    ))
}

fn idle_unchecked(power: &RadioPowerProfile, timing: &TimingProfile, n: usize) -> AnalyticResult {
    let nodes = (n + 1) as f64;
    AnalyticResult::plain(EnergyBreakdown::new(
        0.0,
        0.0,
        nodes * timing.t_listen * power.p_poll,
        nodes * timing.t_sleep * power.p_sleep,
        0.0,
    ))
}

// ---------------------------------------------------------------------------
// B-MAC
// ---------------------------------------------------------------------------

pub fn bmac_b1(cfg: &ValidConfig) -> Result<AnalyticResult, AnalyticError> {
    expect_buffer(cfg.scenario(), "bmac_b1", 1)?;
    Ok(bmac_b1_unchecked(cfg))
}

fn bmac_b1_unchecked(cfg: &ValidConfig) -> AnalyticResult {
    let s = Sym::new(cfg.power(), cfg.timing());
    let n_o = (cfg.scenario().n_devices - 1) as f64;
    let tpb = s.t.bmac_preamble;
    let p = s.p;
    let mut diag = Diagnostics::default();

    let e_t = (tpb + s.td) * s.pt;
    let e_r = (p * tpb + (1.0 - p) * tpb / 2.0 + s.td) * s.pr;
    let e_l = (1.0 + p / 2.0) * s.tl * s.pl;
    let e_s = diag.sleep(
        "BMAC/B1 pair",
        (2.0 * s.tf - (tpb / 2.0 * (p + 3.0) + 2.0 * s.td + s.tl * (1.0 + p / 2.0))) * s.ps,
    );
    let per_overhearer_sleep = diag.sleep(
        "BMAC/B1 overhearer",
        (s.tf - (p * (s.tl / 2.0 + tpb) + (1.0 - p) * tpb / 2.0 + s.td)) * s.ps,
    );
    let e_o = n_o * (e_r + p * (s.tl / 2.0) * s.pl + per_overhearer_sleep);

    let mut r = AnalyticResult::plain(EnergyBreakdown::new(e_t, e_r, e_l, e_s, e_o));
    r.diagnostics = diag.0;
    r
}

/// B-MAC cost grows linearly with the backlog: one long preamble per packet
/// and one sender per frame.
pub fn bmac_energy(cfg: &ValidConfig) -> AnalyticResult {
    let b = cfg.scenario().buffer_size;
    if b == 0 {
        return idle_unchecked(cfg.power(), cfg.timing(), cfg.scenario().n_devices);
    }
    let one = bmac_b1_unchecked(&cfg.with_buffer(1));
    if b == 1 {
        return one;
    }
    AnalyticResult {
        expected: one.expected.scaled(b as f64),
        cases: Vec::new(),
        extrapolated: false,
        diagnostics: one.diagnostics,
    }
}

// ---------------------------------------------------------------------------
// Strobed-preamble building blocks (X-MAC and LA-MAC share the overhearer
// case shapes, with different message sizes)
// ---------------------------------------------------------------------------

/// Overhearer polls `poll`, receives `rx`, sleeps the rest of one frame.
fn overhearer_cost(s: &Sym, diag: &mut Diagnostics, id: &str, poll: f64, rx: f64) -> f64 {
    poll * s.pl + rx * s.pr + diag.sleep(id, (s.tf - poll - rx) * s.ps)
}

fn leaves_with_pair(
    pair: &EnergyBreakdown,
    n_o: f64,
    leaves: Vec<(String, f64, f64)>,
) -> Vec<CaseOutcome> {
    leaves
        .into_iter()
        .map(|(case_id, probability, per_overhearer)| CaseOutcome {
            case_id,
            probability,
            energy: EnergyBreakdown::new(
                pair.e_tx,
                pair.e_rx,
                pair.e_poll,
                pair.e_sleep,
                n_o * per_overhearer,
            ),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// X-MAC
// ---------------------------------------------------------------------------

struct XmacOne {
    cases: Vec<CaseOutcome>,
    expected: EnergyBreakdown,
}

fn xmac_one(cfg: &ValidConfig, diag: &mut Diagnostics) -> XmacOne {
    let s = Sym::new(cfg.power(), cfg.timing());
    let n_o = (cfg.scenario().n_devices - 1) as f64;
    let (tp, ta) = (s.t.xmac_preamble, s.t.xmac_ack);
    let (p, g) = (s.p, s.d.gamma_x);
    let strobes = (1.0 - p) * g + p;

    let e_t = strobes * tp * s.pt + ta * s.pr + s.td * s.pt;
    let e_r = (s.td + tp) * s.pr + ta * s.pt;
    // Sender and receiver polling, including the receiver's post-data hold.
    let e_l =
        ((1.0 - p) * ((tp + ta) / 2.0 + (g - 1.0) * ta) + (p / 2.0 + 1.0) * s.tl + s.tb) * s.pl;
    let e_s = diag.sleep(
        "XMAC/B1 pair",
        (2.0 * s.tf
            - 2.0 * s.td
            - p * s.tl / 2.0
            - tp
            - ta
            - (1.0 - p) * (tp + ta) / 2.0
            - s.tl
            - strobes * (tp + ta)
            - s.tb)
            * s.ps,
    );
    let pair = EnergyBreakdown::new(e_t, e_r, e_l, e_s, 0.0);

    let c1 = overhearer_cost(&s, diag, "XMAC/B1/Case1", s.tl / 2.0, tp);
    let c2 = overhearer_cost(&s, diag, "XMAC/B1/Case2", tp / 2.0, ta);
    let c3 = overhearer_cost(&s, diag, "XMAC/B1/Case3", ta / 2.0, s.td);
    let c4 = overhearer_cost(&s, diag, "XMAC/B1/Case4", s.tl, 0.0);
    let c9 = overhearer_cost(&s, diag, "XMAC/B1/Case9", (tp + ta) / 2.0, tp);

    let (pa, pb) = (s.d.p_a, s.d.p_b);
    let q = 1.0 - p;
    let leaves = vec![
        ("XMAC/B1/Case1".to_string(), p * p, c1),
        ("XMAC/B1/Case2".to_string(), p * q * pa, c2),
        ("XMAC/B1/Case3".to_string(), p * q * pb, c3),
        ("XMAC/B1/Case4".to_string(), p * q * (1.0 - pa - pb), c4),
        ("XMAC/B1/Case5".to_string(), q * p, c1),
        ("XMAC/B1/Case6".to_string(), q * q * 0.5 * pa, c2),
        ("XMAC/B1/Case7".to_string(), q * q * 0.5 * pb, c3),
        (
            "XMAC/B1/Case8".to_string(),
            q * q * 0.5 * (1.0 - pa - pb),
            c4,
        ),
        ("XMAC/B1/Case9".to_string(), q * q * 0.5, c9),
    ];
    let e_o = n_o * leaves.iter().map(|(_, pr, e)| pr * e).sum::<f64>();
    let cases = leaves_with_pair(&pair, n_o, leaves);
    XmacOne {
        expected: EnergyBreakdown::new(e_t, e_r, e_l, e_s, e_o),
        cases,
    }
}

pub fn xmac_b1(cfg: &ValidConfig) -> Result<AnalyticResult, AnalyticError> {
    expect_buffer(cfg.scenario(), "xmac_b1", 1)?;
    let mut diag = Diagnostics::default();
    let one = xmac_one(cfg, &mut diag);
    Ok(AnalyticResult {
        expected: one.expected,
        cases: one.cases,
        extrapolated: false,
        diagnostics: diag.0,
    })
}

/// Expected overhearer cost when the channel is busy with probability
/// `busy` and the busy branch means polling `poll` then receiving `rx`.
fn busy_channel_overhearers(
    s: &Sym,
    diag: &mut Diagnostics,
    id: &str,
    n_o: f64,
    busy: f64,
    poll: f64,
    rx: f64,
) -> f64 {
    let hit = overhearer_cost(s, diag, id, poll, rx);
    let miss = overhearer_cost(s, diag, id, s.tl, 0.0);
    n_o * (busy * hit + (1.0 - busy) * miss)
}

pub fn xmac_b2(cfg: &ValidConfig) -> Result<AnalyticResult, AnalyticError> {
    expect_buffer(cfg.scenario(), "xmac_b2", 2)?;
    expect_pairs(cfg.scenario(), "xmac_b2")?;
    Ok(xmac_b2_unchecked(cfg))
}

fn xmac_b2_unchecked(cfg: &ValidConfig) -> AnalyticResult {
    let s = Sym::new(cfg.power(), cfg.timing());
    let mut diag = Diagnostics::default();
    let n = cfg.scenario().n_devices as f64;
    let n_o = n - 2.0;
    let one = xmac_one(&cfg.with_buffer(1), &mut diag).expected;
    let (tp, ta, td, tl, tf) = (s.t.xmac_preamble, s.t.xmac_ack, s.td, s.tl, s.tf);
    let (pt, pr, pl, ps) = (s.pt, s.pr, s.pl, s.ps);
    let (p, g, q, u) = (s.p, s.d.gamma_x, s.d.q_x, s.d.u_x);
    let g_half = (g / 2.0).floor();
    let strobe = tp + ta;

    let busy1 = diag.prob(
        "XMAC/B2 busy probability (Case1)",
        (tp + ta + 2.0 * td) / tf,
    );
    let busy4 = diag.prob(
        "XMAC/B2 busy probability (Case4)",
        (g * strobe + 2.0 * td) / tf,
    );
    let o1 = busy_channel_overhearers(
        &s,
        &mut diag,
        "XMAC/B2/Case1 overhearer",
        n_o,
        busy1,
        tl / 2.0,
        td,
    );
    let o4 = busy_channel_overhearers(
        &s,
        &mut diag,
        "XMAC/B2/Case4 overhearer",
        n_o,
        busy4,
        strobe / 2.0,
        tp,
    );
    // First frame has N_o overhearers, the retry frame N_o + 1 (the first
    // sender has become one), each paying the single-packet cost.
    let o3 = (n_o + (n_o + 1.0)) * one.e_overhear / (n_o + 1.0);

    let case1 = EnergyBreakdown::new(
        tp * pt + ta * pr + strobe * pr + 2.0 * td * pt,
        (tp + 2.0 * td) * pr + ta * pt,
        (tl + tl / 2.0 + tl / 2.0) * pl,
        diag.sleep(
            "XMAC/B2/Case1",
            (3.0 * tf
                - (tl + tp + ta + td)
                - (tl / 2.0 + tp + ta + td)
                - (tl / 2.0 + tp + ta + 2.0 * td))
                * ps,
        ),
        o1,
    );
    let case2 = EnergyBreakdown::new(
        case1.e_tx - tp * pr,
        case1.e_rx,
        case1.e_poll - (tl - tp) / 2.0 * pl,
        case1.e_sleep + (tl + tp) / 2.0 * ps,
        o1,
    );
    let case3 = EnergyBreakdown::new(
        tp * pt + ta * pr + td * pt + one.e_tx,
        tp * pr + ta * pt + td * pr + one.e_rx,
        (tl + tl + tl / 2.0) * pl + one.e_poll,
        diag.sleep(
            "XMAC/B2/Case3",
            (3.0 * tf - (tl + tp + ta + td) - tl - (tl / 2.0 + tp + ta + td)) * ps,
        ) + one.e_sleep,
        o3,
    );
    let case4 = EnergyBreakdown::new(
        g * tp * (pt + pr) + 2.0 * ta * pr + 2.0 * td * pt,
        (tp + 2.0 * td) * pr + ta * pt,
        (tl + tl / 2.0 + 2.0 * (g - 1.0) * ta + strobe / 2.0) * pl,
        diag.sleep(
            "XMAC/B2/Case4",
            (3.0 * tf
                - (tl + g * strobe + td)
                - (tl / 2.0 + g * strobe + td)
                - (strobe / 2.0 + tp + ta + 2.0 * td))
                * ps,
        ),
        o4,
    );
    let case5 = EnergyBreakdown::new(
        (g * tp + td) * pt + ta * pr + (u * tp + ta) * pr + td * pt,
        (tp + 2.0 * td) * pr + ta * pt,
        (tl + (g - 1.0) * ta + strobe / 2.0 + u * strobe / 2.0 + (1.0 - u) * tp / 2.0) * pl,
        diag.sleep(
            "XMAC/B2/Case5",
            (3.0 * tf
                - (tl + g * strobe + td)
                - (u * strobe / 2.0 + (1.0 - u) * tp / 2.0 + u * tp + ta + td)
                - (strobe / 2.0 + tp + ta + 2.0 * td))
                * ps,
        ),
        o4,
    );
    let case6 = EnergyBreakdown::new(
        g * tp * pt + ta * pr + td * pt + one.e_tx,
        (tp + td) * pr + ta * pt + one.e_rx,
        (tl + (g - 1.0) * ta) * pl + tl * pl + strobe / 2.0 * pl + one.e_poll,
        diag.sleep(
            "XMAC/B2/Case6",
            (3.0 * tf - (tl + g * strobe + td) - tl - (strobe / 2.0 + tp + ta + td)) * ps,
        ) + one.e_sleep,
        o3,
    );
    let case7 = EnergyBreakdown::new(
        (g * tp + td) * pt + ta * pr + (g_half * tp + ta) * pr + td * pt,
        (tp + td) * pr + ta * pt + td * pr,
        (tl + (g - 1.0) * ta) * pl + ((g_half - 1.0) * ta + strobe / 2.0) * pl + strobe / 2.0 * pl,
        diag.sleep(
            "XMAC/B2/Case7",
            (3.0 * tf
                - (tl + g * strobe + td)
                - (strobe / 2.0 + g_half * strobe + td)
                - (strobe / 2.0 + tp + ta + 2.0 * td))
                * ps,
        ),
        o4,
    );
    let case8 = EnergyBreakdown::new(
        one.e_tx + td * pt,
        one.e_rx + td * pr,
        one.e_poll - td * pl,
        diag.sleep("XMAC/B2/Case8", one.e_sleep - td * ps),
        one.e_overhear,
    );

    let two = (n - 1.0) / n;
    let pq = 1.0 - p;
    let cases = vec![
        leaf("XMAC/B2/Case1", two * p * p, case1),
        leaf("XMAC/B2/Case2", two * p * pq * q, case2),
        leaf("XMAC/B2/Case3", two * p * pq * (1.0 - q), case3),
        leaf("XMAC/B2/Case4", two * pq * p, case4),
        leaf("XMAC/B2/Case5", two * pq * pq * 0.5 * q, case5),
        leaf("XMAC/B2/Case6", two * pq * pq * 0.5 * (1.0 - q), case6),
        leaf("XMAC/B2/Case7", two * pq * pq * 0.5, case7),
        leaf("XMAC/B2/Case8", 1.0 / n, case8),
    ];
    AnalyticResult::from_tree(cases, diag.0)
}

fn leaf(id: &str, probability: f64, energy: EnergyBreakdown) -> CaseOutcome {
    CaseOutcome {
        case_id: id.to_string(),
        probability,
        energy,
    }
}

// ---------------------------------------------------------------------------
// LA-MAC
// ---------------------------------------------------------------------------

fn lamac_one(cfg: &ValidConfig, diag: &mut Diagnostics) -> (EnergyBreakdown, Vec<CaseOutcome>) {
    let s = Sym::new(cfg.power(), cfg.timing());
    let n_o = (cfg.scenario().n_devices - 1) as f64;
    let (tp, ta, tg) = (s.t.lamac_preamble, s.t.lamac_ack, s.t.lamac_schedule);
    let (p, g) = (s.p, s.d.gamma_l);
    let q = 1.0 - p;

    let e_t = q * g * tp * s.pt + p * tp * s.pt + ta * s.pr + s.td * s.pt + tg * s.pr;
    let e_r = (tp + s.td) * s.pr + (ta + tg) * s.pt;
    // The receiver keeps polling after clearing a preamble, to the end of
    // its window.
    let e_l = ((s.tl + q * (g - 1.0) * ta) + (s.tl - tp - ta)) * s.pl;
    let e_s = diag.sleep(
        "LAMAC/B1 pair",
        (2.0 * s.tf
            - (s.tl + q * g * tp + p * tp + ta + q * (g - 1.0) * ta + s.td + tg)
            - (s.tl + s.td + tg))
            * s.ps,
    );
    let pair = EnergyBreakdown::new(e_t, e_r, e_l, e_s, 0.0);

    let c1 = overhearer_cost(&s, diag, "LAMAC/B1/Case1", s.tl / 2.0, tp);
    let c2 = overhearer_cost(&s, diag, "LAMAC/B1/Case2", tp / 2.0, ta);
    let c3 = overhearer_cost(&s, diag, "LAMAC/B1/Case3", ta / 2.0, tg);
    let c4 = overhearer_cost(&s, diag, "LAMAC/B1/Case4", tg / 2.0, s.td);
    let c5 = overhearer_cost(&s, diag, "LAMAC/B1/Case5", s.tl, 0.0);
    let c11 = overhearer_cost(&s, diag, "LAMAC/B1/Case11", (tp + ta) / 2.0, tp);

    let (pc, pd, pe) = (s.d.p_c, s.d.p_d, s.d.p_e);
    let rest = 1.0 - pc - pd - pe;
    let leaves = vec![
        ("LAMAC/B1/Case1".to_string(), p * p, c1),
        ("LAMAC/B1/Case2".to_string(), p * q * pc, c2),
        ("LAMAC/B1/Case3".to_string(), p * q * pd, c3),
        ("LAMAC/B1/Case4".to_string(), p * q * pe, c4),
        ("LAMAC/B1/Case5".to_string(), p * q * rest, c5),
        ("LAMAC/B1/Case6".to_string(), q * p, c1),
        ("LAMAC/B1/Case7".to_string(), q * q * 0.5 * pc, c2),
        ("LAMAC/B1/Case8".to_string(), q * q * 0.5 * pd, c3),
        ("LAMAC/B1/Case9".to_string(), q * q * 0.5 * pe, c4),
        ("LAMAC/B1/Case10".to_string(), q * q * 0.5 * rest, c5),
        ("LAMAC/B1/Case11".to_string(), q * q * 0.5, c11),
    ];
    let e_o = n_o * leaves.iter().map(|(_, pr, e)| pr * e).sum::<f64>();
    let cases = leaves_with_pair(&pair, n_o, leaves);
    (EnergyBreakdown::new(e_t, e_r, e_l, e_s, e_o), cases)
}

pub fn lamac_b1(cfg: &ValidConfig) -> Result<AnalyticResult, AnalyticError> {
    expect_buffer(cfg.scenario(), "lamac_b1", 1)?;
    let mut diag = Diagnostics::default();
    let (expected, cases) = lamac_one(cfg, &mut diag);
    Ok(AnalyticResult {
        expected,
        cases,
        extrapolated: false,
        diagnostics: diag.0,
    })
}

pub fn lamac_b2(cfg: &ValidConfig) -> Result<AnalyticResult, AnalyticError> {
    expect_buffer(cfg.scenario(), "lamac_b2", 2)?;
    expect_pairs(cfg.scenario(), "lamac_b2")?;
    Ok(lamac_b2_unchecked(cfg))
}

fn lamac_b2_unchecked(cfg: &ValidConfig) -> AnalyticResult {
    let s = Sym::new(cfg.power(), cfg.timing());
    let mut diag = Diagnostics::default();
    let n = cfg.scenario().n_devices as f64;
    let n_o = n - 2.0;
    let (one, _) = lamac_one(&cfg.with_buffer(1), &mut diag);
    let (tp, ta, tg, td, tl, tf) = (
        s.t.lamac_preamble,
        s.t.lamac_ack,
        s.t.lamac_schedule,
        s.td,
        s.tl,
        s.tf,
    );
    let (pt, pr, pl, ps) = (s.pt, s.pr, s.pl, s.ps);
    let (p, g) = (s.p, s.d.gamma_l);
    let (q2, q5) = (s.d.q_l_case2, s.d.q_l_case5);
    if s.d.q_l_case2_clamped {
        diag.0.push(Diagnostic {
            what: "LAMAC q (Case2)".to_string(),
            raw: 1.0 / g + (tl - ta) / tf,
            clamped_to: 1.0,
        });
    }
    let g_half = (g / 2.0).floor();
    let strobe = tp + ta;

    let busy1 = diag.prob(
        "LAMAC/B2 busy probability (Case1)",
        (2.0 * (tp + ta + td) + tg) / tf,
    );
    let busy4 = diag.prob(
        "LAMAC/B2 busy probability (Case4)",
        (g * strobe + strobe + tg + 2.0 * td) / tf,
    );
    let o1 = busy_channel_overhearers(
        &s,
        &mut diag,
        "LAMAC/B2/Case1 overhearer",
        n_o,
        busy1,
        tl / 2.0,
        td,
    );
    let o4 = busy_channel_overhearers(
        &s,
        &mut diag,
        "LAMAC/B2/Case4 overhearer",
        n_o,
        busy4,
        strobe / 2.0,
        tp,
    );

    let case1 = EnergyBreakdown::new(
        tp * pt + ta * pr + strobe * (pr + pt) + tg * pt + td * pt,
        one.e_rx + (tp + td) * pr + ta * pt,
        (one.e_poll - strobe * pl) + tl / 2.0 * pl,
        diag.sleep(
            "LAMAC/B2/Case1",
            (one.e_sleep - td * ps) - (tf - tl / 2.0 - tp - ta - tg - td) * ps,
        ),
        o1,
    );
    let case2 = EnergyBreakdown::new(
        one.e_tx + (tg + 2.0 * ta) * pr + (tp + td) * pt,
        one.e_rx + (tp + td) * pr + ta * pt,
        (one.e_poll - strobe * pl) + tp / 2.0 * pl,
        diag.sleep(
            "LAMAC/B2/Case2",
            one.e_sleep - (tf - tp / 2.0 - tp - ta - tg - td) * ps,
        ),
        o1,
    );
    let twice = one.scaled(2.0);
    let case4 = EnergyBreakdown::new(
        one.e_tx + g * tp * pr + 2.0 * ta * pr + tg * pr + (tp + td) * pt,
        one.e_rx + (tp + td) * pr + ta * pt,
        (one.e_poll - strobe * pl) + ((g - 1.0) * ta + tl / 2.0) * pl,
        diag.sleep(
            "LAMAC/B2/Case4",
            one.e_sleep - (tf - (g + 1.0) * strobe - tg - td - tl / 2.0) * ps,
        ),
        o4,
    );
    let case5 = EnergyBreakdown::new(case2.e_tx, case2.e_rx, case2.e_poll, case2.e_sleep, o4);
    let case7 = EnergyBreakdown::new(
        one.e_tx + g_half * tp * pr + 2.0 * ta * pr + (tp + td) * pt + tg * pr,
        one.e_rx + (tp + td) * pr + ta * pt,
        (one.e_poll - strobe * pl) + ((g_half - 1.0) * ta + strobe / 2.0) * pl,
        diag.sleep(
            "LAMAC/B2/Case7",
            one.e_sleep - (tf - (g_half + 1.0) * strobe - strobe / 2.0 - tg - td) * ps,
        ),
        o4,
    );
    let case8 = EnergyBreakdown::new(
        one.e_tx + td * pt,
        one.e_rx + td * pr,
        one.e_poll - td * pl,
        diag.sleep("LAMAC/B2/Case8", one.e_sleep - td * ps),
        one.e_overhear,
    );

    let two = (n - 1.0) / n;
    let pq = 1.0 - p;
    let cases = vec![
        leaf("LAMAC/B2/Case1", two * p * p, case1),
        leaf("LAMAC/B2/Case2", two * p * pq * q2, case2),
        leaf("LAMAC/B2/Case3", two * p * pq * (1.0 - q2), twice),
        leaf("LAMAC/B2/Case4", two * pq * p, case4),
        leaf("LAMAC/B2/Case5", two * pq * pq * 0.5 * q5, case5),
        leaf("LAMAC/B2/Case6", two * pq * pq * 0.5 * (1.0 - q5), twice),
        leaf("LAMAC/B2/Case7", two * pq * pq * 0.5, case7),
        leaf("LAMAC/B2/Case8", 1.0 / n, case8),
    ];
    AnalyticResult::from_tree(cases, diag.0)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnalyticOptions {
    /// Allow X-MAC / LA-MAC beyond B = 2 by extending the B = 1 -> 2 slope.
    pub extrapolate: bool,
}

pub fn expected_energy(
    cfg: &ValidConfig,
    opts: AnalyticOptions,
) -> Result<AnalyticResult, AnalyticError> {
    let sc = cfg.scenario();
    let b = sc.buffer_size;
    if b == 0 {
        return idle_energy(cfg);
    }
    match (sc.protocol, b) {
        (Protocol::Bmac, _) => Ok(bmac_energy(cfg)),
        (Protocol::Xmac, 1) => xmac_b1(cfg),
        (Protocol::Lamac, 1) => lamac_b1(cfg),
        (Protocol::Xmac, 2) => two_packet(cfg, Protocol::Xmac),
        (Protocol::Lamac, 2) => two_packet(cfg, Protocol::Lamac),
        (protocol, _) if !opts.extrapolate => Err(AnalyticError::UnsupportedBufferSize {
            buffer: b,
            protocol,
        }),
        _ => {
            let one = expected_energy(&cfg.with_buffer(1), opts)?;
            let two = expected_energy(&cfg.with_buffer(2), opts)?;
            let slope = two.expected.minus(&one.expected);
            let mut diagnostics = one.diagnostics;
            diagnostics.extend(two.diagnostics);
            Ok(AnalyticResult {
                expected: two.expected.plus(&slope.scaled((b - 2) as f64)),
                cases: Vec::new(),
                extrapolated: true,
                diagnostics,
            })
        }
    }
}

// With a single sender the two-packet tree degenerates to its one-sender
// leaf; evaluate it directly instead of rejecting N = 1.
fn two_packet(cfg: &ValidConfig, protocol: Protocol) -> Result<AnalyticResult, AnalyticError> {
    let n = cfg.scenario().n_devices;
    if n >= 2 {
        return Ok(match protocol {
            Protocol::Xmac => xmac_b2_unchecked(cfg),
            _ => lamac_b2_unchecked(cfg),
        });
    }
    // N = 1: every two-sender branch has weight (N-1)/N = 0.
    let s = Sym::new(cfg.power(), cfg.timing());
    let mut diag = Diagnostics::default();
    let one_cfg = cfg.with_buffer(1);
    let one = match protocol {
        Protocol::Xmac => xmac_one(&one_cfg, &mut diag).expected,
        _ => lamac_one(&one_cfg, &mut diag).0,
    };
    let single = EnergyBreakdown::new(
        one.e_tx + s.td * s.pt,
        one.e_rx + s.td * s.pr,
        one.e_poll - s.td * s.pl,
        diag.sleep("single-sender two-packet", one.e_sleep - s.td * s.ps),
        one.e_overhear,
    );
    let prefix = if protocol == Protocol::Xmac {
        "XMAC"
    } else {
        "LAMAC"
    };
    let cases = (1..=8)
        .map(|i| {
            let w = if i == 8 { 1.0 } else { 0.0 };
            let e = if i == 8 {
                single
            } else {
                EnergyBreakdown::default()
            };
            leaf(&format!("{prefix}/B2/Case{i}"), w, e)
        })
        .collect();
    Ok(AnalyticResult::from_tree(cases, diag.0))
}
