//! B-MAC, X-MAC and LA-MAC node behaviour as transition functions.
//!
//! Each `*_step` function takes a node state, what the node can observe and
//! an event, and returns the next state plus the actions for the kernel.
//! Every traffic flow goes to the sink (node 0).
//!
//! A timer can fire while the radio is locked onto a frame. The machines
//! then remember the expiry in a `due` flag and act on it once the frame
//! ends, instead of cutting the reception short.

use std::collections::VecDeque;
use std::fmt::Debug;

use thiserror::Error;

use crate::params::{Protocol, TimingProfile};
use crate::simkernel::{
    Action, Destination, FrameSpec, MessageKind, NodeEvent, NodeId, NodeView, PacketId, Payload,
    Reception, Slot, TimerKind, SINK,
};

/// Gap between a SCHEDULE and the first burst, and between burst frames.
pub const LAMAC_GAP: f64 = 0.001;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{protocol} node {node} at {time} s: no transition from {phase} on {event}")]
pub struct IllegalTransition {
    pub protocol: Protocol,
    pub node: NodeId,
    pub time: f64,
    pub phase: String,
    pub event: String,
}

fn illegal(
    protocol: Protocol,
    view: &NodeView,
    phase: &impl Debug,
    ev: &NodeEvent,
) -> IllegalTransition {
    IllegalTransition {
        protocol,
        node: view.id,
        time: view.now,
        phase: format!("{phase:?}"),
        event: format!("{ev:?}"),
    }
}

/// Strobes a sender may emit per attempt before giving up for the frame.
pub fn strobe_limit(t: &TimingProfile, preamble: f64, ack: f64) -> u32 {
    (t.t_frame / (preamble + ack)).ceil() as u32 + 1
}

const ALL_TIMERS: [TimerKind; 5] = [
    TimerKind::PollEnd,
    TimerKind::AckTimeout,
    TimerKind::BackoffFire,
    TimerKind::RendezvousFire,
    TimerKind::SleepEnd,
];

fn cancel_all() -> Vec<Action> {
    ALL_TIMERS.iter().map(|&k| Action::CancelTimer(k)).collect()
}

fn with(mut base: Vec<Action>, more: impl IntoIterator<Item = Action>) -> Vec<Action> {
    base.extend(more);
    base
}

fn to_sink(kind: MessageKind, payload: Payload) -> Action {
    Action::Transmit(FrameSpec {
        kind,
        dest: Destination::Node(SINK),
        payload,
    })
}

fn wake(view: &NodeView, nominal: f64) -> Vec<Action> {
    vec![
        Action::Listen,
        Action::SetTimer(TimerKind::PollEnd, nominal + view.timing.t_listen),
    ]
}

/// Clean frames the node could decode, excluding its own.
fn clean<'a>(recs: &'a [Reception], me: NodeId) -> impl Iterator<Item = &'a Reception> + 'a {
    recs.iter().filter(move |r| r.clean() && r.sender != me)
}

// ---------------------------------------------------------------------------
// B-MAC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum BmacPhase {
    Asleep,
    Polling {
        due: bool,
    },
    /// Heard a preamble; staying on for the data frame that follows.
    Listening,
    SendingPreamble,
    SendingData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmacNode {
    pub buffer: VecDeque<PacketId>,
    pub phase: BmacPhase,
}

impl BmacNode {
    fn poll_over(&mut self, view: &NodeView) -> Vec<Action> {
        if !view.is_sink() && !self.buffer.is_empty() {
            self.phase = BmacPhase::SendingPreamble;
            vec![Action::Transmit(FrameSpec {
                kind: MessageKind::LongPreamble,
                dest: Destination::Broadcast,
                payload: Payload::None,
            })]
        } else {
            self.sleep()
        }
    }

    fn sleep(&mut self) -> Vec<Action> {
        self.phase = BmacPhase::Asleep;
        with(cancel_all(), [Action::Sleep])
    }
}

pub fn bmac_step(
    state: &BmacNode,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<(BmacNode, Vec<Action>), IllegalTransition> {
    let mut s = state.clone();
    let actions = match (&state.phase, ev) {
        (BmacPhase::Asleep, NodeEvent::WakeUp { nominal }) => {
            s.phase = BmacPhase::Polling { due: false };
            wake(view, *nominal)
        }
        (_, NodeEvent::WakeUp { .. }) => Vec::new(),
        (BmacPhase::Polling { .. }, NodeEvent::Timer(TimerKind::PollEnd)) => {
            if view.receiving() {
                s.phase = BmacPhase::Polling { due: true };
                Vec::new()
            } else {
                s.poll_over(view)
            }
        }
        (BmacPhase::Listening, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                Vec::new()
            } else {
                s.sleep()
            }
        }
        (BmacPhase::SendingPreamble, NodeEvent::TxDone { .. }) => {
            let packet = s
                .buffer
                .pop_front()
                .expect("preamble sent with data queued");
            s.phase = BmacPhase::SendingData;
            vec![to_sink(MessageKind::Data, Payload::Packet(packet))]
        }
        (BmacPhase::SendingData, NodeEvent::TxDone { .. }) => s.sleep(),
        (BmacPhase::Polling { .. } | BmacPhase::Listening, NodeEvent::FrameEnd(recs)) => {
            // Destination is only known from the data header, so everyone
            // who caught the preamble stays on through the data frame.
            if recs.iter().any(|r| r.kind == MessageKind::Data) {
                s.sleep()
            } else if recs.iter().any(|r| r.kind == MessageKind::LongPreamble) {
                s.phase = BmacPhase::Listening;
                with(
                    cancel_all(),
                    [Action::SetTimer(
                        TimerKind::AckTimeout,
                        view.now + view.timing.t_data,
                    )],
                )
            } else {
                match state.phase {
                    BmacPhase::Polling { due: true } => s.poll_over(view),
                    _ => Vec::new(),
                }
            }
        }
        _ => return Err(illegal(Protocol::Bmac, view, &state.phase, ev)),
    };
    Ok((s, actions))
}

// ---------------------------------------------------------------------------
// X-MAC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum XmacSenderPhase {
    Asleep,
    Polling {
        due: bool,
    },
    Strobing {
        sent: u32,
        due: bool,
    },
    /// Overheard a preamble to the sink; waiting to see its ACK.
    Waiting {
        due: bool,
    },
    /// Overheard the ACK; a back-off is armed. `seen_first` marks that the
    /// frame following the ACK has ended, `deferred` that the back-off
    /// expired while the channel was busy.
    Backoff {
        deferred: bool,
        seen_first: bool,
    },
    SendingData {
        extra: bool,
    },
    SendingExtra,
}

#[derive(Debug, Clone, PartialEq)]
pub enum XmacSinkPhase {
    Asleep,
    Polling {
        due: bool,
    },
    Acking,
    AwaitData {
        due: bool,
    },
    /// Post-data hold for one additional frame.
    Hold {
        due: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum XmacNode {
    Sender {
        buffer: VecDeque<PacketId>,
        phase: XmacSenderPhase,
    },
    Sink {
        poll_end: f64,
        phase: XmacSinkPhase,
    },
}

pub fn xmac_step(
    state: &XmacNode,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<(XmacNode, Vec<Action>), IllegalTransition> {
    match state {
        XmacNode::Sender { buffer, phase } => {
            let mut buffer = buffer.clone();
            let (phase, actions) = xmac_sender(&mut buffer, phase, view, ev)?;
            Ok((XmacNode::Sender { buffer, phase }, actions))
        }
        XmacNode::Sink { poll_end, phase } => {
            let mut poll_end = *poll_end;
            let (phase, actions) = xmac_sink(&mut poll_end, phase, view, ev)?;
            Ok((XmacNode::Sink { poll_end, phase }, actions))
        }
    }
}

fn xmac_sender(
    buffer: &mut VecDeque<PacketId>,
    phase: &XmacSenderPhase,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<(XmacSenderPhase, Vec<Action>), IllegalTransition> {
    use XmacSenderPhase as P;
    let t = view.timing;
    let limit = strobe_limit(t, t.xmac_preamble, t.xmac_ack);
    let asleep = || (P::Asleep, with(cancel_all(), [Action::Sleep]));
    let strobe = |sent: u32| {
        (
            P::Strobing { sent, due: false },
            vec![to_sink(MessageKind::ShortPreamble, Payload::None)],
        )
    };
    let next_strobe = |sent: u32| {
        if sent < limit {
            strobe(sent + 1)
        } else {
            asleep()
        }
    };
    let poll_over = |buffer: &VecDeque<PacketId>| {
        if buffer.is_empty() {
            asleep()
        } else {
            strobe(1)
        }
    };
    let stay = |p: P| (p, Vec::new());

    let out = match (phase, ev) {
        (P::Asleep, NodeEvent::WakeUp { nominal }) => {
            (P::Polling { due: false }, wake(view, *nominal))
        }
        (_, NodeEvent::WakeUp { .. }) => stay(phase.clone()),

        (P::Polling { .. }, NodeEvent::Timer(TimerKind::PollEnd)) => {
            if view.receiving() {
                stay(P::Polling { due: true })
            } else {
                poll_over(buffer)
            }
        }
        (P::Strobing { .. }, NodeEvent::TxDone { .. }) => (
            phase.clone(),
            vec![Action::SetTimer(
                TimerKind::AckTimeout,
                view.now + t.xmac_ack,
            )],
        ),
        (P::Strobing { sent, .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::Strobing {
                    sent: *sent,
                    due: true,
                })
            } else {
                next_strobe(*sent)
            }
        }
        (P::Waiting { .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::Waiting { due: true })
            } else {
                asleep()
            }
        }
        (P::Backoff { seen_first, .. }, NodeEvent::Timer(TimerKind::BackoffFire)) => {
            if view.receiving() {
                stay(P::Backoff {
                    deferred: true,
                    seen_first: *seen_first,
                })
            } else {
                let packet = buffer.pop_front().expect("back-off armed with data queued");
                (
                    P::SendingExtra,
                    vec![to_sink(MessageKind::Data, Payload::Packet(packet))],
                )
            }
        }
        (P::SendingData { extra }, NodeEvent::TxDone { .. }) => {
            if *extra && !buffer.is_empty() {
                let packet = buffer.pop_front().expect("checked non-empty");
                (
                    P::SendingData { extra: false },
                    vec![to_sink(MessageKind::Data, Payload::Packet(packet))],
                )
            } else {
                asleep()
            }
        }
        (P::SendingExtra, NodeEvent::TxDone { .. }) => asleep(),

        (
            P::Backoff {
                deferred,
                seen_first,
            },
            NodeEvent::FrameEnd(recs),
        ) => {
            let other_data = clean(recs, view.id).any(|r| r.kind == MessageKind::Data);
            if *seen_first && other_data {
                asleep()
            } else if *deferred {
                // One-persistent: the deferred frame goes out as soon as the
                // channel clears.
                let packet = buffer.pop_front().expect("back-off armed with data queued");
                (
                    P::SendingExtra,
                    with(
                        cancel_all(),
                        [to_sink(MessageKind::Data, Payload::Packet(packet))],
                    ),
                )
            } else {
                stay(P::Backoff {
                    deferred: false,
                    seen_first: true,
                })
            }
        }

        (P::Polling { .. } | P::Strobing { .. } | P::Waiting { .. }, NodeEvent::FrameEnd(recs)) => {
            let me = view.id;
            let ack_me = clean(recs, me).any(|r| r.kind == MessageKind::Ack && r.is_for(me));
            let ack_other = clean(recs, me).any(|r| r.kind == MessageKind::Ack && !r.is_for(me));
            let data = clean(recs, me).any(|r| r.kind == MessageKind::Data);
            let preamble = clean(recs, me).any(|r| r.kind == MessageKind::ShortPreamble);
            let anything = clean(recs, me).next().is_some();

            if ack_me && matches!(phase, P::Strobing { .. }) {
                let packet = buffer.pop_front().expect("strobing with data queued");
                (
                    P::SendingData {
                        extra: !buffer.is_empty(),
                    },
                    with(
                        cancel_all(),
                        [to_sink(MessageKind::Data, Payload::Packet(packet))],
                    ),
                )
            } else if anything && buffer.is_empty() {
                asleep()
            } else if ack_other {
                (
                    P::Backoff {
                        deferred: false,
                        seen_first: false,
                    },
                    with(
                        cancel_all(),
                        [Action::SetRandomTimer(
                            TimerKind::BackoffFire,
                            0.0,
                            t.xmac_backoff,
                        )],
                    ),
                )
            } else if data {
                asleep()
            } else if preamble {
                (
                    P::Waiting { due: false },
                    with(
                        cancel_all(),
                        [Action::SetTimer(
                            TimerKind::AckTimeout,
                            view.now + t.xmac_ack + t.xmac_preamble,
                        )],
                    ),
                )
            } else {
                match phase {
                    P::Polling { due: true } => poll_over(buffer),
                    P::Strobing { sent, due: true } => next_strobe(*sent),
                    P::Waiting { due: true } => asleep(),
                    other => stay(other.clone()),
                }
            }
        }
        _ => return Err(illegal(Protocol::Xmac, view, phase, ev)),
    };
    Ok(out)
}

fn xmac_sink(
    poll_end: &mut f64,
    phase: &XmacSinkPhase,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<(XmacSinkPhase, Vec<Action>), IllegalTransition> {
    use XmacSinkPhase as P;
    let t = view.timing;
    let asleep = || (P::Asleep, with(cancel_all(), [Action::Sleep]));
    let stay = |p: P| (p, Vec::new());
    let back_to_poll = |poll_end: f64| {
        if view.now < poll_end {
            (
                P::Polling { due: false },
                vec![Action::SetTimer(TimerKind::PollEnd, poll_end)],
            )
        } else {
            asleep()
        }
    };

    let out = match (phase, ev) {
        (P::Asleep, NodeEvent::WakeUp { nominal }) => {
            *poll_end = nominal + t.t_listen;
            (P::Polling { due: false }, wake(view, *nominal))
        }
        (_, NodeEvent::WakeUp { .. }) => stay(phase.clone()),

        (P::Polling { .. }, NodeEvent::Timer(TimerKind::PollEnd)) => {
            if view.receiving() {
                stay(P::Polling { due: true })
            } else {
                asleep()
            }
        }
        (P::Acking, NodeEvent::TxDone { .. }) => (
            P::AwaitData { due: false },
            vec![Action::SetTimer(
                TimerKind::AckTimeout,
                view.now + t.xmac_ack,
            )],
        ),
        (P::AwaitData { .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::AwaitData { due: true })
            } else {
                back_to_poll(*poll_end)
            }
        }
        (P::Hold { .. }, NodeEvent::Timer(TimerKind::PollEnd)) => {
            if view.receiving() {
                stay(P::Hold { due: true })
            } else {
                asleep()
            }
        }
        (P::Polling { .. } | P::AwaitData { .. } | P::Hold { .. }, NodeEvent::FrameEnd(recs)) => {
            let me = view.id;
            let preamble = clean(recs, me)
                .find(|r| r.kind == MessageKind::ShortPreamble && r.is_for(me))
                .map(|r| r.sender);
            let data = clean(recs, me).any(|r| r.kind == MessageKind::Data && r.is_for(me));
            match (phase, preamble, data) {
                (_, Some(sender), _) => (
                    P::Acking,
                    with(
                        cancel_all(),
                        [Action::Transmit(FrameSpec {
                            kind: MessageKind::Ack,
                            dest: Destination::Node(sender),
                            payload: Payload::None,
                        })],
                    ),
                ),
                (P::AwaitData { .. }, None, true) => (
                    P::Hold { due: false },
                    with(
                        cancel_all(),
                        [Action::SetTimer(
                            TimerKind::PollEnd,
                            view.now + t.xmac_backoff,
                        )],
                    ),
                ),
                (P::Hold { .. }, None, true) => asleep(),
                (P::Polling { due: true }, ..) | (P::Hold { due: true }, ..) => asleep(),
                (P::AwaitData { due: true }, ..) => back_to_poll(*poll_end),
                (other, ..) => stay(other.clone()),
            }
        }
        _ => return Err(illegal(Protocol::Xmac, view, phase, ev)),
    };
    Ok(out)
}

// ---------------------------------------------------------------------------
// LA-MAC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LamacSenderPhase {
    Asleep,
    Polling {
        due: bool,
    },
    Strobing {
        sent: u32,
        due: bool,
    },
    Waiting {
        due: bool,
    },
    /// Overheard an ACK to another sender; a short random delay is armed
    /// before trying to get cleared for the same rendezvous.
    Contending {
        rendezvous: f64,
        due: bool,
    },
    ContendStrobe {
        rendezvous: f64,
        due: bool,
    },
    /// Too late to be cleared; listening until the SCHEDULE goes by.
    Outsider,
    Cleared {
        rendezvous: f64,
    },
    AwaitSchedule {
        due: bool,
    },
    Bursting {
        left: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LamacSinkPhase {
    Asleep,
    Polling,
    Acking,
    Scheduling,
    Collecting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LamacSinkState {
    pub phase: LamacSinkPhase,
    pub poll_end: f64,
    pub rendezvous: Option<f64>,
    /// Cleared senders in clearing order with their requested burst sizes.
    pub cleared: Vec<(NodeId, usize)>,
    pub bursts_end: f64,
    pub due: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LamacNode {
    Sender {
        buffer: VecDeque<PacketId>,
        phase: LamacSenderPhase,
    },
    Sink(LamacSinkState),
}

pub fn lamac_step(
    state: &LamacNode,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<(LamacNode, Vec<Action>), IllegalTransition> {
    match state {
        LamacNode::Sender { buffer, phase } => {
            let mut buffer = buffer.clone();
            let (phase, actions) = lamac_sender(&mut buffer, phase, view, ev)?;
            Ok((LamacNode::Sender { buffer, phase }, actions))
        }
        LamacNode::Sink(s) => {
            let mut s = s.clone();
            let actions = lamac_sink(&mut s, view, ev)?;
            Ok((LamacNode::Sink(s), actions))
        }
    }
}

fn lamac_sender(
    buffer: &mut VecDeque<PacketId>,
    phase: &LamacSenderPhase,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<(LamacSenderPhase, Vec<Action>), IllegalTransition> {
    use LamacSenderPhase as P;
    let t = view.timing;
    let strobe_time = t.lamac_preamble + t.lamac_ack;
    let limit = strobe_limit(t, t.lamac_preamble, t.lamac_ack);
    let preamble = |buffer: &VecDeque<PacketId>| {
        to_sink(MessageKind::ShortPreamble, Payload::Burst(buffer.len()))
    };
    let asleep = || (P::Asleep, with(cancel_all(), [Action::Sleep]));
    let stay = |p: P| (p, Vec::new());
    let next_strobe = |buffer: &VecDeque<PacketId>, sent: u32| {
        if sent < limit {
            (
                P::Strobing {
                    sent: sent + 1,
                    due: false,
                },
                vec![preamble(buffer)],
            )
        } else {
            asleep()
        }
    };
    let poll_over = |buffer: &VecDeque<PacketId>| {
        if buffer.is_empty() {
            asleep()
        } else {
            (
                P::Strobing {
                    sent: 1,
                    due: false,
                },
                vec![preamble(buffer)],
            )
        }
    };
    let contend = |rendezvous: f64| {
        (
            P::Contending {
                rendezvous,
                due: false,
            },
            with(
                cancel_all(),
                [Action::SetRandomTimer(
                    TimerKind::BackoffFire,
                    0.0,
                    strobe_time,
                )],
            ),
        )
    };

    let out = match (phase, ev) {
        (P::Asleep, NodeEvent::WakeUp { nominal }) => {
            (P::Polling { due: false }, wake(view, *nominal))
        }
        (_, NodeEvent::WakeUp { .. }) => stay(phase.clone()),

        (P::Polling { .. }, NodeEvent::Timer(TimerKind::PollEnd)) => {
            if view.receiving() {
                stay(P::Polling { due: true })
            } else {
                poll_over(buffer)
            }
        }
        (P::Strobing { .. } | P::ContendStrobe { .. }, NodeEvent::TxDone { .. }) => (
            phase.clone(),
            vec![Action::SetTimer(
                TimerKind::AckTimeout,
                view.now + t.lamac_ack,
            )],
        ),
        (P::Strobing { sent, .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::Strobing {
                    sent: *sent,
                    due: true,
                })
            } else {
                next_strobe(buffer, *sent)
            }
        }
        (P::ContendStrobe { rendezvous, .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::ContendStrobe {
                    rendezvous: *rendezvous,
                    due: true,
                })
            } else {
                contend(*rendezvous)
            }
        }
        (P::Waiting { .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::Waiting { due: true })
            } else {
                asleep()
            }
        }
        (P::AwaitSchedule { .. }, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::AwaitSchedule { due: true })
            } else {
                asleep()
            }
        }
        (P::Outsider, NodeEvent::Timer(TimerKind::AckTimeout)) => {
            if view.receiving() {
                stay(P::Outsider)
            } else {
                asleep()
            }
        }
        (P::Contending { rendezvous, .. }, NodeEvent::Timer(TimerKind::BackoffFire)) => {
            let r = *rendezvous;
            if view.receiving() {
                stay(P::Contending {
                    rendezvous: r,
                    due: true,
                })
            } else if view.now + strobe_time <= r {
                (
                    P::ContendStrobe {
                        rendezvous: r,
                        due: false,
                    },
                    vec![preamble(buffer)],
                )
            } else {
                (
                    P::Outsider,
                    vec![Action::SetTimer(
                        TimerKind::AckTimeout,
                        r + t.lamac_schedule + t.lamac_ack,
                    )],
                )
            }
        }
        (P::Cleared { .. }, NodeEvent::Timer(TimerKind::SleepEnd)) => (
            P::AwaitSchedule { due: false },
            vec![
                Action::Listen,
                Action::SetTimer(
                    TimerKind::AckTimeout,
                    view.now + t.lamac_schedule + t.lamac_ack,
                ),
            ],
        ),
        (P::Bursting { left }, NodeEvent::TxDone { .. }) => {
            if *left > 1 {
                (P::Bursting { left: left - 1 }, vec![Action::Sleep])
            } else {
                asleep()
            }
        }

        (P::AwaitSchedule { due }, NodeEvent::FrameEnd(recs)) => {
            let me = view.id;
            let slots = clean(recs, me).find_map(|r| match (&r.kind, &r.payload) {
                (MessageKind::Schedule, Payload::Schedule(s)) => Some(s.clone()),
                _ => None,
            });
            match slots {
                Some(slots) => match slots.iter().find(|s| s.node == me) {
                    Some(slot) => burst(buffer, slot, t),
                    None => asleep(),
                },
                None if *due => asleep(),
                None => stay(phase.clone()),
            }
        }

        (
            P::Polling { .. }
            | P::Strobing { .. }
            | P::Waiting { .. }
            | P::Contending { .. }
            | P::ContendStrobe { .. }
            | P::Outsider,
            NodeEvent::FrameEnd(recs),
        ) => {
            let me = view.id;
            let ack_me = clean(recs, me).find_map(|r| match (&r.kind, &r.payload) {
                (MessageKind::Ack, Payload::Rendezvous(at)) if r.is_for(me) => Some(*at),
                _ => None,
            });
            let ack_other = clean(recs, me).find_map(|r| match (&r.kind, &r.payload) {
                (MessageKind::Ack, Payload::Rendezvous(at)) if !r.is_for(me) => Some(*at),
                _ => None,
            });
            let schedule = clean(recs, me).any(|r| r.kind == MessageKind::Schedule);
            let data = clean(recs, me).any(|r| r.kind == MessageKind::Data);
            let heard_preamble = clean(recs, me).any(|r| r.kind == MessageKind::ShortPreamble);
            let anything = clean(recs, me).next().is_some();
            let strobing = matches!(phase, P::Strobing { .. } | P::ContendStrobe { .. });

            match ack_me {
                Some(r) if strobing => (
                    P::Cleared { rendezvous: r },
                    with(
                        cancel_all(),
                        [Action::Sleep, Action::SetTimer(TimerKind::SleepEnd, r)],
                    ),
                ),
                _ if schedule || data => asleep(),
                _ if anything && buffer.is_empty() => asleep(),
                _ => match (phase, ack_other) {
                    (P::Outsider, _) => stay(P::Outsider),
                    (_, Some(r)) => contend(r),
                    (P::Polling { .. } | P::Strobing { .. } | P::Waiting { .. }, None)
                        if heard_preamble =>
                    {
                        (
                            P::Waiting { due: false },
                            with(
                                cancel_all(),
                                [Action::SetTimer(
                                    TimerKind::AckTimeout,
                                    view.now + t.lamac_ack + t.lamac_preamble,
                                )],
                            ),
                        )
                    }
                    (P::Polling { due: true }, None) => poll_over(buffer),
                    (P::Strobing { sent, due: true }, None) => next_strobe(buffer, *sent),
                    (P::Waiting { due: true }, None) => asleep(),
                    (
                        P::Contending {
                            rendezvous,
                            due: true,
                        }
                        | P::ContendStrobe {
                            rendezvous,
                            due: true,
                        },
                        None,
                    ) => contend(*rendezvous),
                    (other, None) => stay(other.clone()),
                },
            }
        }
        _ => return Err(illegal(Protocol::Lamac, view, phase, ev)),
    };
    Ok(out)
}

/// Hands the granted frames to the kernel, one per burst position.
fn burst(
    buffer: &mut VecDeque<PacketId>,
    slot: &Slot,
    t: &TimingProfile,
) -> (LamacSenderPhase, Vec<Action>) {
    let frames = slot.frames.min(buffer.len());
    if frames == 0 {
        return (
            LamacSenderPhase::Asleep,
            with(cancel_all(), [Action::Sleep]),
        );
    }
    let mut actions = with(cancel_all(), [Action::Sleep]);
    for i in 0..frames {
        let packet = buffer.pop_front().expect("frames bounded by buffer");
        let at = slot.start + i as f64 * (t.t_data + LAMAC_GAP);
        actions.push(Action::TransmitAt(
            at,
            FrameSpec {
                kind: MessageKind::Data,
                dest: Destination::Node(SINK),
                payload: Payload::Packet(packet),
            },
        ));
    }
    (LamacSenderPhase::Bursting { left: frames }, actions)
}

fn lamac_sink(
    s: &mut LamacSinkState,
    view: &NodeView,
    ev: &NodeEvent,
) -> Result<Vec<Action>, IllegalTransition> {
    use LamacSinkPhase as P;
    let t = view.timing;
    let asleep = |s: &mut LamacSinkState| {
        s.phase = P::Asleep;
        s.rendezvous = None;
        s.cleared.clear();
        s.due = false;
        with(cancel_all(), [Action::Sleep])
    };

    let actions = match (&s.phase, ev) {
        (P::Asleep, NodeEvent::WakeUp { nominal }) => {
            s.phase = P::Polling;
            s.poll_end = nominal + t.t_listen;
            s.due = false;
            wake(view, *nominal)
        }
        (_, NodeEvent::WakeUp { .. }) => Vec::new(),

        (P::Polling | P::Acking, NodeEvent::Timer(TimerKind::PollEnd)) => {
            if !s.cleared.is_empty() {
                // The rendezvous timer takes over.
                Vec::new()
            } else if view.receiving() || s.phase == P::Acking {
                s.due = true;
                Vec::new()
            } else {
                asleep(s)
            }
        }
        (P::Acking, NodeEvent::TxDone { .. }) => {
            s.phase = P::Polling;
            if s.due && s.cleared.is_empty() {
                asleep(s)
            } else {
                Vec::new()
            }
        }
        (P::Polling | P::Acking, NodeEvent::Timer(TimerKind::RendezvousFire)) => {
            let mut cursor = view.now + t.lamac_schedule + LAMAC_GAP;
            let mut slots = Vec::with_capacity(s.cleared.len());
            for &(node, frames) in &s.cleared {
                slots.push(Slot {
                    node,
                    start: cursor,
                    frames,
                });
                cursor += frames as f64 * (t.t_data + LAMAC_GAP);
            }
            s.bursts_end = cursor - LAMAC_GAP;
            s.phase = P::Scheduling;
            with(
                cancel_all(),
                [Action::Transmit(FrameSpec {
                    kind: MessageKind::Schedule,
                    dest: Destination::Broadcast,
                    payload: Payload::Schedule(slots),
                })],
            )
        }
        (P::Scheduling, NodeEvent::TxDone { .. }) => {
            s.phase = P::Collecting;
            s.due = false;
            vec![Action::SetTimer(TimerKind::SleepEnd, s.bursts_end)]
        }
        (P::Collecting, NodeEvent::Timer(TimerKind::SleepEnd)) => {
            if view.receiving() {
                s.due = true;
                Vec::new()
            } else {
                asleep(s)
            }
        }
        (P::Collecting, NodeEvent::FrameEnd(_)) => {
            if s.due {
                asleep(s)
            } else {
                Vec::new()
            }
        }
        (P::Polling, NodeEvent::FrameEnd(recs)) => {
            let me = view.id;
            let request = clean(recs, me).find_map(|r| match (&r.kind, &r.payload) {
                (MessageKind::ShortPreamble, Payload::Burst(k)) if r.is_for(me) => {
                    Some((r.sender, *k))
                }
                _ => None,
            });
            let ack_end = view.now + t.lamac_ack;
            match request {
                Some((sender, frames)) => {
                    let first = s.rendezvous.is_none();
                    let r = *s.rendezvous.get_or_insert(s.poll_end.max(ack_end));
                    if ack_end <= r {
                        if !s.cleared.iter().any(|&(n, _)| n == sender) {
                            s.cleared.push((sender, frames));
                        }
                        s.phase = P::Acking;
                        let mut a = vec![Action::Transmit(FrameSpec {
                            kind: MessageKind::Ack,
                            dest: Destination::Node(sender),
                            payload: Payload::Rendezvous(r),
                        })];
                        if first {
                            a.push(Action::SetTimer(TimerKind::RendezvousFire, r));
                        }
                        a
                    } else if s.due && s.cleared.is_empty() {
                        asleep(s)
                    } else {
                        Vec::new()
                    }
                }
                None if s.due && s.cleared.is_empty() => asleep(s),
                None => Vec::new(),
            }
        }
        _ => return Err(illegal(Protocol::Lamac, view, &s.phase, ev)),
    };
    Ok(actions)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// A node of any protocol, as held by the kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolNode {
    Bmac(BmacNode),
    Xmac(XmacNode),
    Lamac(LamacNode),
}

impl ProtocolNode {
    pub fn new(protocol: Protocol, id: NodeId, packets: Vec<PacketId>, _t: &TimingProfile) -> Self {
        let buffer: VecDeque<PacketId> = packets.into();
        match (protocol, id == SINK) {
            (Protocol::Bmac, _) => ProtocolNode::Bmac(BmacNode {
                buffer,
                phase: BmacPhase::Asleep,
            }),
            (Protocol::Xmac, true) => ProtocolNode::Xmac(XmacNode::Sink {
                poll_end: 0.0,
                phase: XmacSinkPhase::Asleep,
            }),
            (Protocol::Xmac, false) => ProtocolNode::Xmac(XmacNode::Sender {
                buffer,
                phase: XmacSenderPhase::Asleep,
            }),
            (Protocol::Lamac, true) => ProtocolNode::Lamac(LamacNode::Sink(LamacSinkState {
                phase: LamacSinkPhase::Asleep,
                poll_end: 0.0,
                rendezvous: None,
                cleared: Vec::new(),
                bursts_end: 0.0,
                due: false,
            })),
            (Protocol::Lamac, false) => ProtocolNode::Lamac(LamacNode::Sender {
                buffer,
                phase: LamacSenderPhase::Asleep,
            }),
        }
    }

    pub fn step(
        &mut self,
        view: &NodeView,
        ev: &NodeEvent,
    ) -> Result<Vec<Action>, IllegalTransition> {
        let (next, actions) = match self {
            ProtocolNode::Bmac(s) => {
                let (n, a) = bmac_step(s, view, ev)?;
                (ProtocolNode::Bmac(n), a)
            }
            ProtocolNode::Xmac(s) => {
                let (n, a) = xmac_step(s, view, ev)?;
                (ProtocolNode::Xmac(n), a)
            }
            ProtocolNode::Lamac(s) => {
                let (n, a) = lamac_step(s, view, ev)?;
                (ProtocolNode::Lamac(n), a)
            }
        };
        *self = next;
        Ok(actions)
    }

    /// Back on the plain duty cycle: asleep, or polling with nothing
    /// pending.
    pub fn is_idle(&self) -> bool {
        match self {
            ProtocolNode::Bmac(s) => {
                matches!(s.phase, BmacPhase::Asleep | BmacPhase::Polling { .. })
            }
            ProtocolNode::Xmac(XmacNode::Sender { phase, .. }) => {
                matches!(
                    phase,
                    XmacSenderPhase::Asleep | XmacSenderPhase::Polling { .. }
                )
            }
            ProtocolNode::Xmac(XmacNode::Sink { phase, .. }) => {
                matches!(phase, XmacSinkPhase::Asleep | XmacSinkPhase::Polling { .. })
            }
            ProtocolNode::Lamac(LamacNode::Sender { phase, .. }) => {
                matches!(
                    phase,
                    LamacSenderPhase::Asleep | LamacSenderPhase::Polling { .. }
                )
            }
            ProtocolNode::Lamac(LamacNode::Sink(s)) => match s.phase {
                LamacSinkPhase::Asleep => true,
                LamacSinkPhase::Polling => s.cleared.is_empty(),
                _ => false,
            },
        }
    }

    /// Packets still held by this node.
    pub fn buffered(&self) -> usize {
        match self {
            ProtocolNode::Bmac(s) => s.buffer.len(),
            ProtocolNode::Xmac(XmacNode::Sender { buffer, .. })
            | ProtocolNode::Lamac(LamacNode::Sender { buffer, .. }) => buffer.len(),
            _ => 0,
        }
    }
}
