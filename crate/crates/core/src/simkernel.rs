//! Single-channel, star-topology discrete-event engine.
//!
//! Node 0 is the sink, nodes `1..=N` are senders. Protocol behaviour lives in
//! [`crate::protocols`]; this module owns time, the radio model, carrier
//! sense, collisions, packet bookkeeping and the per-node radio trace.
//!
//! Radio model:
//! * a frame is detected by a node only if it starts while the node is
//!   polling (at or after the poll start instant);
//! * the B-MAC long preamble is a train of short packets, so a node that
//!   starts polling mid-preamble locks on at the next packet boundary;
//! * any two frames overlapping in time corrupt each other (no capture);
//! * a node in `Rx` stays there until every frame it locked onto has ended,
//!   then receives a single [`NodeEvent::FrameEnd`] listing them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::params::{Protocol, TimingProfile, ValidConfig};
use crate::protocols::{IllegalTransition, ProtocolNode};

pub type NodeId = usize;
pub type PacketId = usize;
pub type TxId = usize;

pub const SINK: NodeId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RadioState {
    Tx,
    Rx,
    Poll,
    Sleep,
}

impl RadioState {
    pub const ALL: [RadioState; 4] = [
        RadioState::Tx,
        RadioState::Rx,
        RadioState::Poll,
        RadioState::Sleep,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RadioState::Tx => "tx",
            RadioState::Rx => "rx",
            RadioState::Poll => "poll",
            RadioState::Sleep => "sleep",
        }
    }
}

impl fmt::Display for RadioState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    LongPreamble,
    ShortPreamble,
    Ack,
    Data,
    Schedule,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::LongPreamble => "long_preamble",
            MessageKind::ShortPreamble => "short_preamble",
            MessageKind::Ack => "ack",
            MessageKind::Data => "data",
            MessageKind::Schedule => "schedule",
        }
    }

    /// Airtime of this message under `protocol`.
    pub fn duration(self, protocol: Protocol, t: &TimingProfile) -> f64 {
        match (self, protocol) {
            (MessageKind::LongPreamble, _) => t.bmac_preamble,
            (MessageKind::Data, _) => t.t_data,
            (MessageKind::Schedule, _) => t.lamac_schedule,
            (MessageKind::ShortPreamble, Protocol::Lamac) => t.lamac_preamble,
            (MessageKind::ShortPreamble, _) => t.xmac_preamble,
            (MessageKind::Ack, Protocol::Lamac) => t.lamac_ack,
            (MessageKind::Ack, _) => t.xmac_ack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Node(NodeId),
    Broadcast,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Node(n) => write!(f, "{n}"),
            Destination::Broadcast => f.write_str("*"),
        }
    }
}

/// One granted burst in an LA-MAC SCHEDULE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub node: NodeId,
    pub start: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    None,
    /// Preamble announcing how many frames the sender wants to burst.
    Burst(usize),
    /// ACK carrying the rendezvous instant.
    Rendezvous(f64),
    Schedule(Vec<Slot>),
    Packet(PacketId),
}

/// What a protocol asks the kernel to put on air.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub kind: MessageKind,
    pub dest: Destination,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub id: TxId,
    pub sender: NodeId,
    pub kind: MessageKind,
    pub dest: Destination,
    pub start: f64,
    pub duration: f64,
    pub payload: Payload,
    pub collided: bool,
}

impl Transmission {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxOutcome {
    /// Heard from its first bit, no overlap.
    Received,
    /// Clean, but locked on after the start (long-preamble packet boundary).
    Partial,
    Collided,
}

impl RxOutcome {
    pub fn is_clean(self) -> bool {
        !matches!(self, RxOutcome::Collided)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub tx: TxId,
    pub sender: NodeId,
    pub kind: MessageKind,
    pub dest: Destination,
    pub payload: Payload,
    pub outcome: RxOutcome,
}

impl Reception {
    pub fn clean(&self) -> bool {
        self.outcome.is_clean()
    }

    pub fn is_for(&self, node: NodeId) -> bool {
        self.dest == Destination::Node(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerKind {
    PollEnd,
    AckTimeout,
    BackoffFire,
    RendezvousFire,
    SleepEnd,
}

impl TimerKind {
    const COUNT: usize = 5;

    fn index(self) -> usize {
        self as usize
    }

    fn event_kind(self) -> EventKind {
        match self {
            TimerKind::PollEnd => EventKind::PollEnd,
            TimerKind::AckTimeout => EventKind::AckTimeout,
            TimerKind::BackoffFire => EventKind::BackoffFire,
            TimerKind::RendezvousFire => EventKind::RendezvousFire,
            TimerKind::SleepEnd => EventKind::SleepEnd,
        }
    }
}

/// Kernel event kinds. Declaration order is the tie-break rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    WakeUp,
    PollEnd,
    TxStart,
    TxEnd,
    AckTimeout,
    BackoffFire,
    RendezvousFire,
    SleepEnd,
    /// Long-preamble packet boundary reached while a node polls.
    Detect,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventPayload {
    None,
    Wake { nominal: f64 },
    Timer { token: u64 },
    Start(FrameSpec),
    End(TxId),
    Boundary { tx: TxId, epoch: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub node: NodeId,
    pub kind: EventKind,
    pub payload: EventPayload,
}

struct Queued {
    event: Event,
    seq: u64,
}

impl Queued {
    fn key(&self) -> (f64, NodeId, EventKind, u64) {
        (self.event.time, self.event.node, self.event.kind, self.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the std max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

/// Time-ordered event queue. Ties go to the lower node id, then the lower
/// [`EventKind`] rank, then insertion order.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    now: f64,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, event: Event) -> Result<(), SimError> {
        if event.time.is_nan() || event.time < self.now {
            return Err(SimError::PastEvent {
                time: event.time,
                now: self.now,
            });
        }
        self.heap.push(Queued {
            event,
            seq: self.seq,
        });
        self.seq += 1;
        Ok(())
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|q| q.event.time)
    }

    /// Removes the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event> {
        let q = self.heap.pop()?;
        self.now = q.event.time;
        Some(q.event)
    }
}

/// What a protocol state machine sees.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    /// Periodic wakeup. `nominal` is the scheduled instant, which can be
    /// negative for a poll already in progress at t = 0.
    WakeUp {
        nominal: f64,
    },
    Timer(TimerKind),
    TxDone {
        kind: MessageKind,
    },
    FrameEnd(Vec<Reception>),
}

/// What a protocol state machine asks of the kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Sleep,
    /// Turn the receiver on (Poll). No effect if already listening.
    Listen,
    Transmit(FrameSpec),
    TransmitAt(f64, FrameSpec),
    SetTimer(TimerKind, f64),
    /// Timer at `now + U(lo, hi)`, drawn from the node's own stream.
    SetRandomTimer(TimerKind, f64, f64),
    CancelTimer(TimerKind),
}

#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub id: NodeId,
    pub now: f64,
    pub radio: RadioState,
    pub timing: &'a TimingProfile,
}

impl NodeView<'_> {
    pub fn is_sink(&self) -> bool {
        self.id == SINK
    }

    /// Locked onto at least one frame that has not ended yet.
    pub fn receiving(&self) -> bool {
        self.radio == RadioState::Rx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub state: RadioState,
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Per-node radio state intervals tiling `[0, sim_end]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadioTrace {
    pub nodes: Vec<Vec<Interval>>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TraceError {
    #[error("node {node} trace is empty")]
    Empty { node: NodeId },
    #[error("node {node} trace starts at {start} s instead of 0")]
    BadStart { node: NodeId, start: f64 },
    #[error("node {node} has a gap or overlap at interval {index} ({prev_end} s -> {start} s)")]
    Discontinuity {
        node: NodeId,
        index: usize,
        prev_end: f64,
        start: f64,
    },
    #[error("node {node} interval {index} has negative length")]
    Negative { node: NodeId, index: usize },
    #[error("node {node} trace ends at {end} s, expected {expected} s")]
    BadEnd {
        node: NodeId,
        end: f64,
        expected: f64,
    },
}

impl RadioTrace {
    /// Checks that every node's intervals are contiguous, start at 0 and end
    /// at `sim_end` exactly.
    pub fn check_tiling(&self, sim_end: f64) -> Result<(), TraceError> {
        for (node, ivs) in self.nodes.iter().enumerate() {
            self.check_node(node, ivs, Some(sim_end))?;
        }
        Ok(())
    }

    /// Like [`check_tiling`](Self::check_tiling) but only requires all
    /// nodes to end at the same instant, which is returned.
    pub fn common_end(&self) -> Result<f64, TraceError> {
        let mut end = None;
        for (node, ivs) in self.nodes.iter().enumerate() {
            self.check_node(node, ivs, end)?;
            end = ivs.last().map(|iv| iv.end);
        }
        Ok(end.unwrap_or(0.0))
    }

    fn check_node(
        &self,
        node: NodeId,
        ivs: &[Interval],
        expected_end: Option<f64>,
    ) -> Result<(), TraceError> {
        let first = ivs.first().ok_or(TraceError::Empty { node })?;
        if first.start != 0.0 {
            return Err(TraceError::BadStart {
                node,
                start: first.start,
            });
        }
        for (index, iv) in ivs.iter().enumerate() {
            if iv.end < iv.start {
                return Err(TraceError::Negative { node, index });
            }
            if index > 0 && ivs[index - 1].end != iv.start {
                return Err(TraceError::Discontinuity {
                    node,
                    index,
                    prev_end: ivs[index - 1].end,
                    start: iv.start,
                });
            }
        }
        let end = ivs[ivs.len() - 1].end;
        if let Some(expected) = expected_end {
            if end != expected {
                return Err(TraceError::BadEnd {
                    node,
                    end,
                    expected,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketState {
    Buffered,
    InFlight,
    Received,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub tx: TxId,
    pub packet: PacketId,
    pub sender: NodeId,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketTally {
    pub received: usize,
    pub lost: usize,
    pub remaining: usize,
}

impl PacketTally {
    pub fn total(&self) -> usize {
        self.received + self.lost + self.remaining
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub protocol: Protocol,
    pub seed: u64,
    pub sim_end: f64,
    pub trace: RadioTrace,
    pub transmissions: Vec<Transmission>,
    pub deliveries: Vec<Delivery>,
    pub packets: PacketTally,
    pub buffer_size: usize,
    /// The run hit the max-time guard before every packet was resolved.
    pub guard_expired: bool,
    /// Whole frames covered by the run, `sim_end / t_frame`.
    pub frames: usize,
    pub phases: Vec<f64>,
}

/// Fate of a frame as recorded in the transmission log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    /// Data frame received by its destination.
    Delivered,
    Collided,
    /// Data frame that did not collide but found its destination deaf.
    Missed,
    /// Any other frame that did not collide.
    Clean,
}

impl TxOutcome {
    pub fn name(self) -> &'static str {
        match self {
            TxOutcome::Delivered => "delivered",
            TxOutcome::Collided => "collided",
            TxOutcome::Missed => "missed",
            TxOutcome::Clean => "clean",
        }
    }
}

impl RunOutput {
    pub fn outcome_of(&self, tx: &Transmission) -> TxOutcome {
        if self.deliveries.iter().any(|d| d.tx == tx.id) {
            TxOutcome::Delivered
        } else if tx.collided {
            TxOutcome::Collided
        } else if tx.kind == MessageKind::Data {
            TxOutcome::Missed
        } else {
            TxOutcome::Clean
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("event at {time} s scheduled in the past (now {now} s)")]
    PastEvent { time: f64, now: f64 },
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error("override has {got} entries, expected {expected}")]
    OverrideLength { got: usize, expected: usize },
    #[error("phase override {value} s outside [0, t_frame)")]
    PhaseOutOfRange { value: f64 },
    #[error("packet owner {owner} is not a sender (1..={n_devices})")]
    BadOwner { owner: NodeId, n_devices: usize },
    #[error("trace violates the coverage invariant: {0}")]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Packet size of the B-MAC long preamble train.
    pub long_preamble_packet: f64,
    /// Guard is `(B + 10) * t_frame * guard_multiplier`.
    pub guard_multiplier: f64,
    /// Fixed wakeup phases for nodes `0..=N` instead of random ones.
    pub phases: Option<Vec<f64>>,
    /// Fixed owner for each packet instead of random placement.
    pub packet_owners: Option<Vec<NodeId>>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            long_preamble_packet: 0.004,
            guard_multiplier: 4.0,
            phases: None,
            packet_owners: None,
        }
    }
}

// Stream id for packet placement, well clear of any node id.
const PACKET_STREAM: u64 = 1 << 48;

fn node_rng(seed: u64, node: NodeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

struct Lock {
    tx: TxId,
    from: f64,
}

struct NodeRt {
    radio: RadioState,
    since: f64,
    trace: Vec<Interval>,
    poll_start: f64,
    poll_epoch: u64,
    locks: Vec<Lock>,
    heard: Vec<Lock>,
    timers: [u64; TimerKind::COUNT],
    phase: f64,
    wake_index: i64,
    rng: ChaCha8Rng,
}

impl NodeRt {
    fn set_radio(&mut self, state: RadioState, now: f64) {
        if state == self.radio {
            return;
        }
        if now > self.since {
            match self.trace.last_mut() {
                Some(last) if last.state == self.radio && last.end == self.since => {
                    last.end = now;
                }
                _ => self.trace.push(Interval {
                    state: self.radio,
                    start: self.since,
                    end: now,
                }),
            }
            self.since = now;
        }
        self.radio = state;
    }

    fn close(&mut self, end: f64) -> Vec<Interval> {
        let mut trace = std::mem::take(&mut self.trace);
        if end > self.since || trace.is_empty() {
            match trace.last_mut() {
                Some(last) if last.state == self.radio && last.end == self.since => last.end = end,
                _ => trace.push(Interval {
                    state: self.radio,
                    start: self.since,
                    end,
                }),
            }
        }
        trace
    }
}

struct Kernel<'a> {
    cfg: &'a ValidConfig,
    opts: &'a SimOptions,
    queue: EventQueue,
    nodes: Vec<NodeRt>,
    machines: Vec<ProtocolNode>,
    txs: Vec<Transmission>,
    active: Vec<TxId>,
    packets: Vec<PacketState>,
    unresolved: usize,
    deliveries: Vec<Delivery>,
}

/// Runs one seeded simulation of `cfg` to completion.
pub fn run(cfg: &ValidConfig, seed: u64, opts: &SimOptions) -> Result<RunOutput, SimError> {
    let sc = cfg.scenario();
    let t = cfg.timing();
    let n_nodes = sc.n_devices + 1;

    let mut rngs: Vec<ChaCha8Rng> = (0..n_nodes).map(|i| node_rng(seed, i)).collect();
    let phases: Vec<f64> = match &opts.phases {
        Some(p) => {
            if p.len() != n_nodes {
                return Err(SimError::OverrideLength {
                    got: p.len(),
                    expected: n_nodes,
                });
            }
            if let Some(&bad) = p.iter().find(|&&v| !(0.0..t.t_frame).contains(&v)) {
                return Err(SimError::PhaseOutOfRange { value: bad });
            }
            p.clone()
        }
        None => rngs
            .iter_mut()
            .map(|r| r.random_range(0.0..t.t_frame))
            .collect(),
    };
    let owners: Vec<NodeId> = match &opts.packet_owners {
        Some(o) => {
            if o.len() != sc.buffer_size {
                return Err(SimError::OverrideLength {
                    got: o.len(),
                    expected: sc.buffer_size,
                });
            }
            if let Some(&bad) = o.iter().find(|&&v| v == SINK || v > sc.n_devices) {
                return Err(SimError::BadOwner {
                    owner: bad,
                    n_devices: sc.n_devices,
                });
            }
            o.clone()
        }
        None => {
            let mut prng = node_rng(seed, 0);
            prng.set_stream(PACKET_STREAM);
            (0..sc.buffer_size)
                .map(|_| 1 + prng.random_range(0..sc.n_devices))
                .collect()
        }
    };

    let mut buffers: Vec<Vec<PacketId>> = vec![Vec::new(); n_nodes];
    for (packet, &owner) in owners.iter().enumerate() {
        buffers[owner].push(packet);
    }
    let machines = buffers
        .into_iter()
        .enumerate()
        .map(|(id, buf)| ProtocolNode::new(sc.protocol, id, buf, t))
        .collect();

    let nodes = phases
        .iter()
        .zip(rngs)
        .map(|(&phase, rng)| NodeRt {
            radio: RadioState::Sleep,
            since: 0.0,
            trace: Vec::new(),
            poll_start: 0.0,
            poll_epoch: 0,
            locks: Vec::new(),
            heard: Vec::new(),
            timers: [0; TimerKind::COUNT],
            phase,
            wake_index: 0,
            rng,
        })
        .collect();

    let mut k = Kernel {
        cfg,
        opts,
        queue: EventQueue::new(),
        nodes,
        machines,
        txs: Vec::new(),
        active: Vec::new(),
        packets: vec![PacketState::Buffered; sc.buffer_size],
        unresolved: sc.buffer_size,
        deliveries: Vec::new(),
    };
    k.start()?;
    let (sim_end, guard_expired) = k.main_loop()?;
    k.finish(seed, sim_end, guard_expired, phases)
}

impl Kernel<'_> {
    fn timing(&self) -> &TimingProfile {
        self.cfg.timing()
    }

    fn nominal_wake(&self, node: NodeId, index: i64) -> f64 {
        self.nodes[node].phase + index as f64 * self.timing().t_frame
    }

    fn start(&mut self) -> Result<(), SimError> {
        let ts = self.timing().t_sleep;
        for node in 0..self.nodes.len() {
            // Stationary start: a node whose poll straddles t = 0 is already
            // polling, as if it had woken one frame before its phase.
            let index = if self.nodes[node].phase > ts { -1 } else { 0 };
            self.nodes[node].wake_index = index;
            let nominal = self.nominal_wake(node, index);
            self.queue.schedule(Event {
                time: nominal.max(0.0),
                node,
                kind: EventKind::WakeUp,
                payload: EventPayload::Wake { nominal },
            })?;
        }
        Ok(())
    }

    /// Runs until the guard or, once every packet is resolved and every
    /// node is back on its idle schedule, to the end of that frame.
    fn main_loop(&mut self) -> Result<(f64, bool), SimError> {
        let b = self.cfg.scenario().buffer_size;
        let tf = self.timing().t_frame;
        let guard = (b as f64 + 10.0) * tf * self.opts.guard_multiplier;
        let mut end = None;
        loop {
            if end.is_none() && self.quiescent() {
                let frames = (self.queue.now() / tf).ceil().max(1.0);
                end = Some(frames * tf);
            }
            let limit = end.unwrap_or(guard);
            match self.queue.peek_time() {
                Some(t) if t < limit => {
                    let ev = self.queue.pop().expect("peeked");
                    self.handle(ev)?;
                }
                _ => return Ok((limit, end.is_none())),
            }
        }
    }

    fn quiescent(&self) -> bool {
        self.unresolved == 0 && self.active.is_empty() && self.machines.iter().all(|m| m.is_idle())
    }

    fn handle(&mut self, ev: Event) -> Result<(), SimError> {
        let node = ev.node;
        match (ev.kind, ev.payload) {
            (EventKind::WakeUp, EventPayload::Wake { nominal }) => {
                let next = self.nodes[node].wake_index + 1;
                self.nodes[node].wake_index = next;
                let time = self.nominal_wake(node, next);
                self.queue.schedule(Event {
                    time,
                    node,
                    kind: EventKind::WakeUp,
                    payload: EventPayload::Wake { nominal: time },
                })?;
                self.dispatch(node, NodeEvent::WakeUp { nominal })
            }
            (EventKind::TxStart, EventPayload::Start(spec)) => self.transmit(node, spec),
            (EventKind::TxEnd, EventPayload::End(tx)) => self.tx_end(tx),
            (EventKind::Detect, EventPayload::Boundary { tx, epoch }) => {
                let rt = &self.nodes[node];
                let live = self.active.contains(&tx);
                if live
                    && rt.poll_epoch == epoch
                    && matches!(rt.radio, RadioState::Poll | RadioState::Rx)
                {
                    self.lock(node, tx);
                }
                Ok(())
            }
            (kind, EventPayload::Timer { token }) => {
                let timer = match kind {
                    EventKind::PollEnd => TimerKind::PollEnd,
                    EventKind::AckTimeout => TimerKind::AckTimeout,
                    EventKind::BackoffFire => TimerKind::BackoffFire,
                    EventKind::RendezvousFire => TimerKind::RendezvousFire,
                    EventKind::SleepEnd => TimerKind::SleepEnd,
                    _ => unreachable!("timer payload on {kind:?}"),
                };
                if self.nodes[node].timers[timer.index()] != token {
                    return Ok(());
                }
                self.dispatch(node, NodeEvent::Timer(timer))
            }
            (kind, payload) => unreachable!("malformed event {kind:?} {payload:?}"),
        }
    }

    fn dispatch(&mut self, node: NodeId, ev: NodeEvent) -> Result<(), SimError> {
        let view = NodeView {
            id: node,
            now: self.queue.now(),
            radio: self.nodes[node].radio,
            timing: self.cfg.timing(),
        };
        let actions = self.machines[node].step(&view, &ev)?;
        for a in actions {
            self.apply(node, a)?;
        }
        Ok(())
    }

    fn apply(&mut self, node: NodeId, action: Action) -> Result<(), SimError> {
        let now = self.queue.now();
        match action {
            Action::Sleep => {
                self.drop_locks(node);
                self.nodes[node].set_radio(RadioState::Sleep, now);
            }
            Action::Listen => {
                if self.nodes[node].radio == RadioState::Sleep {
                    self.enter_poll(node)?;
                }
            }
            Action::Transmit(spec) => self.transmit(node, spec)?,
            Action::TransmitAt(time, spec) => {
                // The protocol has handed the packet over; it is no longer
                // buffered even though it goes on air later.
                if let Payload::Packet(p) = spec.payload {
                    self.packets[p] = PacketState::InFlight;
                }
                self.queue.schedule(Event {
                    time,
                    node,
                    kind: EventKind::TxStart,
                    payload: EventPayload::Start(spec),
                })?
            }
            Action::SetTimer(kind, time) => self.set_timer(node, kind, time)?,
            Action::SetRandomTimer(kind, lo, hi) => {
                let delay = if hi > lo {
                    self.nodes[node].rng.random_range(lo..hi)
                } else {
                    lo
                };
                self.set_timer(node, kind, now + delay)?;
            }
            Action::CancelTimer(kind) => self.nodes[node].timers[kind.index()] += 1,
        }
        Ok(())
    }

    fn set_timer(&mut self, node: NodeId, kind: TimerKind, time: f64) -> Result<(), SimError> {
        let slot = &mut self.nodes[node].timers[kind.index()];
        *slot += 1;
        let token = *slot;
        self.queue.schedule(Event {
            time,
            node,
            kind: kind.event_kind(),
            payload: EventPayload::Timer { token },
        })
    }

    /// Receiver on. Frames starting now are caught immediately; long
    /// preambles already on air are caught at their next packet boundary.
    fn enter_poll(&mut self, node: NodeId) -> Result<(), SimError> {
        let now = self.queue.now();
        let rt = &mut self.nodes[node];
        rt.set_radio(RadioState::Poll, now);
        rt.poll_start = now;
        rt.poll_epoch += 1;
        let epoch = rt.poll_epoch;
        let pkt = self.opts.long_preamble_packet;
        let active = self.active.clone();
        for tx in active {
            let (start, end, kind, sender) = {
                let t = &self.txs[tx];
                (t.start, t.end(), t.kind, t.sender)
            };
            if sender == node {
                continue;
            }
            if start >= now {
                self.lock(node, tx);
            } else if kind == MessageKind::LongPreamble {
                let k = ((now - start) / pkt).ceil();
                let boundary = start + k * pkt;
                if boundary < end {
                    self.queue.schedule(Event {
                        time: boundary.max(now),
                        node,
                        kind: EventKind::Detect,
                        payload: EventPayload::Boundary { tx, epoch },
                    })?;
                }
            }
        }
        Ok(())
    }

    fn lock(&mut self, node: NodeId, tx: TxId) {
        let now = self.queue.now();
        let rt = &mut self.nodes[node];
        if rt.locks.iter().any(|l| l.tx == tx) {
            return;
        }
        rt.locks.push(Lock { tx, from: now });
        rt.set_radio(RadioState::Rx, now);
    }

    fn drop_locks(&mut self, node: NodeId) {
        let rt = &mut self.nodes[node];
        rt.locks.clear();
        rt.heard.clear();
    }

    fn transmit(&mut self, node: NodeId, spec: FrameSpec) -> Result<(), SimError> {
        let now = self.queue.now();
        self.drop_locks(node);
        self.nodes[node].set_radio(RadioState::Tx, now);
        let protocol = self.cfg.scenario().protocol;
        let duration = spec.kind.duration(protocol, self.timing());
        let id = self.txs.len();
        let mut collided = false;
        for &other in &self.active {
            self.txs[other].collided = true;
            collided = true;
        }
        if let Payload::Packet(p) = spec.payload {
            self.packets[p] = PacketState::InFlight;
        }
        self.txs.push(Transmission {
            id,
            sender: node,
            kind: spec.kind,
            dest: spec.dest,
            start: now,
            duration,
            payload: spec.payload,
            collided,
        });
        self.active.push(id);
        self.queue.schedule(Event {
            time: now + duration,
            node,
            kind: EventKind::TxEnd,
            payload: EventPayload::End(id),
        })?;
        for other in 0..self.nodes.len() {
            if other != node && matches!(self.nodes[other].radio, RadioState::Poll | RadioState::Rx)
            {
                self.lock(other, id);
            }
        }
        Ok(())
    }

    fn tx_end(&mut self, id: TxId) -> Result<(), SimError> {
        let now = self.queue.now();
        self.active.retain(|&a| a != id);
        let tx = self.txs[id].clone();

        if let (MessageKind::Data, Payload::Packet(p), Destination::Node(d)) =
            (tx.kind, &tx.payload, tx.dest)
        {
            let heard_whole = self.nodes[d]
                .locks
                .iter()
                .any(|l| l.tx == id && l.from == tx.start);
            if heard_whole && !tx.collided {
                self.packets[*p] = PacketState::Received;
                self.deliveries.push(Delivery {
                    tx: id,
                    packet: *p,
                    sender: tx.sender,
                    time: now,
                });
            } else {
                self.packets[*p] = PacketState::Lost;
            }
            self.unresolved -= 1;
        }

        // Unlock every listener first; those left with no open frame go back
        // to polling and are owed a FrameEnd.
        let mut finished = Vec::new();
        for node in 0..self.nodes.len() {
            let rt = &mut self.nodes[node];
            if let Some(pos) = rt.locks.iter().position(|l| l.tx == id) {
                let lock = rt.locks.remove(pos);
                rt.heard.push(lock);
                if rt.locks.is_empty() {
                    finished.push(node);
                    self.enter_poll(node)?;
                }
            }
        }
        self.enter_poll(tx.sender)?;
        self.dispatch(tx.sender, NodeEvent::TxDone { kind: tx.kind })?;

        for node in finished {
            let heard = std::mem::take(&mut self.nodes[node].heard);
            if heard.is_empty() {
                continue;
            }
            let receptions = heard
                .iter()
                .map(|l| {
                    let t = &self.txs[l.tx];
                    let outcome = if t.collided {
                        RxOutcome::Collided
                    } else if l.from > t.start {
                        RxOutcome::Partial
                    } else {
                        RxOutcome::Received
                    };
                    Reception {
                        tx: l.tx,
                        sender: t.sender,
                        kind: t.kind,
                        dest: t.dest,
                        payload: t.payload.clone(),
                        outcome,
                    }
                })
                .collect();
            self.dispatch(node, NodeEvent::FrameEnd(receptions))?;
        }
        Ok(())
    }

    fn finish(
        mut self,
        seed: u64,
        sim_end: f64,
        guard_expired: bool,
        phases: Vec<f64>,
    ) -> Result<RunOutput, SimError> {
        let trace = RadioTrace {
            nodes: self.nodes.iter_mut().map(|n| n.close(sim_end)).collect(),
        };
        trace.check_tiling(sim_end)?;
        let received = self
            .packets
            .iter()
            .filter(|&&s| s == PacketState::Received)
            .count();
        let lost = self
            .packets
            .iter()
            .filter(|&&s| s == PacketState::Lost)
            .count();
        let remaining = self.packets.len() - received - lost;
        let buffered: usize = self.machines.iter().map(|m| m.buffered()).sum();
        let in_flight = self
            .packets
            .iter()
            .filter(|&&s| s == PacketState::InFlight)
            .count();
        debug_assert_eq!(buffered + in_flight, remaining);
        Ok(RunOutput {
            protocol: self.cfg.scenario().protocol,
            seed,
            sim_end,
            trace,
            transmissions: self.txs,
            deliveries: self.deliveries,
            packets: PacketTally {
                received,
                lost,
                remaining,
            },
            buffer_size: self.cfg.scenario().buffer_size,
            guard_expired,
            frames: (sim_end / self.cfg.timing().t_frame).round() as usize,
            phases,
        })
    }
}
