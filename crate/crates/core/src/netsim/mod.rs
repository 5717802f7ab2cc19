//! Deterministic discrete-event simulator for the four-node chain A–B–C–D.
//!
//! Time is integer microseconds. Each directed link is a FIFO transmitter with
//! a busy horizon: a packet departs at `max(now, busy_until)`, occupies the link
//! for its serialization time, and arrives one propagation delay later. Loss is
//! an i.i.d. Bernoulli draw at departure from the link's own PRNG substream.
//! A packet whose departure falls inside a disruption is either held by the
//! link's store-and-forward gateway until the disruption ends or dropped.

mod trace;

pub use trace::{CsvTrace, HashTrace, MemoryTrace, NullTrace, TraceKind, TraceRecord, TraceSink};

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ntsp::StoreForwardBuffer;
use crate::transport::serialization_us;

pub const DEFAULT_MAX_EVENTS: u64 = 200_000_000;
pub const DEFAULT_GATEWAY_CAPACITY: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid link {link}: {reason}")]
    InvalidLink { link: String, reason: String },
    #[error("no link from {0} to {1}")]
    NoRoute(Node, Node),
    #[error("event bound of {0} exceeded")]
    EventBound(u64),
    #[error("store-and-forward buffer on {link} overflowed at t={t_us}us ({bytes} bytes held, capacity {capacity})")]
    GatewayOverflow { link: String, t_us: u64, bytes: usize, capacity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    A,
    B,
    C,
    D,
}

impl Node {
    pub const ALL: [Node; 4] = [Node::A, Node::B, Node::C, Node::D];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Node::A => "A",
            Node::B => "B",
            Node::C => "C",
            Node::D => "D",
        };
        f.write_str(s)
    }
}

/// Seconds to whole microseconds.
pub fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub from: Node,
    pub to: Node,
    /// Bits/s.
    pub bandwidth: f64,
    pub owd_us: u64,
    pub loss_prob: f64,
    /// Sorted, disjoint `[start, end)` intervals in μs.
    pub disruptions: Vec<(u64, u64)>,
}

impl LinkSpec {
    pub fn new(from: Node, to: Node, bandwidth: f64, owd_s: f64, loss_prob: f64) -> Self {
        Self { from, to, bandwidth, owd_us: secs_to_us(owd_s), loss_prob, disruptions: Vec::new() }
    }

    pub fn name(&self) -> String {
        format!("{}>{}", self.from, self.to)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: String| Err(SimError::InvalidLink { link: self.name(), reason });
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth {}", self.bandwidth));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return bad(format!("loss probability {}", self.loss_prob));
        }
        if self.from == self.to {
            return bad("self loop".into());
        }
        let mut prev_end = 0;
        for (i, &(s, e)) in self.disruptions.iter().enumerate() {
            if s >= e {
                return bad(format!("empty or inverted disruption [{s}, {e})"));
            }
            if i > 0 && s < prev_end {
                return bad("disruptions overlap or are unsorted".into());
            }
            prev_end = e;
        }
        Ok(())
    }

    /// End of the disruption containing `t`, if any.
    pub fn disrupted_until(&self, t: u64) -> Option<u64> {
        let i = self.disruptions.partition_point(|&(_, e)| e <= t);
        self.disruptions.get(i).filter(|&&(s, _)| s <= t).map(|&(_, e)| e)
    }
}

/// A–B and C–D at 200 Mbps / 10 ms lossless; B→C 10 Mbps and C→B 1 Mbps, both
/// 2.01 s with independent loss `loss_prob` per direction.
pub fn standard_topology(loss_prob: f64) -> Vec<LinkSpec> {
    vec![
        LinkSpec::new(Node::A, Node::B, 200e6, 0.010, 0.0),
        LinkSpec::new(Node::B, Node::A, 200e6, 0.010, 0.0),
        LinkSpec::new(Node::B, Node::C, 10e6, 2.010, loss_prob),
        LinkSpec::new(Node::C, Node::B, 1e6, 2.010, loss_prob),
        LinkSpec::new(Node::C, Node::D, 200e6, 0.010, 0.0),
        LinkSpec::new(Node::D, Node::C, 200e6, 0.010, 0.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub src: Node,
    pub dst: Node,
    pub payload: Vec<u8>,
    pub enqueue_us: u64,
    pub depart_us: u64,
    pub arrive_us: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub outage_drops: u64,
    pub held: u64,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
}

#[derive(Debug)]
struct LinkState {
    spec: LinkSpec,
    busy_until: u64,
    rng: ChaCha8Rng,
    counters: LinkCounters,
    gateway: Option<StoreForwardBuffer<Packet>>,
    /// Disruption end for which a gateway release is already scheduled.
    release_at: Option<u64>,
}

#[derive(Debug)]
enum EventKind {
    Arrival { link: usize, packet: Packet },
    Timer { node: Node, token: u64 },
    Release { link: usize },
}

struct Event {
    t: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.seq) == (o.t, o.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Event {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(o.t, o.seq))
    }
}

/// Node behavior driven by the simulator.
pub trait Handler {
    type Error: From<SimError>;
    fn on_packet(&mut self, sim: &mut Simulator, node: Node, packet: Packet) -> Result<(), Self::Error>;
    fn on_timer(&mut self, sim: &mut Simulator, node: Node, token: u64) -> Result<(), Self::Error>;
}

pub struct Simulator {
    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<Event>>,
    links: Vec<LinkState>,
    route: [[Option<usize>; 4]; 4],
    next_packet_id: u64,
    events: u64,
    max_events: u64,
    stopped: bool,
    trace: Box<dyn TraceSink>,
}

impl fmt::Debug for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator").field("now", &self.now).field("events", &self.events).finish_non_exhaustive()
    }
}

impl Simulator {
    pub fn new(links: Vec<LinkSpec>, seed: u64, trace: Box<dyn TraceSink>) -> Result<Self, SimError> {
        let mut route = [[None; 4]; 4];
        let mut states = Vec::with_capacity(links.len());
        for (i, spec) in links.into_iter().enumerate() {
            spec.validate()?;
            let slot = &mut route[spec.from.index()][spec.to.index()];
            if slot.is_some() {
                return Err(SimError::InvalidLink { link: spec.name(), reason: "duplicate link".into() });
            }
            *slot = Some(i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            states.push(LinkState {
                spec,
                busy_until: 0,
                rng,
                counters: LinkCounters::default(),
                gateway: None,
                release_at: None,
            });
        }
        Ok(Self {
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            links: states,
            route,
            next_packet_id: 0,
            events: 0,
            max_events: DEFAULT_MAX_EVENTS,
            stopped: false,
            trace,
        })
    }

    pub fn set_max_events(&mut self, n: u64) {
        self.max_events = n;
    }

    /// Enables a store-and-forward gateway at the transmitting end of `from→to`.
    pub fn enable_gateway(&mut self, from: Node, to: Node, capacity: usize) -> Result<(), SimError> {
        let i = self.link_index(from, to)?;
        self.links[i].gateway = Some(StoreForwardBuffer::new(capacity));
        Ok(())
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    pub fn link_index(&self, from: Node, to: Node) -> Result<usize, SimError> {
        self.route[from.index()][to.index()].ok_or(SimError::NoRoute(from, to))
    }

    pub fn link_spec(&self, from: Node, to: Node) -> Result<&LinkSpec, SimError> {
        Ok(&self.links[self.link_index(from, to)?].spec)
    }

    pub fn counters(&self, from: Node, to: Node) -> Result<LinkCounters, SimError> {
        Ok(self.links[self.link_index(from, to)?].counters)
    }

    pub fn gateway(&self, from: Node, to: Node) -> Option<&StoreForwardBuffer<Packet>> {
        let i = self.link_index(from, to).ok()?;
        self.links[i].gateway.as_ref()
    }

    /// Earliest time a packet handed to `from→to` now would start transmitting.
    pub fn busy_until(&self, from: Node, to: Node) -> Result<u64, SimError> {
        Ok(self.links[self.link_index(from, to)?].busy_until.max(self.now))
    }

    pub fn stop(&mut self) {
        self.stopped = true;
    }

    pub fn trace_mut(&mut self) -> &mut dyn TraceSink {
        self.trace.as_mut()
    }

    pub fn into_trace(self) -> Box<dyn TraceSink> {
        self.trace
    }

    fn push(&mut self, t: u64, kind: EventKind) {
        self.heap.push(Reverse(Event { t, seq: self.seq, kind }));
        self.seq += 1;
    }

    pub fn set_timer(&mut self, node: Node, at_us: u64, token: u64) {
        self.push(at_us.max(self.now), EventKind::Timer { node, token });
    }

    fn record(&mut self, kind: TraceKind, node: Node, link: usize, id: u64, size: usize, detail: u64) {
        let spec = &self.links[link].spec;
        let rec = TraceRecord { t_us: self.now, kind, node, link: (spec.from, spec.to), packet_id: id, size, detail };
        self.trace.record(&rec);
    }

    /// Hands `payload` to the link `from→to` and returns the packet id.
    pub fn send(&mut self, from: Node, to: Node, payload: Vec<u8>) -> Result<u64, SimError> {
        let li = self.link_index(from, to)?;
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        let packet = Packet { id, src: from, dst: to, payload, enqueue_us: self.now, depart_us: 0, arrive_us: 0 };
        let size = packet.payload.len();
        self.links[li].counters.sent += 1;
        self.links[li].counters.bytes_sent += size as u64;
        self.record(TraceKind::Send, from, li, id, size, 0);
        let depart = self.links[li].busy_until.max(self.now);
        if let Some(end) = self.links[li].release_at {
            // Queue behind packets already held so release order stays FIFO.
            self.hold(li, packet, end)?;
            return Ok(id);
        }
        if let Some(end) = self.links[li].spec.disrupted_until(depart) {
            if self.links[li].gateway.is_some() {
                self.hold(li, packet, end)?;
            } else {
                self.links[li].counters.outage_drops += 1;
                self.record(TraceKind::OutageDrop, from, li, id, size, depart);
            }
            return Ok(id);
        }
        self.transmit(li, packet, depart);
        Ok(id)
    }

    fn hold(&mut self, li: usize, packet: Packet, end: u64) -> Result<(), SimError> {
        let (id, size, from) = (packet.id, packet.payload.len(), packet.src);
        let now = self.now;
        let link = &mut self.links[li];
        let gw = link.gateway.as_mut().expect("gateway checked by caller");
        if gw.push(packet, size, now).is_err() {
            return Err(SimError::GatewayOverflow {
                link: link.spec.name(),
                t_us: now,
                bytes: gw.bytes() + size,
                capacity: gw.capacity(),
            });
        }
        link.counters.held += 1;
        let schedule = link.release_at != Some(end);
        link.release_at = Some(end);
        self.record(TraceKind::Hold, from, li, id, size, end);
        if schedule {
            self.push(end, EventKind::Release { link: li });
        }
        Ok(())
    }

    fn transmit(&mut self, li: usize, mut packet: Packet, depart: u64) {
        let link = &mut self.links[li];
        let size = packet.payload.len();
        let done = depart + serialization_us(size, link.spec.bandwidth);
        link.busy_until = done;
        let lost = link.spec.loss_prob > 0.0 && link.rng.gen_bool(link.spec.loss_prob);
        packet.depart_us = depart;
        packet.arrive_us = done + link.spec.owd_us;
        if lost {
            link.counters.lost += 1;
            let (from, id) = (packet.src, packet.id);
            self.record(TraceKind::Loss, from, li, id, size, depart);
        } else {
            let t = packet.arrive_us;
            self.push(t, EventKind::Arrival { link: li, packet });
        }
    }

    /// Drains the gateway in FIFO order at link rate.
    fn release(&mut self, li: usize) {
        self.links[li].release_at = None;
        while let Some((packet, _)) = self.links[li].gateway.as_mut().and_then(|g| g.pop()) {
            let depart = self.links[li].busy_until.max(self.now);
            let (from, id, size) = (packet.src, packet.id, packet.payload.len());
            self.record(TraceKind::Release, from, li, id, size, depart);
            self.transmit(li, packet, depart);
        }
    }

    /// Runs until the event queue is empty, `until_us` is passed, or a handler
    /// calls [`Simulator::stop`].
    pub fn run<H: Handler>(&mut self, handler: &mut H, until_us: Option<u64>) -> Result<(), H::Error> {
        while let Some(Reverse(ev)) = self.heap.peek() {
            if self.stopped || until_us.is_some_and(|u| ev.t > u) {
                break;
            }
            let Reverse(ev) = self.heap.pop().unwrap();
            self.events += 1;
            if self.events > self.max_events {
                return Err(SimError::EventBound(self.max_events).into());
            }
            self.now = ev.t;
            match ev.kind {
                EventKind::Arrival { link, packet } => {
                    let to = self.links[link].spec.to;
                    self.links[link].counters.delivered += 1;
                    self.links[link].counters.bytes_delivered += packet.payload.len() as u64;
                    self.record(TraceKind::Deliver, to, link, packet.id, packet.payload.len(), packet.depart_us);
                    handler.on_packet(self, to, packet)?;
                }
                EventKind::Timer { node, token } => handler.on_timer(self, node, token)?,
                EventKind::Release { link } => self.release(link),
            }
        }
        if let Some(u) = until_us {
            if !self.stopped {
                self.now = self.now.max(u);
            }
        }
        Ok(())
    }

    /// Packets handed to `from→to` that are neither delivered nor dropped yet.
    pub fn in_flight(&self, from: Node, to: Node) -> Result<u64, SimError> {
        let c = self.counters(from, to)?;
        Ok(c.sent - c.delivered - c.lost - c.outage_drops)
    }
}

/// One scripted send: at `t_us`, `from` sends `size` bytes to neighbor `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedSend {
    pub t_us: u64,
    pub from: Node,
    pub to: Node,
    pub size: usize,
}

struct ScriptRunner {
    sends: Vec<ScriptedSend>,
    delivered: Vec<Packet>,
}

impl Handler for ScriptRunner {
    type Error = SimError;

    fn on_packet(&mut self, _: &mut Simulator, _: Node, packet: Packet) -> Result<(), SimError> {
        self.delivered.push(packet);
        Ok(())
    }

    fn on_timer(&mut self, sim: &mut Simulator, _: Node, token: u64) -> Result<(), SimError> {
        let s = self.sends[token as usize];
        sim.send(s.from, s.to, vec![0u8; s.size])?;
        Ok(())
    }
}

/// Runs a fixed send schedule with sink nodes and returns the delivered
/// packets in arrival order.
pub fn run_script(
    links: Vec<LinkSpec>,
    sends: &[ScriptedSend],
    seed: u64,
    trace: Box<dyn TraceSink>,
    gateway: Option<(Node, Node)>,
) -> Result<(Vec<Packet>, Simulator), SimError> {
    let mut sim = Simulator::new(links, seed, trace)?;
    if let Some((f, t)) = gateway {
        sim.enable_gateway(f, t, DEFAULT_GATEWAY_CAPACITY)?;
    }
    for (i, s) in sends.iter().enumerate() {
        sim.set_timer(s.from, s.t_us, i as u64);
    }
    let mut runner = ScriptRunner { sends: sends.to_vec(), delivered: Vec::new() };
    sim.run(&mut runner, None)?;
    Ok((runner.delivered, sim))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_link(bw: f64, owd: f64, loss: f64) -> Vec<LinkSpec> {
        vec![LinkSpec::new(Node::B, Node::C, bw, owd, loss)]
    }

    fn sends(n: usize, gap: u64, size: usize) -> Vec<ScriptedSend> {
        (0..n).map(|i| ScriptedSend { t_us: i as u64 * gap, from: Node::B, to: Node::C, size }).collect()
    }

    #[test]
    fn idle_link_delay() {
        let (got, _) = run_script(one_link(10e6, 2.01, 0.0), &sends(1, 0, 1500), 1, Box::new(NullTrace), None).unwrap();
        assert_eq!(got[0].arrive_us, 1200 + 2_010_000);
        assert_eq!(got[0].arrive_us - got[0].depart_us, 1200 + 2_010_000);
    }

    #[test]
    fn fifo_queueing_behind_busy_link() {
        let (got, _) = run_script(one_link(8e6, 0.001, 0.0), &sends(3, 0, 1000), 1, Box::new(NullTrace), None).unwrap();
        let arrivals: Vec<u64> = got.iter().map(|p| p.arrive_us).collect();
        assert_eq!(arrivals, vec![2000, 3000, 4000]);
    }

    #[test]
    fn standard_path_delay() {
        let links = standard_topology(0.0);
        let total: u64 = [(Node::A, Node::B), (Node::B, Node::C), (Node::C, Node::D)]
            .iter()
            .map(|&(f, t)| links.iter().find(|l| l.from == f && l.to == t).unwrap().owd_us)
            .sum();
        assert_eq!(total, 2_030_000);
        let bc = links.iter().find(|l| l.from == Node::B && l.to == Node::C).unwrap();
        let cb = links.iter().find(|l| l.from == Node::C && l.to == Node::B).unwrap();
        assert_eq!(bc.bandwidth / cb.bandwidth, 10.0);
        let bdp_packets = bc.bandwidth * 4.02 / 8.0 / 1500.0;
        assert!((bdp_packets - 3350.0).abs() < 1e-9);
    }

    #[test]
    fn empty_run_has_empty_trace() {
        let (got, sim) = run_script(standard_topology(0.1), &[], 3, Box::new(MemoryTrace::default()), None).unwrap();
        assert!(got.is_empty());
        assert_eq!(sim.events_processed(), 0);
    }

    #[test]
    fn no_loss_means_no_drops() {
        let (got, sim) = run_script(one_link(1e9, 0.001, 0.0), &sends(5000, 10, 100), 9, Box::new(NullTrace), None).unwrap();
        assert_eq!(got.len(), 5000);
        assert_eq!(sim.counters(Node::B, Node::C).unwrap().lost, 0);
    }

    #[test]
    fn loss_rate_converges() {
        let n = 1_000_000;
        let (got, sim) = run_script(one_link(1e12, 0.0, 0.01), &sends(n, 1, 1), 4, Box::new(NullTrace), None).unwrap();
        let c = sim.counters(Node::B, Node::C).unwrap();
        let frac = c.lost as f64 / n as f64;
        assert!((frac - 0.01).abs() <= 0.0005, "{frac}");
        assert_eq!(got.len() as u64 + c.lost, n as u64);
    }

    #[test]
    fn deterministic_trace_hash() {
        let run = |seed| {
            let (_, sim) = run_script(one_link(1e7, 0.01, 0.05), &sends(2000, 700, 900), seed, Box::new(HashTrace::new()), None).unwrap();
            sim.into_trace().digest().unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn per_link_substreams_are_independent() {
        let mut two = one_link(1e9, 0.0, 0.2);
        two.push(LinkSpec::new(Node::C, Node::B, 1e9, 0.0, 0.2));
        let fwd = sends(500, 10, 10);
        let mut both = fwd.clone();
        both.extend((0..500).map(|i| ScriptedSend { t_us: i * 10 + 3, from: Node::C, to: Node::B, size: 10 }));
        let ids = |got: &[Packet], sim: &Simulator| {
            let _ = sim;
            got.iter().filter(|p| p.src == Node::B).map(|p| p.enqueue_us).collect::<Vec<_>>()
        };
        let (a, sa) = run_script(two.clone(), &fwd, 5, Box::new(NullTrace), None).unwrap();
        let (b, sb) = run_script(two, &both, 5, Box::new(NullTrace), None).unwrap();
        assert_eq!(ids(&a, &sa), ids(&b, &sb));
    }

    #[test]
    fn disruption_drops_without_gateway() {
        let mut l = one_link(8e6, 0.0, 0.0);
        l[0].disruptions = vec![(1000, 5000)];
        let (got, sim) = run_script(l, &sends(10, 1000, 1000), 1, Box::new(NullTrace), None).unwrap();
        let c = sim.counters(Node::B, Node::C).unwrap();
        assert_eq!(c.outage_drops, 4);
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn gateway_holds_and_releases_in_order() {
        let mut l = one_link(8e6, 0.0, 0.0);
        l[0].disruptions = vec![(1000, 5000)];
        let (got, sim) = run_script(l, &sends(10, 1000, 1000), 1, Box::new(NullTrace), Some((Node::B, Node::C))).unwrap();
        let c = sim.counters(Node::B, Node::C).unwrap();
        assert_eq!((c.outage_drops, c.held, got.len()), (0, 5, 10));
        let ids: Vec<u64> = got.iter().map(|p| p.id).collect();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert_eq!(got[1].depart_us, 5000);
        assert_eq!(got[4].depart_us, 8000);
        assert_eq!(got[5].depart_us, 9000);
        assert_eq!(sim.gateway(Node::B, Node::C).unwrap().high_water(), 5000);
    }

    #[test]
    fn zero_width_schedule_matches_no_disruption() {
        let base = run_script(one_link(8e6, 0.1, 0.1), &sends(100, 900, 1000), 2, Box::new(NullTrace), Some((Node::B, Node::C))).unwrap().0;
        let mut l = one_link(8e6, 0.1, 0.1);
        l[0].disruptions = vec![];
        let same = run_script(l, &sends(100, 900, 1000), 2, Box::new(NullTrace), None).unwrap().0;
        assert_eq!(base, same);
    }

    #[test]
    fn gateway_overflow_aborts() {
        let mut l = one_link(8e6, 0.0, 0.0);
        l[0].disruptions = vec![(0, 1_000_000)];
        let mut sim = Simulator::new(l, 1, Box::new(NullTrace)).unwrap();
        sim.enable_gateway(Node::B, Node::C, 2500).unwrap();
        sim.send(Node::B, Node::C, vec![0; 1000]).unwrap();
        sim.send(Node::B, Node::C, vec![0; 1000]).unwrap();
        assert!(matches!(sim.send(Node::B, Node::C, vec![0; 1000]), Err(SimError::GatewayOverflow { .. })));
    }

    #[test]
    fn event_bound() {
        let mut sim = Simulator::new(one_link(1e6, 0.0, 0.0), 1, Box::new(NullTrace)).unwrap();
        sim.set_max_events(3);
        let mut r = ScriptRunner { sends: sends(5, 1, 1), delivered: vec![] };
        for i in 0..5 {
            sim.set_timer(Node::B, i, i);
        }
        assert_eq!(sim.run(&mut r, None), Err(SimError::EventBound(3)));
    }

    #[test]
    fn invalid_links() {
        let mut l = LinkSpec::new(Node::A, Node::B, 1e6, 0.0, 0.0);
        l.disruptions = vec![(5, 10), (8, 12)];
        assert!(l.validate().is_err());
        l.disruptions = vec![(5, 5)];
        assert!(l.validate().is_err());
        assert!(LinkSpec::new(Node::A, Node::B, 0.0, 0.0, 0.0).validate().is_err());
        assert!(LinkSpec::new(Node::A, Node::B, 1.0, 0.0, 1.5).validate().is_err());
        let dup = vec![LinkSpec::new(Node::A, Node::B, 1.0, 0.0, 0.0), LinkSpec::new(Node::A, Node::B, 1.0, 0.0, 0.0)];
        assert!(Simulator::new(dup, 0, Box::new(NullTrace)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn fifo_and_conservation(
            gaps in proptest::collection::vec((0u64..3000, 1usize..1500), 1..300),
            loss in 0.0f64..0.3,
            outage in proptest::option::of((0u64..200_000, 1u64..100_000)),
            gateway: bool,
            seed: u64,
        ) {
            let mut l = one_link(8e6, 0.05, loss);
            if let Some((s, w)) = outage {
                l[0].disruptions = vec![(s, s + w)];
            }
            let mut t = 0;
            let script: Vec<ScriptedSend> = gaps.iter().map(|&(g, size)| {
                t += g;
                ScriptedSend { t_us: t, from: Node::B, to: Node::C, size }
            }).collect();
            let gw = gateway.then_some((Node::B, Node::C));
            let (got, sim) = run_script(l, &script, seed, Box::new(NullTrace), gw).unwrap();
            proptest::prop_assert!(got.windows(2).all(|w| w[0].id < w[1].id));
            for p in &got {
                proptest::prop_assert_eq!(p.arrive_us, p.depart_us + serialization_us(p.payload.len(), 8e6) + 50_000);
            }
            let c = sim.counters(Node::B, Node::C).unwrap();
            proptest::prop_assert_eq!(c.sent, c.delivered + c.lost + c.outage_drops);
            proptest::prop_assert_eq!(c.delivered, got.len() as u64);
            proptest::prop_assert_eq!(sim.in_flight(Node::B, Node::C).unwrap(), 0);
            if gateway {
                proptest::prop_assert_eq!(c.outage_drops, 0);
            }
        }
    }

    #[test]
    fn disruption_lookup() {
        let mut l = LinkSpec::new(Node::A, Node::B, 1.0, 0.0, 0.0);
        l.disruptions = vec![(10, 20), (30, 40)];
        assert_eq!(l.disrupted_until(9), None);
        assert_eq!(l.disrupted_until(10), Some(20));
        assert_eq!(l.disrupted_until(19), Some(20));
        assert_eq!(l.disrupted_until(20), None);
        assert_eq!(l.disrupted_until(35), Some(40));
    }
}
