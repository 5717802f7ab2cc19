//! Node behavior for one scenario run.
//!
//! pepspace: A writes each flow as an access stream to B under B's window. B
//! keeps a backpressure buffer per stream, multiplexes them round-robin into
//! the FEC transport towards C, and C demultiplexes in-order chunks onto access
//! streams to D. raw-endpoint: A runs the transport directly and D decodes;
//! B and C only forward.
//!
//! The world also plays observer: it knows every send time and produces the
//! per-chunk timeline.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::alde::{self, BlockReader, KeyCache, KeyId, StreamReceiver, StreamSubkey, HEADER_LEN, KEY_ID_LEN, MAX_PLAINTEXT};
use crate::fec::{Decoder, DecoderConfig, Encoder, EncoderConfig, SOURCE_HEADER_LEN, SYMBOL_SIZE};
use crate::netsim::{Handler, Node, Packet, SimError, Simulator};
use crate::ntsp::{
    unwrap_limit, AccessSegment, ProxySession, RoundRobin, SessionRole, StreamBuffer, StreamChunk, WindowUpdate,
    ACCESS_SEGMENT_TYPE, STREAM_CHUNK_HEADER_LEN, WINDOW_UPDATE_TYPE,
};
use crate::transport::{
    decode_datagram, encode_datagram, CongestionState, Datagram, LossEstimator, RateConfig, SendAction,
    TransportReceiver, TransportSender, DATAGRAM_HEADER_LEN,
};

use super::config::{ScenarioConfig, Scheme};
use super::TimelineRecord;

/// Written at the start of every plaintext block.
pub const PLAINTEXT_MARKER: &[u8] = b"ipnpep-plaintext-marker:";

const CHUNK_DATA: usize = SYMBOL_SIZE - STREAM_CHUNK_HEADER_LEN;
const MAX_DATAGRAM: usize = DATAGRAM_HEADER_LEN + SOURCE_HEADER_LEN + SYMBOL_SIZE;
const T_START: u64 = 0;
const T_PUMP: u64 = 1;
const T_ACK: u64 = 2;
const SAMPLE_EVERY_TICKS: u64 = 10;
const OPACITY_EVERY_SAMPLES: u64 = 10;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invariant violated at t={t_us}us: {msg}")]
    Invariant { t_us: u64, msg: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn violation(sim: &Simulator, msg: impl Into<String>) -> RunError {
    RunError::Invariant { t_us: sim.now(), msg: msg.into() }
}

/// ALDE stream length for `size` plaintext bytes.
pub fn stream_len(size: u64) -> u64 {
    let blocks = size.div_ceil(MAX_PLAINTEXT as u64);
    KEY_ID_LEN as u64 + blocks * HEADER_LEN as u64 + size
}

/// The exporter secret both endpoints receive for a run.
pub fn exporter_secret(seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"ipnpep harness exporter");
    h.update(seed.to_be_bytes());
    h.finalize().into()
}

/// Deterministic plaintext of one flow, produced block by block.
#[derive(Debug, Clone)]
pub struct PlaintextGen {
    rng: ChaCha8Rng,
    remaining: u64,
}

impl PlaintextGen {
    pub fn new(seed: u64, flow: usize, size: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706c_6169_6e74_6578);
        rng.set_stream(flow as u64);
        Self { rng, remaining: size }
    }

    pub fn next_block(&mut self) -> Option<Vec<u8>> {
        if self.remaining == 0 {
            return None;
        }
        let n = self.remaining.min(MAX_PLAINTEXT as u64) as usize;
        self.remaining -= n as u64;
        let mut b = vec![0u8; n];
        self.rng.fill_bytes(&mut b);
        let m = PLAINTEXT_MARKER.len().min(n);
        b[..m].copy_from_slice(&PLAINTEXT_MARKER[..m]);
        Some(b)
    }
}

/// Sender application: the ALDE-framed byte stream of one flow.
struct FlowSource {
    gen: PlaintextGen,
    subkey: StreamSubkey,
    pending: VecDeque<u8>,
    taken: u64,
    total: u64,
}

impl FlowSource {
    fn available(&self) -> u64 {
        self.total - self.taken
    }

    fn take(&mut self, max: usize) -> Result<Option<(u64, Vec<u8>)>, alde::AldeError> {
        while self.pending.len() < max {
            match self.gen.next_block() {
                Some(pt) => {
                    let block = alde::seal(&mut self.subkey, &pt, false)?;
                    self.pending.extend(block.to_bytes());
                }
                None => break,
            }
        }
        let n = max.min(self.pending.len());
        if n == 0 {
            return Ok(None);
        }
        let off = self.taken;
        self.taken += n as u64;
        Ok(Some((off, self.pending.drain(..n).collect())))
    }
}

/// Receiver application: parses, authenticates and checks one stream.
struct FlowSink {
    reader: BlockReader,
    rx: Option<StreamReceiver>,
    flow: Option<usize>,
    gen: Option<PlaintextGen>,
    expected: u64,
    verified: u64,
}

impl FlowSink {
    fn new() -> Self {
        Self { reader: BlockReader::new(), rx: None, flow: None, gen: None, expected: 0, verified: 0 }
    }
}

struct TunnelSender {
    node: Node,
    peer: Node,
    tx: TransportSender,
    rr: RoundRobin,
    pump_at: Option<u64>,
}

struct TunnelReceiver {
    node: Node,
    peer: Node,
    rx: TransportReceiver,
    /// Payloads waiting for a lower missing id, with their receive times.
    reorder: BTreeMap<u64, (Vec<u8>, u64)>,
    next_id: u64,
}

struct ChunkInFlight {
    flow: usize,
    offset: u64,
    len: u64,
    t_send: u64,
    t_recv: u64,
    t_fwd: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_us: u64,
    pub dw_width: u64,
    pub decoder_buffered: usize,
    pub p_e: f64,
    pub redundancy: f64,
    pub bytes_in_flight: u64,
    pub gateway_bytes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpacityScan {
    pub snapshots: u64,
    pub bytes_scanned: u64,
    pub hits: u64,
}

pub struct World {
    scheme: Scheme,
    seed: u64,
    flow_size: u64,
    ack_interval_us: u64,
    sources: Vec<FlowSource>,
    a_limit: Vec<u64>,
    send_log: Vec<Vec<(u64, u64)>>,
    b_buffers: Vec<StreamBuffer>,
    b_session: ProxySession,
    proxy_to_flow: HashMap<u64, usize>,
    c_session: ProxySession,
    sender: TunnelSender,
    receiver: TunnelReceiver,
    to_d: VecDeque<ChunkInFlight>,
    d_cache: KeyCache,
    d_keys: HashMap<KeyId, usize>,
    sinks: HashMap<u64, FlowSink>,
    pub timeline: Vec<TimelineRecord>,
    pub completion_us: Vec<Option<u64>>,
    pub verified_plaintext: Vec<u64>,
    pub samples: Vec<Sample>,
    pub opacity: OpacityScan,
    opacity_scan: bool,
    ticks: u64,
    done: usize,
}

impl World {
    pub fn new(cfg: &ScenarioConfig, opacity_scan: bool) -> Self {
        let n = cfg.flow.count;
        let master = alde::derive_master(&exporter_secret(cfg.seed), alde::DEFAULT_LABEL).expect("nonempty secret");
        let d_cache = KeyCache::new();
        let mut d_keys = HashMap::new();
        let mut sources = Vec::with_capacity(n);
        for flow in 0..n {
            let subkey = alde::derive_subkey(&master, flow as u64);
            let id = d_cache.insert(&subkey);
            d_keys.insert(id, flow);
            let mut pending = VecDeque::new();
            pending.extend(alde::key_id(&subkey).0);
            sources.push(FlowSource {
                gen: PlaintextGen::new(cfg.seed, flow, cfg.flow.size),
                subkey,
                pending,
                taken: 0,
                total: stream_len(cfg.flow.size),
            });
        }
        let fec_seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x6665_63;
        let (snd, rcv) = match cfg.scheme {
            Scheme::Pepspace => ((Node::B, Node::C), (Node::C, Node::B)),
            Scheme::RawEndpoint => ((Node::A, Node::B), (Node::D, Node::C)),
        };
        let bottleneck = cfg.link(Node::B, Node::C).bandwidth;
        let rate = RateConfig::new(bottleneck, cfg.tunnel_rtt());
        let encoder = Encoder::new(EncoderConfig { seed: fec_seed, delta: cfg.fec.delta, initial_pe: cfg.fec.initial_pe });
        let tx = TransportSender::new(
            encoder,
            CongestionState::new(&rate).expect("validated link"),
            LossEstimator::with_batch(cfg.fec.initial_pe, cfg.fec.alpha, cfg.fec.loss_batch),
        );
        let decoder = Decoder::new(DecoderConfig { seed: fec_seed, high_water: cfg.fec.high_water });
        let window = cfg.window_bytes();
        Self {
            scheme: cfg.scheme,
            seed: cfg.seed,
            flow_size: cfg.flow.size,
            ack_interval_us: ((cfg.fec.ack_interval * 1e6).round() as u64).max(1),
            sources,
            a_limit: vec![window as u64; n],
            send_log: vec![Vec::new(); n],
            b_buffers: (0..n).map(|_| StreamBuffer::new(window)).collect(),
            b_session: ProxySession::new(0, SessionRole::ServerSide, fec_seed, 0),
            proxy_to_flow: HashMap::new(),
            c_session: ProxySession::new(0, SessionRole::ClientSide, fec_seed, 0),
            sender: TunnelSender { node: snd.0, peer: snd.1, tx, rr: RoundRobin::new(), pump_at: None },
            receiver: TunnelReceiver {
                node: rcv.0,
                peer: rcv.1,
                rx: TransportReceiver::new(decoder),
                reorder: BTreeMap::new(),
                next_id: 0,
            },
            to_d: VecDeque::new(),
            d_cache,
            d_keys,
            sinks: HashMap::new(),
            timeline: Vec::new(),
            completion_us: vec![None; n],
            verified_plaintext: vec![0; n],
            samples: Vec::new(),
            opacity: OpacityScan::default(),
            opacity_scan,
            ticks: 0,
            done: 0,
        }
    }

    pub fn start(&mut self, sim: &mut Simulator) {
        sim.set_timer(Node::A, 0, T_START);
        sim.set_timer(self.receiver.node, self.ack_interval_us, T_ACK);
    }

    pub fn sender(&self) -> &TransportSender {
        &self.sender.tx
    }

    pub fn receiver(&self) -> &TransportReceiver {
        &self.receiver.rx
    }

    pub fn backpressure_stalls(&self) -> u64 {
        self.b_buffers.iter().map(StreamBuffer::stalls).sum()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bytes held by the proxies: stream buffers, encoder window, decoder
    /// buffers and the store-and-forward gateway.
    pub fn proxy_snapshot(&self, sim: &Simulator) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        if self.scheme == Scheme::Pepspace {
            for b in &self.b_buffers {
                let (x, y) = b.contents();
                out.push([x, y].concat());
            }
            out.extend(self.sender.tx.encoder.window_symbols().map(<[u8]>::to_vec));
            out.extend(self.receiver.rx.decoder.payload_buffers().map(<[u8]>::to_vec));
            out.extend(self.receiver.reorder.values().map(|(p, _)| p.clone()));
        }
        if let Some(gw) = sim.gateway(Node::B, Node::C) {
            out.extend(gw.iter().map(|p| p.payload.clone()));
        }
        out
    }

    fn scan_opacity(&mut self, sim: &Simulator) {
        let needle = PLAINTEXT_MARKER;
        for buf in self.proxy_snapshot(sim) {
            self.opacity.bytes_scanned += buf.len() as u64;
            self.opacity.hits += buf.windows(needle.len()).filter(|w| *w == needle).count() as u64;
        }
        self.opacity.snapshots += 1;
    }

    fn t_send_of(&self, flow: usize, offset: u64) -> u64 {
        let log = &self.send_log[flow];
        let i = log.partition_point(|&(o, _)| o <= offset);
        log[i.saturating_sub(1)].1
    }

    // ---- A ----

    fn a_send(&mut self, sim: &mut Simulator, flow: usize) -> Result<(), RunError> {
        loop {
            let src = &mut self.sources[flow];
            let room = self.a_limit[flow].saturating_sub(src.taken);
            if room == 0 || src.available() == 0 {
                if room == 0 && src.available() > 0 {
                    self.b_buffers[flow].record_stall();
                }
                return Ok(());
            }
            let max = room.min(CHUNK_DATA as u64) as usize;
            let (offset, data) = match src.take(max) {
                Ok(Some(x)) => x,
                Ok(None) => return Ok(()),
                Err(e) => return Err(violation(sim, format!("seal failed: {e}"))),
            };
            self.send_log[flow].push((offset, sim.now()));
            let seg = AccessSegment { stream_id: flow as u64, offset, data };
            sim.send(Node::A, Node::B, seg.to_bytes())?;
        }
    }

    // ---- transport sender (B or A) ----

    fn sender_has_data(&self) -> bool {
        match self.scheme {
            Scheme::Pepspace => self.b_buffers.iter().any(|b| b.buffered() > 0),
            Scheme::RawEndpoint => self.sources.iter().any(|s| s.available() > 0),
        }
    }

    fn schedule_pump(&mut self, sim: &mut Simulator, t: u64) {
        if self.sender.pump_at.map_or(true, |p| p > t) {
            self.sender.pump_at = Some(t);
            sim.set_timer(self.sender.node, t, T_PUMP);
        }
    }

    fn take_chunk(&mut self, sim: &mut Simulator) -> Result<Option<(u64, u64, Vec<u8>)>, RunError> {
        match self.scheme {
            Scheme::Pepspace => {
                let (buffers, map) = (&self.b_buffers, &self.proxy_to_flow);
                let Some(proxy) = self.sender.rr.next_ready(|s| buffers[map[&s]].buffered() > 0) else {
                    return Ok(None);
                };
                let flow = self.proxy_to_flow[&proxy];
                let (offset, data) = self.b_buffers[flow].take(CHUNK_DATA).expect("ready stream");
                let upd = self.b_buffers[flow].advertisement(flow as u64);
                sim.send(Node::B, Node::A, upd.to_bytes().to_vec())?;
                Ok(Some((proxy, offset, data)))
            }
            Scheme::RawEndpoint => {
                let sources = &self.sources;
                let Some(stream) = self.sender.rr.next_ready(|s| sources[s as usize].available() > 0) else {
                    return Ok(None);
                };
                let flow = stream as usize;
                let (offset, data) = self.sources[flow]
                    .take(CHUNK_DATA)
                    .map_err(|e| violation(sim, format!("seal failed: {e}")))?
                    .expect("available stream");
                self.send_log[flow].push((offset, sim.now()));
                Ok(Some((stream, offset, data)))
            }
        }
    }

    fn pump(&mut self, sim: &mut Simulator) -> Result<(), RunError> {
        loop {
            let now = sim.now();
            let next = self.sender.tx.cc.next_send_us();
            if now < next {
                self.schedule_pump(sim, next);
                return Ok(());
            }
            let has_data = self.sender_has_data();
            match self.sender.tx.next_action(now, has_data, MAX_DATAGRAM) {
                SendAction::Source => {
                    let Some((stream_id, offset, data)) = self.take_chunk(sim)? else { return Ok(()) };
                    let chunk = StreamChunk { stream_id, offset, data }.to_bytes();
                    let (_, dg) =
                        self.sender.tx.send_source(now, &chunk).map_err(|e| violation(sim, e.to_string()))?;
                    sim.send(self.sender.node, self.sender.peer, dg)?;
                }
                SendAction::Repair(kind) => {
                    let (_, dg) =
                        self.sender.tx.send_repair(now, kind).map_err(|e| violation(sim, e.to_string()))?;
                    sim.send(self.sender.node, self.sender.peer, dg)?;
                }
                SendAction::Idle => {
                    if let Some(t) = self.sender.tx.tail_round_end() {
                        self.schedule_pump(sim, t.max(now + 1));
                    }
                    return Ok(());
                }
            }
        }
    }

    // ---- transport receiver (C or D) ----

    fn on_tunnel_datagram(&mut self, sim: &mut Simulator, payload: &[u8]) -> Result<(), RunError> {
        let now = sim.now();
        let (ts, dg) = decode_datagram(payload).map_err(|e| violation(sim, e.to_string()))?;
        let Datagram::Fec(frame) = dg else {
            return Err(violation(sim, "ack on the data path"));
        };
        let report = self.receiver.rx.on_frame(ts, frame).map_err(|e| violation(sim, e.to_string()))?;
        for (id, payload) in report.delivered_now {
            if id >= self.receiver.next_id {
                self.receiver.reorder.insert(id, (payload, now));
            }
        }
        while let Some((payload, t_recv)) = self.receiver.reorder.remove(&self.receiver.next_id) {
            self.receiver.next_id += 1;
            let chunk = StreamChunk::from_bytes(&payload).map_err(|e| violation(sim, e.to_string()))?;
            match self.scheme {
                Scheme::Pepspace => {
                    let flow = *self
                        .proxy_to_flow
                        .get(&chunk.stream_id)
                        .ok_or_else(|| violation(sim, format!("unknown proxy stream {}", chunk.stream_id)))?;
                    let access = self
                        .c_session
                        .map_stream(chunk.stream_id)
                        .map_err(|e| violation(sim, e.to_string()))?;
                    self.to_d.push_back(ChunkInFlight {
                        flow,
                        offset: chunk.offset,
                        len: chunk.data.len() as u64,
                        t_send: self.t_send_of(flow, chunk.offset),
                        t_recv,
                        t_fwd: now,
                    });
                    let seg = AccessSegment { stream_id: access, offset: chunk.offset, data: chunk.data };
                    sim.send(Node::C, Node::D, seg.to_bytes())?;
                }
                Scheme::RawEndpoint => {
                    let flow = chunk.stream_id as usize;
                    if flow >= self.sources.len() {
                        return Err(violation(sim, format!("unknown stream {flow}")));
                    }
                    let rec = ChunkInFlight {
                        flow,
                        offset: chunk.offset,
                        len: chunk.data.len() as u64,
                        t_send: self.t_send_of(flow, chunk.offset),
                        t_recv,
                        t_fwd: now,
                    };
                    self.deliver_at_d(sim, chunk.stream_id, chunk.offset, &chunk.data, rec)?;
                }
            }
        }
        Ok(())
    }

    fn on_ack_tick(&mut self, sim: &mut Simulator) -> Result<(), RunError> {
        let now = sim.now();
        if let Some(ack) = self.receiver.rx.make_ack() {
            let dg = encode_datagram(now, &Datagram::Ack(ack));
            sim.send(self.receiver.node, self.receiver.peer, dg)?;
        }
        self.ticks += 1;
        if self.ticks % SAMPLE_EVERY_TICKS == 0 {
            let d = &self.receiver.rx.decoder;
            let e = &self.sender.tx.encoder;
            self.samples.push(Sample {
                t_us: now,
                dw_width: d.dw_width(),
                decoder_buffered: d.buffered_symbols(),
                p_e: e.p_e(),
                redundancy: e.redundancy_ratio(),
                bytes_in_flight: self.sender.tx.cc.bytes_in_flight(),
                gateway_bytes: sim.gateway(Node::B, Node::C).map_or(0, |g| g.bytes()),
            });
            if self.opacity_scan && (self.samples.len() as u64) % OPACITY_EVERY_SAMPLES == 0 {
                self.scan_opacity(sim);
            }
        }
        sim.set_timer(self.receiver.node, now + self.ack_interval_us, T_ACK);
        Ok(())
    }

    // ---- D ----

    fn deliver_at_d(
        &mut self,
        sim: &mut Simulator,
        stream: u64,
        offset: u64,
        data: &[u8],
        rec: ChunkInFlight,
    ) -> Result<(), RunError> {
        let now = sim.now();
        let sink = self.sinks.entry(stream).or_insert_with(FlowSink::new);
        if offset != sink.expected {
            return Err(violation(sim, format!("stream {stream}: expected offset {}, got {offset}", sink.expected)));
        }
        sink.expected += data.len() as u64;
        sink.reader.push(data);
        if sink.rx.is_none() {
            if let Some(id) = sink.reader.header() {
                let flow = *self.d_keys.get(&id).ok_or_else(|| violation(sim, "unknown key id in stream header"))?;
                sink.rx = Some(StreamReceiver::from_header(&self.d_cache, &id).expect("key cached"));
                sink.flow = Some(flow);
                sink.gen = Some(PlaintextGen::new(self.seed, flow, self.flow_size));
            }
        }
        while let Some(block) = sink.reader.next_block().map_err(|e| RunError::Invariant { t_us: now, msg: e.to_string() })? {
            let rx = sink.rx.as_mut().expect("header first");
            let pt = alde::open(&self.d_cache, rx, &block)
                .map_err(|e| RunError::Invariant { t_us: now, msg: format!("stream {stream}: {e}") })?;
            let want = sink.gen.as_mut().and_then(PlaintextGen::next_block);
            if want.as_deref() != Some(pt.as_slice()) {
                return Err(RunError::Invariant { t_us: now, msg: format!("stream {stream}: plaintext mismatch") });
            }
            sink.verified += pt.len() as u64;
        }
        let t_arrive = rec.t_recv + (now - rec.t_fwd);
        self.timeline.push(TimelineRecord {
            flow: rec.flow,
            offset: rec.offset,
            len: rec.len,
            t_send_us: rec.t_send,
            t_arrive_us: t_arrive,
            t_inorder_us: now,
        });
        if let Some(flow) = sink.flow {
            self.verified_plaintext[flow] = sink.verified;
            let total = self.sources[flow].total;
            if sink.expected == total && self.completion_us[flow].is_none() {
                if sink.reader.pending() != 0 || sink.gen.as_mut().and_then(PlaintextGen::next_block).is_some() {
                    return Err(violation(sim, format!("flow {flow}: stream ended with unverified data")));
                }
                self.completion_us[flow] = Some(now);
                self.done += 1;
                if self.done == self.completion_us.len() {
                    sim.stop();
                }
            }
        }
        Ok(())
    }
}

impl Handler for World {
    type Error = RunError;

    fn on_packet(&mut self, sim: &mut Simulator, node: Node, p: Packet) -> Result<(), RunError> {
        match (self.scheme, node) {
            (Scheme::Pepspace, Node::A) => {
                if p.payload.first() != Some(&WINDOW_UPDATE_TYPE) {
                    return Err(violation(sim, "unexpected message at A"));
                }
                let upd = WindowUpdate::from_bytes(&p.payload).map_err(|e| violation(sim, e.to_string()))?;
                let flow = upd.stream_id as usize;
                let prev = self.a_limit[flow];
                self.a_limit[flow] = prev.max(unwrap_limit(prev, upd.limit));
                self.a_send(sim, flow)
            }
            (Scheme::Pepspace, Node::B) if p.src == Node::A => {
                let seg = AccessSegment::from_bytes(&p.payload).map_err(|e| violation(sim, e.to_string()))?;
                let flow = seg.stream_id as usize;
                if flow >= self.b_buffers.len() {
                    return Err(violation(sim, format!("unknown access stream {flow}")));
                }
                let proxy = self.b_session.map_stream(seg.stream_id).map_err(|e| violation(sim, e.to_string()))?;
                self.proxy_to_flow.insert(proxy, flow);
                self.b_buffers[flow].accept(seg.offset, &seg.data).map_err(|e| violation(sim, e.to_string()))?;
                self.sender.rr.add(proxy);
                self.pump(sim)
            }
            (Scheme::Pepspace, Node::B) | (Scheme::RawEndpoint, Node::A) => {
                let (_, dg) = decode_datagram(&p.payload).map_err(|e| violation(sim, e.to_string()))?;
                let Datagram::Ack(ack) = dg else {
                    return Err(violation(sim, "data frame at the sender"));
                };
                self.sender.tx.on_ack(&ack, sim.now());
                self.pump(sim)
            }
            (Scheme::Pepspace, Node::C) | (Scheme::RawEndpoint, Node::D) => self.on_tunnel_datagram(sim, &p.payload),
            (Scheme::Pepspace, Node::D) => {
                if p.payload.first() != Some(&ACCESS_SEGMENT_TYPE) {
                    return Err(violation(sim, "unexpected message at D"));
                }
                let seg = AccessSegment::from_bytes(&p.payload).map_err(|e| violation(sim, e.to_string()))?;
                let rec = self.to_d.pop_front().ok_or_else(|| violation(sim, "untracked segment at D"))?;
                self.deliver_at_d(sim, seg.stream_id, seg.offset, &seg.data, rec)
            }
            (Scheme::RawEndpoint, Node::B) => {
                let to = if p.src == Node::A { Node::C } else { Node::A };
                sim.send(Node::B, to, p.payload)?;
                Ok(())
            }
            (Scheme::RawEndpoint, Node::C) => {
                let to = if p.src == Node::B { Node::D } else { Node::B };
                sim.send(Node::C, to, p.payload)?;
                Ok(())
            }
        }
    }

    fn on_timer(&mut self, sim: &mut Simulator, _node: Node, token: u64) -> Result<(), RunError> {
        match token {
            T_START => match self.scheme {
                Scheme::Pepspace => {
                    for flow in 0..self.sources.len() {
                        self.a_send(sim, flow)?;
                    }
                    Ok(())
                }
                Scheme::RawEndpoint => {
                    for flow in 0..self.sources.len() {
                        self.sender.rr.add(flow as u64);
                    }
                    self.pump(sim)
                }
            },
            T_PUMP => {
                if self.sender.pump_at == Some(sim.now()) {
                    self.sender.pump_at = None;
                    self.pump(sim)?;
                }
                Ok(())
            }
            _ => self.on_ack_tick(sim),
        }
    }
}
