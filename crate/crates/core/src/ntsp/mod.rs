//! Proxy session state: stream mapping, backpressure, store-and-forward, the
//! control wire format and the establishment model.

mod handshake;

pub use handshake::{simulate_establishment, EstablishmentOutcome, HANDSHAKE_MSG_BYTES};

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

pub const SESSION_SETUP_TYPE: u8 = 0x10;
pub const WINDOW_UPDATE_TYPE: u8 = 0x11;
pub const ACCESS_SEGMENT_TYPE: u8 = 0x20;
pub const WINDOW_UPDATE_LEN: usize = 13;
pub const ACCESS_SEGMENT_HEADER_LEN: usize = 19;
pub const STREAM_CHUNK_HEADER_LEN: usize = 18;
pub const DEFAULT_MAX_STREAMS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NtspError {
    #[error("invalid handshake model: {0}")]
    InvalidModel(String),
    #[error("stream map full ({0} streams)")]
    MapCapacity(usize),
    #[error("store-and-forward buffer full: {bytes} + {incoming} bytes exceeds {capacity}")]
    BufferFull { bytes: usize, incoming: usize, capacity: usize },
    #[error("{len} bytes exceed the advertised window ({room} bytes free)")]
    WindowExceeded { len: usize, room: usize },
    #[error("out-of-order segment: expected offset {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("establishment failed: {0}")]
    Handshake(String),
    #[error("malformed message: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeMode {
    OneRtt,
    ZeroRtt,
}

/// One-way delays in seconds: client↔server, client↔proxy, proxy↔proxy,
/// proxy↔server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandshakeModel {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub mode: HandshakeMode,
}

impl HandshakeModel {
    /// Proxies on the direct path: d0 = d1 + d2 + d3.
    pub fn on_path(d1: f64, d2: f64, d3: f64, mode: HandshakeMode) -> Self {
        Self { d0: d1 + d2 + d3, d1, d2, d3, mode }
    }

    pub fn validate(&self) -> Result<(), NtspError> {
        for (name, d) in [("d0", self.d0), ("d1", self.d1), ("d2", self.d2), ("d3", self.d3)] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(NtspError::InvalidModel(format!("{name} = {d}")));
            }
        }
        Ok(())
    }
}

/// Time before the client can send its first encrypted byte.
pub fn handshake_latency(model: &HandshakeModel) -> Result<f64, NtspError> {
    model.validate()?;
    Ok(match model.mode {
        HandshakeMode::OneRtt => (2.0 * model.d0).max(2.0 * model.d1 + model.d2 + 2.0 * model.d3),
        HandshakeMode::ZeroRtt => 0.0,
    })
}

/// Bijection between access stream ids and proxy stream ids.
#[derive(Debug, Clone, Default)]
pub struct StreamMap {
    forward: HashMap<u64, u64>,
    reverse: HashMap<u64, u64>,
    next: u64,
    capacity: usize,
}

impl StreamMap {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, ..Default::default() }
    }

    /// Returns the proxy stream for `access`, allocating one on first sight.
    pub fn map(&mut self, access: u64) -> Result<u64, NtspError> {
        if let Some(&p) = self.forward.get(&access) {
            return Ok(p);
        }
        if self.forward.len() >= self.capacity {
            return Err(NtspError::MapCapacity(self.capacity));
        }
        let p = self.next;
        self.next += 1;
        self.forward.insert(access, p);
        self.reverse.insert(p, access);
        Ok(p)
    }

    pub fn proxy_of(&self, access: u64) -> Option<u64> {
        self.forward.get(&access).copied()
    }

    pub fn access_of(&self, proxy: u64) -> Option<u64> {
        self.reverse.get(&proxy).copied()
    }

    /// Removes the mapping; proxy ids are never reused.
    pub fn close(&mut self, access: u64) -> Option<u64> {
        let p = self.forward.remove(&access)?;
        self.reverse.remove(&p);
        Some(p)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        self.forward.len() == self.reverse.len() && self.forward.iter().all(|(a, p)| self.reverse.get(p) == Some(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionRole {
    ClientSide,
    ServerSide,
}

#[derive(Debug, Clone)]
pub struct ProxySession {
    pub session_id: u64,
    pub role: SessionRole,
    pub seed: u64,
    /// Microseconds.
    pub established_at: u64,
    pub streams: StreamMap,
}

impl ProxySession {
    pub fn new(session_id: u64, role: SessionRole, seed: u64, established_at: u64) -> Self {
        Self { session_id, role, seed, established_at, streams: StreamMap::new(DEFAULT_MAX_STREAMS) }
    }

    pub fn map_stream(&mut self, access: u64) -> Result<u64, NtspError> {
        self.streams.map(access)
    }
}

/// Sessions keyed by target address. Establishing towards a target that already
/// has a session reuses it and only opens a new stream.
#[derive(Debug, Default)]
pub struct SessionTable {
    sessions: HashMap<Vec<u8>, ProxySession>,
    next_id: u64,
}

impl SessionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the session, the proxy stream for `access_stream`, and whether
    /// the session already existed.
    pub fn establish(
        &mut self,
        target: &[u8],
        role: SessionRole,
        seed: u64,
        now_us: u64,
        access_stream: u64,
    ) -> Result<(&mut ProxySession, u64, bool), NtspError> {
        let reused = self.sessions.contains_key(target);
        if !reused {
            let id = self.next_id;
            self.next_id += 1;
            self.sessions.insert(target.to_vec(), ProxySession::new(id, role, seed, now_us));
        }
        let s = self.sessions.get_mut(target).expect("inserted above");
        let p = s.map_stream(access_stream)?;
        Ok((s, p, reused))
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

/// FIFO holding packets while the egress link is down.
#[derive(Debug, Clone)]
pub struct StoreForwardBuffer<T> {
    queue: VecDeque<(T, usize, u64)>,
    bytes: usize,
    capacity: usize,
    high_water: usize,
}

impl<T> StoreForwardBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self { queue: VecDeque::new(), bytes: 0, capacity, high_water: 0 }
    }

    pub fn push(&mut self, item: T, bytes: usize, now_us: u64) -> Result<(), NtspError> {
        if self.bytes + bytes > self.capacity {
            return Err(NtspError::BufferFull { bytes: self.bytes, incoming: bytes, capacity: self.capacity });
        }
        self.queue.push_back((item, bytes, now_us));
        self.bytes += bytes;
        self.high_water = self.high_water.max(self.bytes);
        Ok(())
    }

    /// Oldest item and its enqueue time.
    pub fn pop(&mut self) -> Option<(T, u64)> {
        let (item, bytes, t) = self.queue.pop_front()?;
        self.bytes -= bytes;
        Some((item, t))
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.queue.iter().map(|(item, _, _)| item)
    }
}

/// Per-stream backpressure buffer at the ingress proxy.
///
/// Bytes are acknowledged locally on receipt. The advertised limit is
/// `consumed + window`, so the window only advances as the proxy transport
/// takes bytes out.
#[derive(Debug, Clone)]
pub struct StreamBuffer {
    data: VecDeque<u8>,
    window: usize,
    received: u64,
    consumed: u64,
    stalls: u64,
    finished: bool,
}

impl StreamBuffer {
    pub fn new(window: usize) -> Self {
        Self { data: VecDeque::with_capacity(window), window, received: 0, consumed: 0, stalls: 0, finished: false }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn room(&self) -> usize {
        self.window - self.data.len()
    }

    pub fn buffered(&self) -> usize {
        self.data.len()
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    /// Absolute stream offset up to which the sender may write.
    pub fn limit(&self) -> u64 {
        self.consumed + self.window as u64
    }

    pub fn advertisement(&self, stream_id: u64) -> WindowUpdate {
        WindowUpdate { stream_id, limit: self.limit() as u32 }
    }

    pub fn accept(&mut self, offset: u64, bytes: &[u8]) -> Result<(), NtspError> {
        if offset != self.received {
            return Err(NtspError::OutOfOrder { expected: self.received, got: offset });
        }
        if bytes.len() > self.room() {
            return Err(NtspError::WindowExceeded { len: bytes.len(), room: self.room() });
        }
        self.data.extend(bytes);
        self.received += bytes.len() as u64;
        Ok(())
    }

    /// Takes up to `max` bytes; returns their stream offset.
    pub fn take(&mut self, max: usize) -> Option<(u64, Vec<u8>)> {
        if self.data.is_empty() {
            return None;
        }
        let n = max.min(self.data.len());
        let off = self.consumed;
        let out: Vec<u8> = self.data.drain(..n).collect();
        self.consumed += n as u64;
        Some((off, out))
    }

    /// Counts a sender stall on a full window.
    pub fn record_stall(&mut self) {
        self.stalls += 1;
    }

    pub fn stalls(&self) -> u64 {
        self.stalls
    }

    pub fn finish(&mut self) {
        self.finished = true;
    }

    pub fn is_finished(&self) -> bool {
        self.finished && self.data.is_empty()
    }

    /// Raw buffered bytes, for inspection.
    pub fn contents(&self) -> (&[u8], &[u8]) {
        self.data.as_slices()
    }
}

/// Sender-side view of a peer's window: reconstructs the 64-bit limit from the
/// 32-bit wire value.
pub fn unwrap_limit(previous: u64, wire: u32) -> u64 {
    let base = previous & !0xffff_ffff;
    let candidate = base | wire as u64;
    if candidate + (1 << 31) < previous {
        candidate + (1 << 32)
    } else if candidate > previous + (1 << 31) && candidate >= 1 << 32 {
        candidate - (1 << 32)
    } else {
        candidate
    }
}

/// Round-robin over active streams.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    order: VecDeque<u64>,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, stream: u64) {
        if !self.order.contains(&stream) {
            self.order.push_back(stream);
        }
    }

    pub fn remove(&mut self, stream: u64) {
        self.order.retain(|&s| s != stream);
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Next stream with `ready(stream)` true, rotating it to the back.
    pub fn next_ready(&mut self, mut ready: impl FnMut(u64) -> bool) -> Option<u64> {
        for _ in 0..self.order.len() {
            let s = self.order.pop_front()?;
            self.order.push_back(s);
            if ready(s) {
                return Some(s);
            }
        }
        None
    }
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_be_bytes(b[at..at + 8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSetup {
    pub session_id: u64,
    pub seed: u64,
    pub target: Vec<u8>,
}

impl SessionSetup {
    pub fn to_bytes(&self) -> Result<Vec<u8>, NtspError> {
        let len = u8::try_from(self.target.len()).map_err(|_| NtspError::Malformed("target address too long"))?;
        let mut out = Vec::with_capacity(18 + self.target.len());
        out.push(SESSION_SETUP_TYPE);
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&self.seed.to_be_bytes());
        out.push(len);
        out.extend_from_slice(&self.target);
        Ok(out)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, NtspError> {
        if b.len() < 18 || b[0] != SESSION_SETUP_TYPE {
            return Err(NtspError::Malformed("session setup"));
        }
        let n = b[17] as usize;
        if b.len() != 18 + n {
            return Err(NtspError::Malformed("session setup length"));
        }
        Ok(Self { session_id: u64_at(b, 1), seed: u64_at(b, 9), target: b[18..].to_vec() })
    }
}

/// Window advertisement. `limit` is the absolute stream offset the sender may
/// write up to, modulo 2^32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowUpdate {
    pub stream_id: u64,
    pub limit: u32,
}

impl WindowUpdate {
    pub fn to_bytes(&self) -> [u8; WINDOW_UPDATE_LEN] {
        let mut out = [0u8; WINDOW_UPDATE_LEN];
        out[0] = WINDOW_UPDATE_TYPE;
        out[1..9].copy_from_slice(&self.stream_id.to_be_bytes());
        out[9..13].copy_from_slice(&self.limit.to_be_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, NtspError> {
        if b.len() != WINDOW_UPDATE_LEN || b[0] != WINDOW_UPDATE_TYPE {
            return Err(NtspError::Malformed("window update"));
        }
        Ok(Self { stream_id: u64_at(b, 1), limit: u32::from_be_bytes(b[9..13].try_into().unwrap()) })
    }
}

/// Access-side stream data: `[0x20][stream_id:8][offset:8][len:2][data]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessSegment {
    pub stream_id: u64,
    pub offset: u64,
    pub data: Vec<u8>,
}

impl AccessSegment {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ACCESS_SEGMENT_HEADER_LEN + self.data.len());
        out.push(ACCESS_SEGMENT_TYPE);
        out.extend_from_slice(&self.stream_id.to_be_bytes());
        out.extend_from_slice(&self.offset.to_be_bytes());
        out.extend_from_slice(&(self.data.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, NtspError> {
        if b.len() < ACCESS_SEGMENT_HEADER_LEN || b[0] != ACCESS_SEGMENT_TYPE {
            return Err(NtspError::Malformed("access segment"));
        }
        let n = u16::from_be_bytes([b[17], b[18]]) as usize;
        if b.len() != ACCESS_SEGMENT_HEADER_LEN + n {
            return Err(NtspError::Malformed("access segment length"));
        }
        Ok(Self { stream_id: u64_at(b, 1), offset: u64_at(b, 9), data: b[19..].to_vec() })
    }
}

/// Proxy-tunnel stream data carried as an FEC source payload:
/// `[stream_id:8][offset:8][len:2][data]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamChunk {
    pub stream_id: u64,
    pub offset: u64,
    pub data: Vec<u8>,
}

impl StreamChunk {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(STREAM_CHUNK_HEADER_LEN + self.data.len());
        out.extend_from_slice(&self.stream_id.to_be_bytes());
        out.extend_from_slice(&self.offset.to_be_bytes());
        out.extend_from_slice(&(self.data.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, NtspError> {
        if b.len() < STREAM_CHUNK_HEADER_LEN {
            return Err(NtspError::Malformed("stream chunk"));
        }
        let n = u16::from_be_bytes([b[16], b[17]]) as usize;
        if b.len() != STREAM_CHUNK_HEADER_LEN + n {
            return Err(NtspError::Malformed("stream chunk length"));
        }
        Ok(Self { stream_id: u64_at(b, 0), offset: u64_at(b, 8), data: b[18..].to_vec() })
    }
}
