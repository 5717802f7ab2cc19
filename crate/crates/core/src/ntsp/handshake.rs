//! Message-level simulation of session establishment over the A–B–C–D chain.
//!
//! The client is D and the server is A; C is the client-side proxy and B the
//! server-side proxy. Connection #1 runs end to end (D↔A) and yields the ALDE
//! key. Connection #2 is D↔C; its first flight carries the target address, and
//! C immediately forwards a session setup to B over the existing tunnel
//! (connection #3). B then opens connection #4 to A. Unanswered control
//! messages are retransmitted after 1.5 segment round trips.

use crate::alde::{self, BlockReader, KeyCache, StreamReceiver, StreamSubkey};
use crate::netsim::{LinkSpec, Node, NullTrace, Packet, SimError, Simulator};

use super::{
    AccessSegment, HandshakeMode, NtspError, SessionRole, SessionSetup, SessionTable, ACCESS_SEGMENT_TYPE,
    SESSION_SETUP_TYPE,
};

pub const HANDSHAKE_MSG_BYTES: usize = 256;

const HELLO: u8 = 0x01;
const REPLY: u8 = 0x02;
const SETUP_ACK: u8 = 0x12;
const CLIENT_STREAM: u64 = 0;
const TARGET: &[u8] = b"server.a:443";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstablishmentOutcome {
    /// Client holds the fresh ALDE key (connection #1 complete).
    pub client_key_us: u64,
    /// Connection #2 complete at the client.
    pub access_ready_us: u64,
    /// Session setup received by the server-side proxy.
    pub setup_at_server_proxy_us: u64,
    /// Connection #4 complete at the server-side proxy.
    pub chain_ready_us: u64,
    /// First encrypted application byte leaves the client.
    pub first_data_us: u64,
    /// 0-RTT only: the key-switch block leaves the client.
    pub key_switch_us: Option<u64>,
    /// Time until both the client may send and the proxy chain is up, seconds.
    pub latency_s: f64,
    /// Plaintexts opened by the server, with arrival times.
    pub delivered: Vec<(u64, Vec<u8>)>,
    pub retransmissions: u64,
    pub client_proxy_streams: usize,
}

struct Establish {
    mode: HandshakeMode,
    rto_us: [u64; 5],
    done: [bool; 5],
    setup_sent: bool,
    conn4_started: bool,
    setup: SessionSetup,
    fresh_secret: Vec<u8>,
    client_key: Option<StreamSubkey>,
    data_sent: bool,
    client_offset: u64,
    server_cache: KeyCache,
    server_reader: BlockReader,
    server_rx: Option<StreamReceiver>,
    server_offset: u64,
    proxy_c: SessionTable,
    proxy_b: SessionTable,
    out: EstablishmentOutcome,
}

#[derive(Debug, thiserror::Error)]
enum HsError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ntsp(#[from] NtspError),
    #[error(transparent)]
    Alde(#[from] alde::AldeError),
}

fn control(kind: u8, conn: u8, dst: Node) -> Vec<u8> {
    let mut v = vec![0u8; HANDSHAKE_MSG_BYTES];
    v[0] = kind;
    v[1] = conn;
    v[2] = dst.index() as u8;
    v
}

fn destination(p: &[u8]) -> Option<Node> {
    match *p.first()? {
        HELLO | REPLY => Node::ALL.get(*p.get(2)? as usize).copied(),
        SESSION_SETUP_TYPE => Some(Node::B),
        SETUP_ACK => Some(Node::C),
        ACCESS_SEGMENT_TYPE => Some(Node::A),
        _ => None,
    }
}

fn next_hop(at: Node, dst: Node) -> Node {
    Node::ALL[if dst.index() < at.index() { at.index() - 1 } else { at.index() + 1 }]
}

impl Establish {
    fn hello(&self, conn: u8) -> (Node, Vec<u8>) {
        match conn {
            1 => (Node::D, control(HELLO, 1, Node::A)),
            2 => (Node::D, control(HELLO, 2, Node::C)),
            3 => (Node::C, self.setup.to_bytes().expect("short target")),
            _ => (Node::B, control(HELLO, 4, Node::A)),
        }
    }

    fn send_to(&self, sim: &mut Simulator, from: Node, payload: Vec<u8>) -> Result<(), SimError> {
        let dst = destination(&payload).expect("well-formed control message");
        sim.send(from, next_hop(from, dst), payload).map(|_| ())
    }

    fn open_conn(&mut self, sim: &mut Simulator, conn: u8) -> Result<(), SimError> {
        let (from, msg) = self.hello(conn);
        self.send_to(sim, from, msg)?;
        sim.set_timer(from, sim.now() + self.rto_us[conn as usize], conn as u64);
        Ok(())
    }

    fn send_data(&mut self, sim: &mut Simulator, bytes: Vec<u8>) -> Result<(), SimError> {
        let seg = AccessSegment { stream_id: CLIENT_STREAM, offset: self.client_offset, data: bytes };
        self.client_offset += seg.data.len() as u64;
        self.send_to(sim, Node::D, seg.to_bytes())
    }

    fn start(&mut self, sim: &mut Simulator, resumption: &[u8]) -> Result<(), HsError> {
        self.open_conn(sim, 1)?;
        self.open_conn(sim, 2)?;
        if self.mode == HandshakeMode::ZeroRtt {
            let master = alde::derive_master(resumption, alde::DEFAULT_LABEL)?;
            let mut sk = alde::derive_subkey(&master, CLIENT_STREAM);
            self.server_cache.insert(&sk);
            let mut bytes = alde::key_id(&sk).0.to_vec();
            alde::seal(&mut sk, b"0-rtt application data", false)?.encode(&mut bytes);
            self.client_key = Some(sk);
            self.send_data(sim, bytes)?;
            self.data_sent = true;
            self.out.first_data_us = sim.now();
        }
        Ok(())
    }

    fn fresh_subkey(&self) -> Result<StreamSubkey, HsError> {
        let master = alde::derive_master(&self.fresh_secret, alde::DEFAULT_LABEL)?;
        Ok(alde::derive_subkey(&master, CLIENT_STREAM))
    }

    fn client_progress(&mut self, sim: &mut Simulator) -> Result<(), HsError> {
        match self.mode {
            HandshakeMode::OneRtt => {
                if self.done[1] && self.done[2] && !self.data_sent {
                    let mut sk = self.fresh_subkey()?;
                    let mut bytes = alde::key_id(&sk).0.to_vec();
                    alde::seal(&mut sk, b"first application data", false)?.encode(&mut bytes);
                    self.client_key = Some(sk);
                    self.send_data(sim, bytes)?;
                    self.data_sent = true;
                    self.out.first_data_us = sim.now();
                }
            }
            HandshakeMode::ZeroRtt => {
                if self.done[1] && self.out.key_switch_us.is_none() {
                    let next = self.fresh_subkey()?;
                    let sk = self.client_key.as_mut().expect("0-RTT key set at start");
                    let mut bytes = Vec::new();
                    alde::seal_key_switch(sk, next, b"key switch")?.encode(&mut bytes);
                    alde::seal(sk, b"after key switch", false)?.encode(&mut bytes);
                    self.send_data(sim, bytes)?;
                    self.out.key_switch_us = Some(sim.now());
                }
            }
        }
        Ok(())
    }

    fn server_data(&mut self, now: u64, seg: AccessSegment) -> Result<(), HsError> {
        if seg.offset != self.server_offset {
            return Err(NtspError::OutOfOrder { expected: self.server_offset, got: seg.offset }.into());
        }
        self.server_offset += seg.data.len() as u64;
        self.server_reader.push(&seg.data);
        if self.server_rx.is_none() {
            if let Some(id) = self.server_reader.header() {
                self.server_rx = Some(StreamReceiver::from_header(&self.server_cache, &id)?);
            }
        }
        while let Some(block) = self.server_reader.next_block()? {
            let rx = self.server_rx.as_mut().expect("header parsed before blocks");
            let pt = alde::open(&self.server_cache, rx, &block)?;
            self.out.delivered.push((now, pt));
        }
        Ok(())
    }

    fn handle(&mut self, sim: &mut Simulator, node: Node, p: Packet) -> Result<(), HsError> {
        let dst = destination(&p.payload).ok_or(NtspError::Malformed("unknown control message"))?;
        if dst != node {
            sim.send(node, next_hop(node, dst), p.payload)?;
            return Ok(());
        }
        let now = sim.now();
        match (node, p.payload[0], p.payload.get(1).copied().unwrap_or(0)) {
            (Node::A, HELLO, 1) => {
                let sk = self.fresh_subkey()?;
                self.server_cache.insert(&sk);
                self.send_to(sim, Node::A, control(REPLY, 1, Node::D))?;
            }
            (Node::D, REPLY, 1) if !self.done[1] => {
                self.done[1] = true;
                self.out.client_key_us = now;
                self.client_progress(sim)?;
            }
            (Node::C, HELLO, 2) => {
                self.send_to(sim, Node::C, control(REPLY, 2, Node::D))?;
                if !self.setup_sent {
                    self.setup_sent = true;
                    let (s, _, _) =
                        self.proxy_c.establish(TARGET, SessionRole::ClientSide, self.setup.seed, now, CLIENT_STREAM)?;
                    self.setup.session_id = s.session_id;
                    self.out.client_proxy_streams = s.streams.len();
                    self.open_conn(sim, 3)?;
                }
            }
            (Node::D, REPLY, 2) if !self.done[2] => {
                self.done[2] = true;
                self.out.access_ready_us = now;
                self.client_progress(sim)?;
            }
            (Node::B, SESSION_SETUP_TYPE, _) => {
                let setup = SessionSetup::from_bytes(&p.payload)?;
                self.proxy_b.establish(&setup.target, SessionRole::ServerSide, setup.seed, now, CLIENT_STREAM)?;
                let mut ack = vec![SETUP_ACK];
                ack.extend_from_slice(&setup.session_id.to_be_bytes());
                self.send_to(sim, Node::B, ack)?;
                if !self.conn4_started {
                    self.conn4_started = true;
                    self.out.setup_at_server_proxy_us = now;
                    self.open_conn(sim, 4)?;
                }
            }
            (Node::C, SETUP_ACK, _) => self.done[3] = true,
            (Node::A, HELLO, 4) => self.send_to(sim, Node::A, control(REPLY, 4, Node::B))?,
            (Node::B, REPLY, 4) if !self.done[4] => {
                self.done[4] = true;
                self.out.chain_ready_us = now;
            }
            (Node::A, ACCESS_SEGMENT_TYPE, _) => {
                let seg = AccessSegment::from_bytes(&p.payload)?;
                self.server_data(now, seg)?;
            }
            _ => {}
        }
        Ok(())
    }
}

impl crate::netsim::Handler for Establish {
    type Error = HsError;

    fn on_packet(&mut self, sim: &mut Simulator, node: Node, packet: Packet) -> Result<(), HsError> {
        self.handle(sim, node, packet)
    }

    fn on_timer(&mut self, sim: &mut Simulator, _: Node, token: u64) -> Result<(), HsError> {
        let conn = token as u8;
        if !self.done[conn as usize] {
            self.out.retransmissions += 1;
            self.open_conn(sim, conn)?;
        }
        Ok(())
    }
}

fn owd(sim: &Simulator, from: Node, to: Node) -> Result<u64, SimError> {
    Ok(sim.link_spec(from, to)?.owd_us)
}

/// Runs establishment in `mode` and returns the milestone times.
///
/// `exporter_secret` stands in for connection #1's key exchange and
/// `resumption_secret` for the ticket of an earlier session (0-RTT only).
pub fn simulate_establishment(
    links: Vec<LinkSpec>,
    mode: HandshakeMode,
    seed: u64,
    exporter_secret: &[u8],
    resumption_secret: &[u8],
) -> Result<EstablishmentOutcome, NtspError> {
    let run = || -> Result<EstablishmentOutcome, HsError> {
        let mut sim = Simulator::new(links, seed, Box::new(NullTrace))?;
        let d1 = owd(&sim, Node::D, Node::C)? + owd(&sim, Node::C, Node::D)?;
        let d2 = owd(&sim, Node::C, Node::B)? + owd(&sim, Node::B, Node::C)?;
        let d3 = owd(&sim, Node::B, Node::A)? + owd(&sim, Node::A, Node::B)?;
        let rto = |rtt: u64| rtt + rtt / 2 + 10_000;
        let mut h = Establish {
            mode,
            rto_us: [0, rto(d1 + d2 + d3), rto(d1), rto(d2), rto(d3)],
            done: [false; 5],
            setup_sent: false,
            conn4_started: false,
            setup: SessionSetup { session_id: 0, seed, target: TARGET.to_vec() },
            fresh_secret: exporter_secret.to_vec(),
            client_key: None,
            data_sent: false,
            client_offset: 0,
            server_cache: KeyCache::new(),
            server_reader: BlockReader::new(),
            server_rx: None,
            server_offset: 0,
            proxy_c: SessionTable::new(),
            proxy_b: SessionTable::new(),
            out: EstablishmentOutcome::default(),
        };
        h.start(&mut sim, resumption_secret)?;
        sim.run(&mut h, None)?;
        let mut out = h.out;
        out.latency_s = match mode {
            HandshakeMode::OneRtt => out.first_data_us.max(out.chain_ready_us) as f64 / 1e6,
            HandshakeMode::ZeroRtt => out.first_data_us as f64 / 1e6,
        };
        Ok(out)
    };
    run().map_err(|e| match e {
        HsError::Ntsp(e) => e,
        other => NtspError::Handshake(other.to_string()),
    })
}
