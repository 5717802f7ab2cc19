//! Proxy-to-proxy transport policy.
//!
//! The congestion window is the bandwidth-delay product of the scheduled link
//! and sends are paced at the scheduled rate. The receiver returns cumulative
//! acknowledgments with frame counts, from which the sender keeps an EWMA loss
//! estimate that drives the FEC repair ratio.
//!
//! Datagrams on the proxy link are `[send_ts_us:8][frame]` where the frame is a
//! FEC SOURCE/REPAIR frame (sender to receiver) or an [`AckFrame`].

use std::collections::VecDeque;

use thiserror::Error;

use crate::fec::{Decoder, DeliveryReport, Encoder, FecError, Frame, RepairDecision, RepairFrame, SourceFrame};

pub const ACK_TYPE: u8 = 0x03;
pub const ACK_FRAME_LEN: usize = 1 + 8 + 4 + 4 + 8;
pub const DATAGRAM_HEADER_LEN: usize = 8;
pub const DEFAULT_PACKET_SIZE: usize = 1500;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_LOSS_BATCH: u32 = 2000;
pub const MIN_CWND_PACKETS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("malformed datagram: {0}")]
    Malformed(String),
    #[error(transparent)]
    Fec(#[from] FecError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConfig {
    /// Scheduled link capacity, bits/s.
    pub scheduled_bandwidth: f64,
    /// Minimum RTT, seconds.
    pub min_rtt: f64,
    /// Packet size used for the window floor and nominal pacing, bytes.
    pub packet_size: usize,
}

impl RateConfig {
    pub fn new(scheduled_bandwidth: f64, min_rtt: f64) -> Self {
        Self { scheduled_bandwidth, min_rtt, packet_size: DEFAULT_PACKET_SIZE }
    }

    fn validate(&self) -> Result<(), TransportError> {
        if !(self.scheduled_bandwidth > 0.0) {
            return Err(TransportError::NonPositive("scheduled_bandwidth"));
        }
        if !(self.min_rtt > 0.0) {
            return Err(TransportError::NonPositive("min_rtt"));
        }
        if self.packet_size == 0 {
            return Err(TransportError::NonPositive("packet_size"));
        }
        Ok(())
    }
}

/// Unfloored BDP in bytes.
pub fn bdp_bytes(cfg: &RateConfig) -> f64 {
    cfg.scheduled_bandwidth * cfg.min_rtt / 8.0
}

/// Congestion window in bytes: the BDP rounded to the nearest byte, floored at
/// [`MIN_CWND_PACKETS`] packets.
pub fn compute_cwnd(cfg: &RateConfig) -> Result<u64, TransportError> {
    cfg.validate()?;
    let floor = MIN_CWND_PACKETS * cfg.packet_size as u64;
    Ok((bdp_bytes(cfg).round() as u64).max(floor))
}

/// Time to put `bytes` on a link of `bandwidth` bits/s, rounded up to whole μs.
pub fn serialization_us(bytes: usize, bandwidth: f64) -> u64 {
    (bytes as f64 * 8.0 * 1e6 / bandwidth).ceil() as u64
}

/// Nominal pacing interval for one `packet_size` packet, seconds.
pub fn pacing_interval(cfg: &RateConfig) -> f64 {
    cfg.packet_size as f64 * 8.0 / cfg.scheduled_bandwidth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckFrame {
    /// Highest in-order source id at the receiver, `None` before the first.
    pub cumulative_source_id: Option<u64>,
    pub frames_received_delta: u32,
    pub frames_expected_delta: u32,
    /// Send timestamp of the newest frame the receiver has seen, μs.
    pub echo_timestamp_us: u64,
}

impl AckFrame {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(ACK_TYPE);
        out.extend_from_slice(&self.cumulative_source_id.unwrap_or(u64::MAX).to_be_bytes());
        out.extend_from_slice(&self.frames_received_delta.to_be_bytes());
        out.extend_from_slice(&self.frames_expected_delta.to_be_bytes());
        out.extend_from_slice(&self.echo_timestamp_us.to_be_bytes());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(ACK_FRAME_LEN);
        self.encode(&mut v);
        v
    }

    pub fn decode(buf: &[u8]) -> Result<AckFrame, TransportError> {
        if buf.len() != ACK_FRAME_LEN || buf[0] != ACK_TYPE {
            return Err(TransportError::Malformed("not an ACK frame".into()));
        }
        let cum = u64::from_be_bytes(buf[1..9].try_into().unwrap());
        let recv = u32::from_be_bytes(buf[9..13].try_into().unwrap());
        let exp = u32::from_be_bytes(buf[13..17].try_into().unwrap());
        if recv > exp {
            return Err(TransportError::Malformed("received delta exceeds expected delta".into()));
        }
        Ok(AckFrame {
            cumulative_source_id: (cum != u64::MAX).then_some(cum),
            frames_received_delta: recv,
            frames_expected_delta: exp,
            echo_timestamp_us: u64::from_be_bytes(buf[17..25].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Datagram {
    Fec(Frame),
    Ack(AckFrame),
}

pub fn encode_datagram(send_ts_us: u64, body: &Datagram) -> Vec<u8> {
    let mut out = send_ts_us.to_be_bytes().to_vec();
    match body {
        Datagram::Fec(f) => out.extend_from_slice(&f.to_bytes()),
        Datagram::Ack(a) => a.encode(&mut out),
    }
    out
}

pub fn decode_datagram(buf: &[u8]) -> Result<(u64, Datagram), TransportError> {
    if buf.len() <= DATAGRAM_HEADER_LEN {
        return Err(TransportError::Malformed("short datagram".into()));
    }
    let ts = u64::from_be_bytes(buf[..8].try_into().unwrap());
    let body = &buf[8..];
    if body[0] == ACK_TYPE {
        Ok((ts, Datagram::Ack(AckFrame::decode(body)?)))
    } else {
        Ok((ts, Datagram::Fec(Frame::decode(body)?)))
    }
}

/// EWMA loss estimator. Ack deltas are pooled until at least `min_batch`
/// frames were expected, then folded in as one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimator {
    pub p_e: f64,
    pub alpha: f64,
    pub min_batch: u32,
    pooled_received: u64,
    pooled_expected: u64,
}

impl LossEstimator {
    pub fn new(initial: f64, alpha: f64) -> Self {
        Self::with_batch(initial, alpha, 1)
    }

    pub fn with_batch(initial: f64, alpha: f64, min_batch: u32) -> Self {
        Self { p_e: initial.clamp(0.0, 1.0), alpha, min_batch: min_batch.max(1), pooled_received: 0, pooled_expected: 0 }
    }

    /// Pools the ack's counters and takes one EWMA step once the batch is
    /// full. Acks with no expected frames leave the estimate unchanged.
    pub fn update(&mut self, ack: &AckFrame) -> f64 {
        self.pooled_received += u64::from(ack.frames_received_delta.min(ack.frames_expected_delta));
        self.pooled_expected += u64::from(ack.frames_expected_delta);
        if self.pooled_expected > 0 && self.pooled_expected >= u64::from(self.min_batch) {
            let sample = 1.0 - self.pooled_received as f64 / self.pooled_expected as f64;
            self.p_e = ((1.0 - self.alpha) * self.p_e + self.alpha * sample).clamp(0.0, 1.0);
            self.pooled_received = 0;
            self.pooled_expected = 0;
        }
        self.p_e
    }
}

#[derive(Debug, Clone)]
pub struct CongestionState {
    bandwidth: f64,
    packet_size: usize,
    min_rtt_us: u64,
    cwnd: u64,
    bytes_in_flight: u64,
    /// Earliest time the pacer admits the next packet.
    next_send_us: u64,
    in_flight: VecDeque<(u64, u64)>,
}

impl CongestionState {
    pub fn new(cfg: &RateConfig) -> Result<Self, TransportError> {
        let cwnd = compute_cwnd(cfg)?;
        Ok(Self {
            bandwidth: cfg.scheduled_bandwidth,
            packet_size: cfg.packet_size,
            min_rtt_us: (cfg.min_rtt * 1e6).round() as u64,
            cwnd,
            bytes_in_flight: 0,
            next_send_us: 0,
            in_flight: VecDeque::new(),
        })
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn min_rtt_us(&self) -> u64 {
        self.min_rtt_us
    }

    pub fn next_send_us(&self) -> u64 {
        self.next_send_us
    }

    pub fn window_allows(&self, bytes: usize) -> bool {
        self.bytes_in_flight + bytes as u64 <= self.cwnd
    }

    pub fn can_send(&self, now_us: u64, bytes: usize) -> bool {
        self.window_allows(bytes) && now_us >= self.next_send_us
    }

    /// Records a send. The pacer holds the next packet for this packet's
    /// serialization time at the scheduled rate.
    pub fn on_sent(&mut self, now_us: u64, bytes: usize) {
        self.bytes_in_flight += bytes as u64;
        self.in_flight.push_back((now_us, bytes as u64));
        self.next_send_us = now_us.max(self.next_send_us) + serialization_us(bytes, self.bandwidth);
    }

    /// Frees every packet sent at or before the echoed timestamp and folds the
    /// RTT sample into min_rtt.
    pub fn on_ack(&mut self, ack: &AckFrame, now_us: u64) {
        while let Some(&(ts, bytes)) = self.in_flight.front() {
            if ts > ack.echo_timestamp_us {
                break;
            }
            self.in_flight.pop_front();
            self.bytes_in_flight -= bytes;
        }
        if now_us >= ack.echo_timestamp_us {
            let sample = now_us - ack.echo_timestamp_us;
            if sample > 0 && sample < self.min_rtt_us {
                self.min_rtt_us = sample;
                let cfg = RateConfig {
                    scheduled_bandwidth: self.bandwidth,
                    min_rtt: sample as f64 / 1e6,
                    packet_size: self.packet_size,
                };
                self.cwnd = compute_cwnd(&cfg).expect("validated at construction");
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendAction {
    Source,
    Repair(RepairDecision),
    /// Nothing to send now.
    Idle,
}

/// Sender half of a proxy-to-proxy session: FEC encoder, congestion state,
/// loss estimator and the tail-protection budget.
///
/// Tail repairs are limited to `ceil((p_e + delta) * window) + 1` per round, and
/// a round lasts one min_rtt.
#[derive(Debug, Clone)]
pub struct TransportSender {
    pub encoder: Encoder,
    pub cc: CongestionState,
    pub loss: LossEstimator,
    tail_round_start: Option<u64>,
    tail_sent: u64,
    tail_budget: u64,
}

impl TransportSender {
    pub fn new(encoder: Encoder, cc: CongestionState, loss: LossEstimator) -> Self {
        let mut s = Self { encoder, cc, loss, tail_round_start: None, tail_sent: 0, tail_budget: 0 };
        s.encoder.set_loss_estimate(s.loss.p_e);
        s
    }

    /// What to send at `now`, given whether stream data is waiting and the
    /// size of the next source datagram.
    pub fn next_action(&mut self, now_us: u64, buffer_nonempty: bool, next_source_bytes: usize) -> SendAction {
        let decision = self.encoder.should_send_repair(buffer_nonempty);
        let bytes = match decision {
            RepairDecision::None if !buffer_nonempty => return SendAction::Idle,
            RepairDecision::None => next_source_bytes,
            _ => DATAGRAM_HEADER_LEN + crate::fec::REPAIR_FRAME_LEN,
        };
        if !self.cc.window_allows(bytes) {
            return SendAction::Idle;
        }
        match decision {
            RepairDecision::None => SendAction::Source,
            RepairDecision::Normal => SendAction::Repair(RepairDecision::Normal),
            RepairDecision::TailProtection => {
                let round_over = self.tail_round_start.map_or(true, |t| now_us >= t + self.cc.min_rtt_us());
                if round_over {
                    self.tail_round_start = Some(now_us);
                    self.tail_sent = 0;
                    let w = self.encoder.window_len() as f64;
                    self.tail_budget = ((self.encoder.p_e() + self.encoder.delta()) * w).ceil() as u64 + 1;
                }
                if self.tail_sent < self.tail_budget {
                    SendAction::Repair(RepairDecision::TailProtection)
                } else {
                    SendAction::Idle
                }
            }
        }
    }

    /// When the current tail round ends, if one is exhausted.
    pub fn tail_round_end(&self) -> Option<u64> {
        match self.tail_round_start {
            Some(t) if self.tail_sent >= self.tail_budget => Some(t + self.cc.min_rtt_us()),
            _ => None,
        }
    }

    pub fn send_source(&mut self, now_us: u64, payload: &[u8]) -> Result<(SourceFrame, Vec<u8>), TransportError> {
        let f = self.encoder.encode_source(payload)?;
        let dg = encode_datagram(now_us, &Datagram::Fec(Frame::Source(f.clone())));
        self.cc.on_sent(now_us, dg.len());
        Ok((f, dg))
    }

    pub fn send_repair(&mut self, now_us: u64, kind: RepairDecision) -> Result<(RepairFrame, Vec<u8>), TransportError> {
        let r = self.encoder.make_repair(kind)?;
        if kind == RepairDecision::TailProtection {
            self.tail_sent += 1;
        }
        let dg = encode_datagram(now_us, &Datagram::Fec(Frame::Repair(r.clone())));
        self.cc.on_sent(now_us, dg.len());
        Ok((r, dg))
    }

    pub fn on_ack(&mut self, ack: &AckFrame, now_us: u64) {
        on_transport_ack(&mut self.cc, &mut self.encoder, &mut self.loss, ack, now_us);
    }
}

/// Applies an acknowledgment: frees in-flight bytes, slides the encoding
/// window, updates the loss estimate and min_rtt.
pub fn on_transport_ack(
    cc: &mut CongestionState,
    encoder: &mut Encoder,
    loss: &mut LossEstimator,
    ack: &AckFrame,
    now_us: u64,
) {
    cc.on_ack(ack, now_us);
    if let Some(cum) = ack.cumulative_source_id {
        encoder.on_ack(cum);
    }
    let p = loss.update(ack);
    encoder.set_loss_estimate(p);
}

/// Receiver-side counters for the next acknowledgment. Expected counts come
/// from gaps in source and repair ids.
#[derive(Debug, Clone, Default)]
pub struct FeedbackTracker {
    next_source: u64,
    next_repair: u64,
    acked_expected: u64,
    received: u64,
    acked_received: u64,
    echo_ts: u64,
}

impl FeedbackTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_frame(&mut self, send_ts_us: u64, frame: &Frame) {
        match frame {
            Frame::Source(s) => self.next_source = self.next_source.max(s.id + 1),
            Frame::Repair(r) => self.next_repair = self.next_repair.max(r.repair_id + 1),
        }
        self.received += 1;
        self.echo_ts = self.echo_ts.max(send_ts_us);
    }

    /// Builds an ack if any frame arrived since the previous one.
    pub fn make_ack(&mut self, cumulative: Option<u64>) -> Option<AckFrame> {
        let recv = self.received - self.acked_received;
        if recv == 0 {
            return None;
        }
        let expected_total = self.next_source + self.next_repair;
        let exp = expected_total - self.acked_expected;
        self.acked_expected = expected_total;
        self.acked_received = self.received;
        Some(AckFrame {
            cumulative_source_id: cumulative,
            frames_received_delta: recv.min(exp) as u32,
            frames_expected_delta: exp as u32,
            echo_timestamp_us: self.echo_ts,
        })
    }
}

/// Receiver half of a proxy-to-proxy session.
#[derive(Debug)]
pub struct TransportReceiver {
    pub decoder: Decoder,
    pub feedback: FeedbackTracker,
}

impl TransportReceiver {
    pub fn new(decoder: Decoder) -> Self {
        Self { decoder, feedback: FeedbackTracker::new() }
    }

    pub fn on_frame(&mut self, send_ts_us: u64, frame: Frame) -> Result<DeliveryReport, TransportError> {
        self.feedback.on_frame(send_ts_us, &frame);
        Ok(self.decoder.ingest(frame)?)
    }

    pub fn make_ack(&mut self) -> Option<AckFrame> {
        let i = self.decoder.i_ord();
        self.feedback.make_ack((i >= 0).then_some(i as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fec::{DecoderConfig, EncoderConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn cwnd_examples() {
        let c = compute_cwnd(&RateConfig::new(10e6, 4.02)).unwrap();
        assert_eq!(c, 5_025_000);
        assert_eq!(c / 1500, 3350);
        assert_eq!(compute_cwnd(&RateConfig::new(1.0, 1.0)).unwrap(), 3000);
        let a = compute_cwnd(&RateConfig::new(20e6, 0.5)).unwrap();
        let b = compute_cwnd(&RateConfig::new(40e6, 0.5)).unwrap();
        assert_eq!(b, 2 * a);
        assert!(compute_cwnd(&RateConfig::new(0.0, 1.0)).is_err());
        assert!(compute_cwnd(&RateConfig::new(1e6, -1.0)).is_err());
        assert!((pacing_interval(&RateConfig::new(10e6, 4.02)) - 0.0012).abs() < 1e-12);
    }

    #[test]
    fn ack_wire_format() {
        let a = AckFrame {
            cumulative_source_id: Some(7),
            frames_received_delta: 9,
            frames_expected_delta: 10,
            echo_timestamp_us: 0x0102,
        };
        let b = a.to_bytes();
        assert_eq!(b.len(), ACK_FRAME_LEN);
        assert_eq!(b[0], 0x03);
        assert_eq!(&b[1..9], &7u64.to_be_bytes());
        assert_eq!(&b[9..13], &9u32.to_be_bytes());
        assert_eq!(&b[13..17], &10u32.to_be_bytes());
        assert_eq!(AckFrame::decode(&b).unwrap(), a);
        let none = AckFrame { cumulative_source_id: None, ..a };
        assert_eq!(AckFrame::decode(&none.to_bytes()).unwrap(), none);
        let mut bad = b.clone();
        bad[12] = 11;
        assert!(AckFrame::decode(&bad).is_err());
    }

    #[test]
    fn datagram_roundtrip() {
        let f = Frame::Source(SourceFrame { id: 3, payload: vec![1, 2, 3] });
        let d = encode_datagram(99, &Datagram::Fec(f.clone()));
        assert_eq!(decode_datagram(&d).unwrap(), (99, Datagram::Fec(f)));
        assert!(decode_datagram(&[0; 8]).is_err());
    }

    #[test]
    fn ewma_single_step() {
        let mut e = LossEstimator::new(0.0, 0.1);
        let ack = AckFrame {
            cumulative_source_id: None,
            frames_received_delta: 1,
            frames_expected_delta: 2,
            echo_timestamp_us: 0,
        };
        assert!((e.update(&ack) - 0.05).abs() < 1e-15);
        let empty = AckFrame { frames_received_delta: 0, frames_expected_delta: 0, ..ack };
        assert!((e.update(&empty) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ewma_converges_to_constant_sample() {
        let mut e = LossEstimator::new(0.0, 0.1);
        let ack = AckFrame {
            cumulative_source_id: None,
            frames_received_delta: 99,
            frames_expected_delta: 100,
            echo_timestamp_us: 0,
        };
        for _ in 0..300 {
            e.update(&ack);
        }
        assert!((e.p_e - 0.01).abs() < 1e-9);
        let clean = AckFrame { frames_received_delta: 100, ..ack };
        for _ in 0..300 {
            e.update(&clean);
        }
        assert!(e.p_e < 1e-9);
    }

    #[test]
    fn estimator_tracks_iid_loss() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut e = LossEstimator::new(0.0, DEFAULT_ALPHA);
        let mut sum = 0.0;
        let mut n = 0;
        for batch in 0..1000 {
            let recv = (0..100).filter(|_| !rng.gen_bool(0.01)).count() as u32;
            e.update(&AckFrame {
                cumulative_source_id: None,
                frames_received_delta: recv,
                frames_expected_delta: 100,
                echo_timestamp_us: 0,
            });
            if batch >= 100 {
                sum += e.p_e;
                n += 1;
            }
        }
        assert!((sum / n as f64 - 0.01).abs() <= 0.005);
        assert!((e.p_e - 0.01).abs() <= 0.005);
    }

    #[test]
    fn window_and_pacing_gate_sends() {
        let cfg = RateConfig { scheduled_bandwidth: 8e6, min_rtt: 0.003, packet_size: 1000 };
        let mut cc = CongestionState::new(&cfg).unwrap();
        assert_eq!(cc.cwnd(), 3000);
        assert!(cc.can_send(0, 1000));
        cc.on_sent(0, 1000);
        assert!(!cc.can_send(999, 1000));
        assert!(cc.can_send(1000, 1000));
        cc.on_sent(1000, 1000);
        cc.on_sent(2000, 1000);
        assert!(!cc.can_send(10_000, 1));
        let ack = AckFrame {
            cumulative_source_id: None,
            frames_received_delta: 3,
            frames_expected_delta: 3,
            echo_timestamp_us: 2000,
        };
        cc.on_ack(&ack, 10_000);
        assert_eq!(cc.bytes_in_flight(), 0);
        assert!(cc.can_send(10_000, 1000));
    }

    #[test]
    fn min_rtt_only_decreases() {
        let mut cc = CongestionState::new(&RateConfig::new(10e6, 4.02)).unwrap();
        let ack = |echo| AckFrame {
            cumulative_source_id: None,
            frames_received_delta: 0,
            frames_expected_delta: 0,
            echo_timestamp_us: echo,
        };
        cc.on_ack(&ack(0), 5_000_000);
        assert_eq!(cc.min_rtt_us(), 4_020_000);
        cc.on_ack(&ack(1_000_000), 5_000_000);
        assert_eq!(cc.min_rtt_us(), 4_000_000);
        assert_eq!(cc.cwnd(), 5_000_000);
        cc.on_ack(&ack(0), 9_000_000);
        assert_eq!(cc.min_rtt_us(), 4_000_000);
    }

    #[test]
    fn paced_rate_stays_under_schedule() {
        let bw = 10e6;
        let mut cc = CongestionState::new(&RateConfig::new(bw, 4.02)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (mut now, mut sent) = (0u64, 0u64);
        while now < 60_000_000 {
            let size = rng.gen_range(40..=1315);
            now = now.max(cc.next_send_us());
            assert!(cc.can_send(now, size));
            cc.on_sent(now, size);
            sent += size as u64;
            // Ack everything immediately so only pacing binds.
            cc.on_ack(
                &AckFrame {
                    cumulative_source_id: None,
                    frames_received_delta: 0,
                    frames_expected_delta: 0,
                    echo_timestamp_us: now,
                },
                now + 5_000_000,
            );
            now += rng.gen_range(0..500);
        }
        let rate = sent as f64 * 8.0 / (now as f64 / 1e6);
        assert!(rate <= bw * 1.01);
        assert!(rate >= bw * 0.9);
    }

    #[test]
    fn ack_slides_encoding_window() {
        let enc = Encoder::new(EncoderConfig { seed: 3, delta: 0.03, initial_pe: 0.0 });
        let cc = CongestionState::new(&RateConfig::new(10e6, 0.1)).unwrap();
        let mut tx = TransportSender::new(enc, cc, LossEstimator::new(0.0, DEFAULT_ALPHA));
        let mut rx = TransportReceiver::new(Decoder::new(DecoderConfig { seed: 3, high_water: 1 << 20 }));
        let mut now = 0;
        for i in 0..10u8 {
            let (_, dg) = tx.send_source(now, &[i; 100]).unwrap();
            let (ts, body) = decode_datagram(&dg).unwrap();
            let Datagram::Fec(f) = body else { panic!() };
            if i != 4 {
                rx.on_frame(ts, f).unwrap();
            }
            now += 1000;
        }
        let r = tx.send_repair(now, RepairDecision::Normal).unwrap().0;
        assert_eq!((r.ew_low, r.ew_high), (0, 9));
        let ack = rx.make_ack().unwrap();
        assert_eq!(ack.cumulative_source_id, Some(3));
        assert_eq!((ack.frames_received_delta, ack.frames_expected_delta), (9, 10));
        tx.on_ack(&ack, now + 100_000);
        assert!((tx.loss.p_e - 0.01).abs() < 1e-12);
        assert!((tx.encoder.p_e() - 0.01).abs() < 1e-12);
        let r = tx.send_repair(now, RepairDecision::Normal).unwrap().0;
        assert_eq!((r.ew_low, r.ew_high), (4, 9));
        assert!(rx.make_ack().is_none());
    }

    #[test]
    fn tail_protection_drains_then_idles() {
        let enc = Encoder::new(EncoderConfig { seed: 8, delta: 0.03, initial_pe: 0.0 });
        let cc = CongestionState::new(&RateConfig::new(10e6, 0.05)).unwrap();
        let mut tx = TransportSender::new(enc, cc, LossEstimator::new(0.0, DEFAULT_ALPHA));
        let mut rx = TransportReceiver::new(Decoder::new(DecoderConfig { seed: 8, high_water: 1 << 20 }));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut in_flight: VecDeque<(u64, Vec<u8>)> = VecDeque::new();
        let mut now = 0u64;
        let mut written = 0;
        let mut tails = 0;
        while now < 5_000_000 {
            while in_flight.front().is_some_and(|(t, _)| *t <= now) {
                let (_, dg) = in_flight.pop_front().unwrap();
                let (ts, Datagram::Fec(f)) = decode_datagram(&dg).unwrap() else { panic!() };
                rx.on_frame(ts, f).unwrap();
            }
            if now % 10_000 == 0 {
                if let Some(a) = rx.make_ack() {
                    tx.on_ack(&a, now + 25_000);
                }
            }
            let pending = written < 200;
            if tx.cc.can_send(now, 1400) {
                let dg = match tx.next_action(now, pending, 1400) {
                    SendAction::Source => {
                        written += 1;
                        Some(tx.send_source(now, &[written as u8; 1200]).unwrap().1)
                    }
                    SendAction::Repair(k) => {
                        if k == RepairDecision::TailProtection {
                            tails += 1;
                        }
                        Some(tx.send_repair(now, k).unwrap().1)
                    }
                    SendAction::Idle => None,
                };
                if let Some(dg) = dg {
                    if !rng.gen_bool(0.05) {
                        in_flight.push_back((now + 25_000, dg));
                    }
                }
            }
            now += 100;
        }
        assert_eq!(written, 200);
        assert!(tails > 0);
        assert!(!tx.encoder.unacked_exist());
        assert_eq!(rx.decoder.i_ord(), 199);
        assert_eq!(tx.next_action(now, false, 1400), SendAction::Idle);
    }

    proptest! {
        #[test]
        fn estimate_stays_in_unit_interval(
            init in 0.0f64..=1.0,
            acks in proptest::collection::vec((0u32..50, 0u32..50), 1..50),
        ) {
            let mut e = LossEstimator::new(init, DEFAULT_ALPHA);
            for (r, x) in acks {
                let p = e.update(&AckFrame {
                    cumulative_source_id: None,
                    frames_received_delta: r.min(x),
                    frames_expected_delta: x,
                    echo_timestamp_us: 0,
                });
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn in_flight_never_exceeds_cwnd(sizes in proptest::collection::vec(1usize..1500, 1..200)) {
            let mut cc = CongestionState::new(&RateConfig { scheduled_bandwidth: 1e6, min_rtt: 0.05, packet_size: 1000 }).unwrap();
            let mut now = 0;
            for s in sizes {
                now = now.max(cc.next_send_us());
                if cc.can_send(now, s) {
                    cc.on_sent(now, s);
                }
                prop_assert!(cc.bytes_in_flight() <= cc.cwnd());
            }
        }
    }
}
