use std::collections::VecDeque;

use super::{coded_symbol, FecError, RepairFrame, SourceFrame, CODED_SYMBOL_LEN, DEFAULT_DELTA};
use crate::galois::{coefficient, mul_acc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairDecision {
    None,
    Normal,
    TailProtection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub seed: u64,
    pub delta: f64,
    /// Loss estimate used before any feedback arrives.
    pub initial_pe: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { seed: 0, delta: DEFAULT_DELTA, initial_pe: 0.0 }
    }
}

/// Repair scheduling rule.
///
/// A normal repair is due while the buffer holds data and the repair ratio
/// `n_repair / (n_source + n_repair)` is below `p_e + delta`, with 0/0 read as 0.
/// A repair can only be built over a nonempty window, so nothing is due before
/// the first source. With an empty buffer and unacknowledged sources, tail
/// protection applies.
pub fn repair_decision(
    n_source: u64,
    n_repair: u64,
    p_e: f64,
    delta: f64,
    send_buffer_nonempty: bool,
    unacked_exist: bool,
) -> RepairDecision {
    if send_buffer_nonempty {
        let total = n_source + n_repair;
        let ratio = if total == 0 { 0.0 } else { n_repair as f64 / total as f64 };
        if unacked_exist && ratio < p_e + delta {
            RepairDecision::Normal
        } else {
            RepairDecision::None
        }
    } else if unacked_exist {
        RepairDecision::TailProtection
    } else {
        RepairDecision::None
    }
}

/// Sender half of the streaming code.
///
/// Holds a coded copy of every source in the encoding window `[w_s, i_seq]`.
#[derive(Debug, Clone)]
pub struct Encoder {
    seed: u64,
    delta: f64,
    p_e: f64,
    p_e_max: f64,
    /// Next source id, i.e. `i_seq + 1`.
    next_id: u64,
    w_s: u64,
    n_source: u64,
    n_repair: u64,
    n_tail: u64,
    next_repair_id: u64,
    window: VecDeque<Vec<u8>>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Self {
        let p_e = cfg.initial_pe.clamp(0.0, 1.0);
        Self {
            seed: cfg.seed,
            delta: cfg.delta,
            p_e,
            p_e_max: p_e,
            next_id: 0,
            w_s: 0,
            n_source: 0,
            n_repair: 0,
            n_tail: 0,
            next_repair_id: 0,
            window: VecDeque::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Coded copies of the sources in the encoding window.
    pub fn window_symbols(&self) -> impl Iterator<Item = &[u8]> {
        self.window.iter().map(|v| v.as_slice())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Last sent source id, `-1` before the first source.
    pub fn i_seq(&self) -> i64 {
        self.next_id as i64 - 1
    }

    pub fn w_s(&self) -> u64 {
        self.w_s
    }

    pub fn n_source(&self) -> u64 {
        self.n_source
    }

    /// Normal repairs sent; tail-protection repairs are counted separately.
    pub fn n_repair(&self) -> u64 {
        self.n_repair
    }

    pub fn n_tail(&self) -> u64 {
        self.n_tail
    }

    pub fn next_repair_id(&self) -> u64 {
        self.next_repair_id
    }

    pub fn p_e(&self) -> f64 {
        self.p_e
    }

    pub fn p_e_max(&self) -> f64 {
        self.p_e_max
    }

    pub fn set_loss_estimate(&mut self, p_e: f64) {
        self.p_e = p_e.clamp(0.0, 1.0);
        self.p_e_max = self.p_e_max.max(self.p_e);
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn unacked_exist(&self) -> bool {
        self.w_s < self.next_id
    }

    pub fn redundancy_ratio(&self) -> f64 {
        let total = self.n_source + self.n_repair;
        if total == 0 {
            0.0
        } else {
            self.n_repair as f64 / total as f64
        }
    }

    pub fn encode_source(&mut self, payload: &[u8]) -> Result<SourceFrame, FecError> {
        let symbol = coded_symbol(payload)?;
        let id = self.next_id;
        self.window.push_back(symbol);
        self.next_id += 1;
        self.n_source += 1;
        Ok(SourceFrame { id, payload: payload.to_vec() })
    }

    pub fn should_send_repair(&self, send_buffer_nonempty: bool) -> RepairDecision {
        repair_decision(self.n_source, self.n_repair, self.p_e, self.delta, send_buffer_nonempty, self.unacked_exist())
    }

    /// Builds a repair over `[w_s, i_seq]`. Only `Normal` repairs count toward N_r.
    pub fn make_repair(&mut self, kind: RepairDecision) -> Result<RepairFrame, FecError> {
        if !self.unacked_exist() {
            return Err(FecError::EmptyWindow);
        }
        let k = self.next_repair_id;
        let mut payload = vec![0u8; CODED_SYMBOL_LEN];
        for (off, symbol) in self.window.iter().enumerate() {
            let i = self.w_s + off as u64;
            mul_acc(&mut payload, symbol, coefficient(self.seed, k, i));
        }
        self.next_repair_id += 1;
        match kind {
            RepairDecision::Normal => self.n_repair += 1,
            RepairDecision::TailProtection => self.n_tail += 1,
            RepairDecision::None => {}
        }
        Ok(RepairFrame { repair_id: k, ew_low: self.w_s, ew_high: self.next_id - 1, payload })
    }

    /// Slides the window past `cumulative_acked`. Regressing acks are ignored.
    pub fn on_ack(&mut self, cumulative_acked: u64) {
        let new_ws = cumulative_acked.saturating_add(1).min(self.next_id);
        while self.w_s < new_ws {
            self.window.pop_front();
            self.w_s += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> Encoder {
        Encoder::new(EncoderConfig { seed: 11, delta: 0.03, initial_pe: 0.01 })
    }

    #[test]
    fn source_ids_are_consecutive() {
        let mut e = enc();
        assert_eq!(e.i_seq(), -1);
        assert_eq!(e.encode_source(b"abc").unwrap().id, 0);
        assert_eq!(e.encode_source(b"").unwrap().id, 1);
        for _ in 0..97 {
            e.encode_source(b"x").unwrap();
        }
        assert_eq!(e.n_source(), 99);
        assert_eq!(e.i_seq(), 98);
        assert!(matches!(e.encode_source(&[0; 1281]), Err(FecError::Oversized(1281))));
    }

    #[test]
    fn decision_examples() {
        assert_eq!(repair_decision(99, 0, 0.01, 0.03, true, true), RepairDecision::Normal);
        assert_eq!(repair_decision(96, 4, 0.01, 0.03, true, true), RepairDecision::None);
        assert_eq!(repair_decision(5, 0, 0.01, 0.03, false, true), RepairDecision::TailProtection);
        assert_eq!(repair_decision(5, 0, 0.01, 0.03, false, false), RepairDecision::None);
        // First packet is a source.
        assert_eq!(repair_decision(0, 0, 0.01, 0.03, true, false), RepairDecision::None);
    }

    #[test]
    fn empty_window_is_an_error() {
        let mut e = enc();
        assert_eq!(e.make_repair(RepairDecision::Normal), Err(FecError::EmptyWindow));
        e.encode_source(b"a").unwrap();
        e.on_ack(0);
        assert_eq!(e.make_repair(RepairDecision::TailProtection), Err(FecError::EmptyWindow));
    }

    #[test]
    fn single_source_repair_is_scaled_symbol() {
        let mut e = enc();
        e.encode_source(b"hello").unwrap();
        let r = e.make_repair(RepairDecision::Normal).unwrap();
        assert_eq!((r.ew_low, r.ew_high, r.repair_id), (0, 0, 0));
        let c = coefficient(11, 0, 0);
        let sym = coded_symbol(b"hello").unwrap();
        let want: Vec<u8> = sym.iter().map(|&b| crate::galois::gf_mul(c, b)).collect();
        assert_eq!(r.payload, want);
        assert_eq!(e.n_repair(), 1);
        assert_eq!(e.next_repair_id(), 1);
    }

    #[test]
    fn tail_repairs_do_not_count() {
        let mut e = enc();
        e.encode_source(b"a").unwrap();
        e.make_repair(RepairDecision::TailProtection).unwrap();
        assert_eq!((e.n_repair(), e.n_tail(), e.next_repair_id()), (0, 1, 1));
    }

    #[test]
    fn acks_slide_the_window() {
        let mut e = enc();
        for _ in 0..8 {
            e.encode_source(b"z").unwrap();
        }
        e.on_ack(4);
        assert_eq!(e.w_s(), 5);
        e.on_ack(4);
        e.on_ack(2);
        assert_eq!(e.w_s(), 5);
        let r = e.make_repair(RepairDecision::Normal).unwrap();
        assert_eq!((r.ew_low, r.ew_high), (5, 7));
        e.on_ack(7);
        assert!(!e.unacked_exist());
        assert_eq!(e.should_send_repair(false), RepairDecision::None);
        assert_eq!(e.window_len(), 0);
    }

    #[test]
    fn ratio_bound_holds_under_greedy_scheduling() {
        let mut e = enc();
        for step in 0..5000 {
            if step == 2000 {
                e.set_loss_estimate(0.07);
            }
            match e.should_send_repair(true) {
                RepairDecision::Normal => {
                    e.make_repair(RepairDecision::Normal).unwrap();
                }
                _ => {
                    e.encode_source(b"p").unwrap();
                }
            }
            if step % 50 == 0 {
                e.on_ack(e.i_seq().max(0) as u64);
            }
            let n = (e.n_source() + e.n_repair()) as f64;
            assert!(e.redundancy_ratio() <= e.p_e_max() + e.delta() + 1.0 / n + 1e-12);
        }
    }
}
