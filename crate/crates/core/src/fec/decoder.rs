use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{coded_symbol, symbol_payload, FecError, Frame, RepairFrame, SourceFrame};
use crate::galois::{coefficient, gf_inv, gf_mul, mul_acc, mul_in_place};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderConfig {
    pub seed: u64,
    /// Maximum number of buffered coded symbols before ingest fails.
    pub high_water: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { seed: 0, high_water: 1 << 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryReport {
    /// Received and recovered payloads released by this ingest, in id order
    /// for recovered ones.
    pub delivered_now: Vec<(u64, Vec<u8>)>,
    pub recovered: Vec<u64>,
    pub loss_detected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecoderStats {
    pub sources_received: u64,
    pub duplicate_sources: u64,
    pub repairs_received: u64,
    /// Repairs whose window held no missing source.
    pub useless_repairs: u64,
    /// Repairs that reduced to the zero row.
    pub dependent_repairs: u64,
    /// Repairs referring to sources no longer buffered.
    pub stale_repairs: u64,
    pub losses_detected: u64,
    pub recovered: u64,
    pub decode_events: u64,
    pub max_buffered: usize,
    /// Frame arrivals between loss detection and recovery, one entry per
    /// recovered source.
    pub recovery_spans: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Row {
    /// Coefficients over missing ids; the pivot (smallest key) has coefficient 1.
    coeffs: BTreeMap<u64, u8>,
    payload: Vec<u8>,
    ew_high: u64,
}

/// Receiver half of the streaming code.
#[derive(Debug, Clone)]
pub struct Decoder {
    seed: u64,
    high_water: usize,
    /// `i_ord + 1`.
    next_in_order: u64,
    store_base: u64,
    store: VecDeque<Option<Vec<u8>>>,
    buffered: usize,
    max_ew_low: u64,
    /// Highest source id known to have been sent.
    frontier: Option<u64>,
    missing: BTreeSet<u64>,
    rows: BTreeMap<u64, Row>,
    dw_high: Option<u64>,
    arrivals: u64,
    detected_at: HashMap<u64, u64>,
    stats: DecoderStats,
}

impl Decoder {
    pub fn new(cfg: DecoderConfig) -> Self {
        Self {
            seed: cfg.seed,
            high_water: cfg.high_water,
            next_in_order: 0,
            store_base: 0,
            store: VecDeque::new(),
            buffered: 0,
            max_ew_low: 0,
            frontier: None,
            missing: BTreeSet::new(),
            rows: BTreeMap::new(),
            dw_high: None,
            arrivals: 0,
            detected_at: HashMap::new(),
            stats: DecoderStats::default(),
        }
    }

    /// Latest in-order source id, `-1` before the first.
    pub fn i_ord(&self) -> i64 {
        self.next_in_order as i64 - 1
    }

    pub fn is_active(&self) -> bool {
        !self.missing.is_empty()
    }

    /// Width of the decoding window, 0 when inactive.
    pub fn dw_width(&self) -> u64 {
        match (self.is_active(), self.frontier) {
            (true, Some(f)) => f + 1 - self.next_in_order,
            _ => 0,
        }
    }

    /// `(ŵ_s, ŵ_e)` while active.
    pub fn dw_bounds(&self) -> Option<(u64, u64)> {
        if self.is_active() {
            self.frontier.map(|f| (self.next_in_order, f))
        } else {
            None
        }
    }

    pub fn missing(&self) -> impl Iterator<Item = u64> + '_ {
        self.missing.iter().copied()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn buffered_symbols(&self) -> usize {
        self.buffered
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn stats(&self) -> &DecoderStats {
        &self.stats
    }

    /// Buffered coded symbols and pending row payloads, for memory inspection.
    pub fn payload_buffers(&self) -> impl Iterator<Item = &[u8]> {
        self.store
            .iter()
            .flatten()
            .map(|v| v.as_slice())
            .chain(self.rows.values().map(|r| r.payload.as_slice()))
    }

    pub fn ingest(&mut self, frame: Frame) -> Result<DeliveryReport, FecError> {
        match frame {
            Frame::Source(s) => self.ingest_source(s),
            Frame::Repair(r) => self.ingest_repair(r),
        }
    }

    fn symbol(&self, id: u64) -> Option<&Vec<u8>> {
        if id < self.store_base {
            return None;
        }
        self.store.get((id - self.store_base) as usize).and_then(|s| s.as_ref())
    }

    fn is_known(&self, id: u64) -> bool {
        id < self.next_in_order || self.symbol(id).is_some()
    }

    fn put_symbol(&mut self, id: u64, symbol: Vec<u8>) -> Result<(), FecError> {
        if id < self.store_base {
            return Ok(());
        }
        let idx = (id - self.store_base) as usize;
        if idx >= self.store.len() {
            self.store.resize(idx + 1, None);
        }
        if self.store[idx].replace(symbol).is_none() {
            self.buffered += 1;
        }
        self.stats.max_buffered = self.stats.max_buffered.max(self.buffered);
        if self.buffered > self.high_water {
            return Err(FecError::HighWater { buffered: self.buffered, limit: self.high_water });
        }
        Ok(())
    }

    fn advance_frontier(&mut self, to: u64, report: &mut DeliveryReport) {
        let start = match self.frontier {
            Some(f) if f >= to => return,
            Some(f) => f + 1,
            None => 0,
        };
        for id in start.max(self.next_in_order)..=to {
            if !self.is_known(id) {
                self.missing.insert(id);
                self.detected_at.insert(id, self.arrivals);
                self.stats.losses_detected += 1;
                report.loss_detected = true;
            }
        }
        self.frontier = Some(to);
    }

    fn advance_in_order(&mut self) {
        while self.symbol(self.next_in_order).is_some() {
            self.next_in_order += 1;
        }
        self.collect_garbage();
    }

    fn collect_garbage(&mut self) {
        let keep_from = self.max_ew_low.min(self.next_in_order);
        while self.store_base < keep_from {
            if let Some(Some(_)) = self.store.pop_front() {
                self.buffered -= 1;
            }
            self.store_base += 1;
        }
    }

    fn ingest_source(&mut self, s: SourceFrame) -> Result<DeliveryReport, FecError> {
        self.arrivals += 1;
        self.stats.sources_received += 1;
        let mut report = DeliveryReport::default();
        if self.is_known(s.id) {
            self.stats.duplicate_sources += 1;
            return Ok(report);
        }
        let symbol = coded_symbol(&s.payload)?;
        let was_missing = self.missing.remove(&s.id);
        if was_missing {
            self.detected_at.remove(&s.id);
            self.eliminate_known(s.id, &symbol);
        }
        self.put_symbol(s.id, symbol)?;
        report.delivered_now.push((s.id, s.payload));
        if s.id > 0 {
            self.advance_frontier(s.id - 1, &mut report);
        }
        if self.frontier.map_or(true, |f| s.id > f) {
            self.frontier = Some(s.id);
        }
        self.advance_in_order();
        if was_missing {
            self.try_decode(&mut report)?;
        }
        Ok(report)
    }

    /// Removes column `id` from every row after a late source arrival.
    fn eliminate_known(&mut self, id: u64, symbol: &[u8]) {
        let mut orphaned = None;
        for (&pivot, row) in self.rows.iter_mut() {
            if let Some(c) = row.coeffs.remove(&id) {
                mul_acc(&mut row.payload, symbol, c);
                if pivot == id {
                    orphaned = Some(pivot);
                }
            }
        }
        if let Some(p) = orphaned {
            let row = self.rows.remove(&p).unwrap();
            self.insert_row(row);
        }
        self.refresh_dw_high();
    }

    fn refresh_dw_high(&mut self) {
        self.dw_high = self.rows.values().map(|r| r.ew_high).max();
    }

    /// Reduces `row` against the pivots and inserts it. Returns false when it
    /// reduces to zero.
    fn insert_row(&mut self, mut row: Row) -> bool {
        loop {
            let Some((&m, &c)) = row.coeffs.iter().next() else {
                self.stats.dependent_repairs += 1;
                return false;
            };
            match self.rows.get(&m) {
                Some(pivot_row) => {
                    for (&j, &a) in &pivot_row.coeffs {
                        let v = row.coeffs.get(&j).copied().unwrap_or(0) ^ gf_mul(c, a);
                        if v == 0 {
                            row.coeffs.remove(&j);
                        } else {
                            row.coeffs.insert(j, v);
                        }
                    }
                    mul_acc(&mut row.payload, &pivot_row.payload, c);
                }
                None => {
                    let inv = gf_inv(c).expect("nonzero pivot");
                    for v in row.coeffs.values_mut() {
                        *v = gf_mul(*v, inv);
                    }
                    mul_in_place(&mut row.payload, inv);
                    self.dw_high = Some(self.dw_high.map_or(row.ew_high, |h| h.max(row.ew_high)));
                    self.rows.insert(m, row);
                    return true;
                }
            }
        }
    }

    fn ingest_repair(&mut self, r: RepairFrame) -> Result<DeliveryReport, FecError> {
        self.arrivals += 1;
        self.stats.repairs_received += 1;
        if r.ew_low > r.ew_high {
            return Err(FecError::Frame("inverted encoding window".into()));
        }
        if r.payload.len() != super::CODED_SYMBOL_LEN {
            return Err(FecError::Frame(format!("repair payload of {} bytes", r.payload.len())));
        }
        let mut report = DeliveryReport::default();
        self.max_ew_low = self.max_ew_low.max(r.ew_low);
        self.advance_frontier(r.ew_high, &mut report);
        self.collect_garbage();

        if self.missing.range(r.ew_low..=r.ew_high).next().is_none() {
            self.stats.useless_repairs += 1;
            return Ok(report);
        }
        if r.ew_low < self.store_base {
            self.stats.stale_repairs += 1;
            return Ok(report);
        }

        let k = r.repair_id;
        let mut payload = r.payload;
        let mut coeffs = BTreeMap::new();
        for i in r.ew_low..=r.ew_high {
            let c = coefficient(self.seed, k, i);
            if self.missing.contains(&i) {
                if c != 0 {
                    coeffs.insert(i, c);
                }
            } else if c != 0 {
                match self.symbol(i) {
                    Some(sym) => mul_acc(&mut payload, sym, c),
                    None => {
                        self.stats.stale_repairs += 1;
                        return Ok(report);
                    }
                }
            }
        }
        if self.insert_row(Row { coeffs, payload, ew_high: r.ew_high }) {
            self.try_decode(&mut report)?;
        }
        Ok(report)
    }

    fn try_decode(&mut self, report: &mut DeliveryReport) -> Result<(), FecError> {
        let Some(high) = self.dw_high else { return Ok(()) };
        if self.rows.is_empty() || self.missing.range(..=high).count() != self.rows.len() {
            return Ok(());
        }
        let rows = std::mem::take(&mut self.rows);
        self.dw_high = None;
        let mut solved: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
        for (&pivot, row) in rows.iter().rev() {
            let mut sol = row.payload.clone();
            for (&j, &a) in row.coeffs.range(pivot + 1..) {
                mul_acc(&mut sol, &solved[&j], a);
            }
            solved.insert(pivot, sol);
        }
        self.stats.decode_events += 1;
        for (id, symbol) in solved {
            let payload = symbol_payload(&symbol)?.to_vec();
            self.missing.remove(&id);
            if let Some(at) = self.detected_at.remove(&id) {
                self.stats.recovery_spans.push(self.arrivals - at);
            }
            self.put_symbol(id, symbol)?;
            self.stats.recovered += 1;
            report.recovered.push(id);
            report.delivered_now.push((id, payload));
        }
        self.advance_in_order();
        Ok(())
    }
}
