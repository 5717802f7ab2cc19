//! Loss-trace replay.
//!
//! A trace is CSV with one event per line: `t_us,dir,frame_type,drop_flag`.
//! `dir` is `fwd` (encoder to decoder) or `rev` (decoder to encoder).
//! Forward frame types are `source`, `repair` (counted toward the redundancy
//! ratio) and `tail` (tail protection). The only reverse type is `ack`, which
//! carries the decoder's current in-order id back to the encoder. `drop_flag`
//! is `1` when the frame is lost. A header line starting with `t_us` is skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    repair_decision, Decoder, DecoderConfig, Encoder, EncoderConfig, FecError, Frame, RepairDecision,
    SYMBOL_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Source,
    Repair,
    Tail,
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub t_us: u64,
    pub kind: TraceKind,
    pub dropped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub sources: u64,
    pub repairs: u64,
    pub tail_repairs: u64,
    pub skipped_repairs: u64,
    pub lost_sources: u64,
    pub recovered: u64,
    pub unrecovered: u64,
    /// Recovered payloads that differ from the original.
    pub mismatches: u64,
    pub dependent_repairs: u64,
    pub max_dw_width: u64,
    pub final_i_ord: i64,
    pub redundancy_ratio: f64,
}

impl ReplayReport {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nsources,{}\nrepairs,{}\ntail_repairs,{}\nskipped_repairs,{}\nlost_sources,{}\n\
             recovered,{}\nunrecovered,{}\nmismatches,{}\ndependent_repairs,{}\nmax_dw_width,{}\n\
             final_i_ord,{}\nredundancy_ratio,{:.6}\n",
            self.sources,
            self.repairs,
            self.tail_repairs,
            self.skipped_repairs,
            self.lost_sources,
            self.recovered,
            self.unrecovered,
            self.mismatches,
            self.dependent_repairs,
            self.max_dw_width,
            self.final_i_ord,
            self.redundancy_ratio
        )
    }
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, FecError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_us") {
            continue;
        }
        let bad = |m: &str| FecError::Frame(format!("trace line {}: {m}", n + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let t_us = cols[0].parse().map_err(|_| bad("bad t_us"))?;
        let kind = match (cols[1], cols[2]) {
            ("fwd", "source") => TraceKind::Source,
            ("fwd", "repair") => TraceKind::Repair,
            ("fwd", "tail") => TraceKind::Tail,
            ("rev", "ack") => TraceKind::Ack,
            _ => return Err(bad("unknown dir/frame_type pair")),
        };
        let dropped = match cols[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("drop_flag must be 0 or 1")),
        };
        out.push(TraceEvent { t_us, kind, dropped });
    }
    Ok(out)
}

pub fn format_trace(events: &[TraceEvent]) -> String {
    let mut s = String::from("t_us,dir,frame_type,drop_flag\n");
    for e in events {
        let (dir, ty) = match e.kind {
            TraceKind::Source => ("fwd", "source"),
            TraceKind::Repair => ("fwd", "repair"),
            TraceKind::Tail => ("fwd", "tail"),
            TraceKind::Ack => ("rev", "ack"),
        };
        s.push_str(&format!("{},{},{},{}\n", e.t_us, dir, ty, e.dropped as u8));
    }
    s
}

/// Deterministic payload for source `id`.
pub fn synthetic_payload(seed: u64, id: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let len = rng.gen_range(1..=SYMBOL_SIZE);
    (0..len).map(|_| rng.gen()).collect()
}

/// Parameters for [`synthetic_trace`].
#[derive(Debug, Clone, Copy)]
pub struct TraceParams {
    pub seed: u64,
    pub sources: u64,
    pub loss: f64,
    pub p_e: f64,
    pub delta: f64,
    /// An ack is emitted after this many forward frames.
    pub ack_every: u64,
    pub tail_repairs: u64,
}

/// Generates a trace following the encoder's repair schedule with i.i.d.
/// forward loss. Acks are never dropped.
pub fn synthetic_trace(p: &TraceParams) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out = Vec::new();
    let (mut ns, mut nr, mut t, mut fwd) = (0u64, 0u64, 0u64, 0u64);
    let mut push = |kind, dropped, out: &mut Vec<TraceEvent>| {
        t += 1000;
        out.push(TraceEvent { t_us: t, kind, dropped });
    };
    while ns < p.sources {
        let kind = match repair_decision(ns, nr, p.p_e, p.delta, true, ns > 0) {
            RepairDecision::Normal => {
                nr += 1;
                TraceKind::Repair
            }
            _ => {
                ns += 1;
                TraceKind::Source
            }
        };
        push(kind, rng.gen_bool(p.loss), &mut out);
        fwd += 1;
        if p.ack_every > 0 && fwd % p.ack_every == 0 {
            push(TraceKind::Ack, false, &mut out);
        }
    }
    for _ in 0..p.tail_repairs {
        push(TraceKind::Tail, rng.gen_bool(p.loss), &mut out);
    }
    out
}

/// Replays `events` through a fresh encoder/decoder pair.
pub fn replay(events: &[TraceEvent], seed: u64, p_e: f64, delta: f64) -> Result<ReplayReport, FecError> {
    let mut enc = Encoder::new(EncoderConfig { seed, delta, initial_pe: p_e });
    let mut dec = Decoder::new(DecoderConfig { seed, high_water: usize::MAX });
    let mut rep = ReplayReport::default();
    let mut lost = std::collections::BTreeSet::new();
    for ev in events {
        let frame = match ev.kind {
            TraceKind::Ack => {
                if !ev.dropped && dec.i_ord() >= 0 {
                    enc.on_ack(dec.i_ord() as u64);
                }
                continue;
            }
            TraceKind::Source => {
                let id = (enc.i_seq() + 1) as u64;
                let f = enc.encode_source(&synthetic_payload(seed, id))?;
                rep.sources += 1;
                if ev.dropped {
                    lost.insert(f.id);
                    rep.lost_sources += 1;
                }
                Frame::Source(f)
            }
            TraceKind::Repair | TraceKind::Tail => {
                let kind = if ev.kind == TraceKind::Repair {
                    RepairDecision::Normal
                } else {
                    RepairDecision::TailProtection
                };
                match enc.make_repair(kind) {
                    Ok(r) => {
                        if kind == RepairDecision::Normal {
                            rep.repairs += 1;
                        } else {
                            rep.tail_repairs += 1;
                        }
                        Frame::Repair(r)
                    }
                    Err(FecError::EmptyWindow) => {
                        rep.skipped_repairs += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if ev.dropped {
            continue;
        }
        let out = dec.ingest(frame)?;
        for (id, payload) in &out.delivered_now {
            if out.recovered.contains(id) {
                rep.recovered += 1;
                lost.remove(id);
                if *payload != synthetic_payload(seed, *id) {
                    rep.mismatches += 1;
                }
            }
        }
        rep.max_dw_width = rep.max_dw_width.max(dec.dw_width());
    }
    rep.unrecovered = lost.len() as u64;
    rep.dependent_repairs = dec.stats().dependent_repairs;
    rep.final_i_ord = dec.i_ord();
    rep.redundancy_ratio = enc.redundancy_ratio();
    Ok(rep)
}
