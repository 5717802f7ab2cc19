//! Sliding-window random linear streaming code.
//!
//! Sources are sent uncoded in SOURCE frames. REPAIR frames carry a GF(2^8)
//! combination of every unacknowledged source (the encoding window) together
//! with the window bounds, so the receiver can regenerate the coefficients from
//! the session seed. The decoder reduces repair rows as they arrive and recovers
//! the decoding window once it holds as many independent rows as missing sources.

mod decoder;
mod encoder;
pub mod replay;

pub use decoder::{Decoder, DecoderConfig, DecoderStats, DeliveryReport};
pub use encoder::{repair_decision, Encoder, EncoderConfig, RepairDecision};

use thiserror::Error;

/// Maximum source payload (L_sym).
pub const SYMBOL_SIZE: usize = 1280;
/// Coded symbol length: 2-byte true length followed by the zero-padded payload.
pub const CODED_SYMBOL_LEN: usize = SYMBOL_SIZE + 2;

pub const SOURCE_TYPE: u8 = 0x01;
pub const REPAIR_TYPE: u8 = 0x02;
/// Wire size of a SOURCE frame header.
pub const SOURCE_HEADER_LEN: usize = 1 + 8 + 2;
/// Wire size of a complete REPAIR frame.
pub const REPAIR_FRAME_LEN: usize = 1 + 8 + 8 + 8 + CODED_SYMBOL_LEN;

pub const DEFAULT_DELTA: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FecError {
    #[error("payload of {0} bytes exceeds the {SYMBOL_SIZE}-byte symbol size")]
    Oversized(usize),
    #[error("encoding window is empty")]
    EmptyWindow,
    #[error("malformed frame: {0}")]
    Frame(String),
    #[error("decoder buffer high-water mark exceeded: {buffered} symbols buffered, limit {limit}")]
    HighWater { buffered: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFrame {
    pub id: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairFrame {
    pub repair_id: u64,
    pub ew_low: u64,
    pub ew_high: u64,
    /// Linear combination of coded symbols, always [`CODED_SYMBOL_LEN`] bytes.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Source(SourceFrame),
    Repair(RepairFrame),
}

/// Pads `payload` into a coded symbol.
pub fn coded_symbol(payload: &[u8]) -> Result<Vec<u8>, FecError> {
    if payload.len() > SYMBOL_SIZE {
        return Err(FecError::Oversized(payload.len()));
    }
    let mut s = vec![0u8; CODED_SYMBOL_LEN];
    s[..2].copy_from_slice(&(payload.len() as u16).to_be_bytes());
    s[2..2 + payload.len()].copy_from_slice(payload);
    Ok(s)
}

/// Extracts the payload from a coded symbol.
pub fn symbol_payload(symbol: &[u8]) -> Result<&[u8], FecError> {
    if symbol.len() != CODED_SYMBOL_LEN {
        return Err(FecError::Frame(format!("coded symbol of {} bytes", symbol.len())));
    }
    let len = u16::from_be_bytes([symbol[0], symbol[1]]) as usize;
    if len > SYMBOL_SIZE {
        return Err(FecError::Frame(format!("coded length prefix {len}")));
    }
    Ok(&symbol[2..2 + len])
}

impl SourceFrame {
    pub fn wire_len(&self) -> usize {
        SOURCE_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(SOURCE_TYPE);
        out.extend_from_slice(&self.id.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
    }
}

impl RepairFrame {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(REPAIR_TYPE);
        out.extend_from_slice(&self.repair_id.to_be_bytes());
        out.extend_from_slice(&self.ew_low.to_be_bytes());
        out.extend_from_slice(&self.ew_high.to_be_bytes());
        out.extend_from_slice(&self.payload);
    }
}

impl Frame {
    pub fn wire_len(&self) -> usize {
        match self {
            Frame::Source(s) => s.wire_len(),
            Frame::Repair(_) => REPAIR_FRAME_LEN,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        match self {
            Frame::Source(s) => s.encode(&mut out),
            Frame::Repair(r) => r.encode(&mut out),
        }
        out
    }

    /// Parses one frame occupying all of `buf`.
    pub fn decode(buf: &[u8]) -> Result<Frame, FecError> {
        let bad = |m: &str| FecError::Frame(m.to_string());
        let (&ty, rest) = buf.split_first().ok_or_else(|| bad("empty frame"))?;
        let be64 = |b: &[u8]| u64::from_be_bytes(b[..8].try_into().unwrap());
        match ty {
            SOURCE_TYPE => {
                if rest.len() < 10 {
                    return Err(bad("truncated SOURCE header"));
                }
                let id = be64(rest);
                let len = u16::from_be_bytes([rest[8], rest[9]]) as usize;
                if len > SYMBOL_SIZE {
                    return Err(FecError::Oversized(len));
                }
                if rest.len() != 10 + len {
                    return Err(bad("SOURCE length mismatch"));
                }
                Ok(Frame::Source(SourceFrame { id, payload: rest[10..].to_vec() }))
            }
            REPAIR_TYPE => {
                if buf.len() != REPAIR_FRAME_LEN {
                    return Err(bad("REPAIR length mismatch"));
                }
                let repair_id = be64(rest);
                let ew_low = be64(&rest[8..]);
                let ew_high = be64(&rest[16..]);
                if ew_low > ew_high {
                    return Err(bad("inverted encoding window"));
                }
                Ok(Frame::Repair(RepairFrame { repair_id, ew_low, ew_high, payload: rest[24..].to_vec() }))
            }
            t => Err(FecError::Frame(format!("unknown frame type {t:#04x}"))),
        }
    }
}
