use std::fmt::Write as _;
use std::io::{self, Write};

use sha2::{Digest, Sha256};

use super::Node;

pub const TRACE_HEADER: &str = "t_us,event,node,link,packet_id,size,detail";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceKind {
    /// Handed to a link; detail is unused.
    Send,
    /// Arrived at the far end; detail is the departure time.
    Deliver,
    /// Random loss at departure; detail is the departure time.
    Loss,
    /// Departure fell in a disruption with no gateway; detail is the would-be departure.
    OutageDrop,
    /// Stored by the gateway; detail is the disruption end.
    Hold,
    /// Taken out of the gateway; detail is the departure time.
    Release,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Send => "send",
            TraceKind::Deliver => "deliver",
            TraceKind::Loss => "loss",
            TraceKind::OutageDrop => "outage_drop",
            TraceKind::Hold => "hold",
            TraceKind::Release => "release",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub t_us: u64,
    pub kind: TraceKind,
    pub node: Node,
    pub link: (Node, Node),
    pub packet_id: u64,
    pub size: usize,
    pub detail: u64,
}

impl TraceRecord {
    pub fn write_csv(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{}>{},{},{},{}",
            self.t_us,
            self.kind.as_str(),
            self.node,
            self.link.0,
            self.link.1,
            self.packet_id,
            self.size,
            self.detail
        );
    }
}

pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);

    /// Hex SHA-256 of the CSV rendering, for sinks that compute it.
    fn digest(&self) -> Option<String> {
        None
    }

    fn records(&self) -> &[TraceRecord] {
        &[]
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct NullTrace;

impl TraceSink for NullTrace {
    fn record(&mut self, _: &TraceRecord) {}
}

#[derive(Debug, Default)]
pub struct MemoryTrace {
    pub records: Vec<TraceRecord>,
}

impl TraceSink for MemoryTrace {
    fn record(&mut self, rec: &TraceRecord) {
        self.records.push(rec.clone());
    }

    fn digest(&self) -> Option<String> {
        let mut h = HashTrace::new();
        for r in &self.records {
            h.record(r);
        }
        h.digest()
    }

    fn records(&self) -> &[TraceRecord] {
        &self.records
    }
}

#[derive(Debug)]
pub struct HashTrace {
    hasher: Sha256,
    line: String,
}

impl HashTrace {
    pub fn new() -> Self {
        let mut hasher = Sha256::new();
        hasher.update(TRACE_HEADER.as_bytes());
        hasher.update(b"\n");
        Self { hasher, line: String::with_capacity(96) }
    }
}

impl Default for HashTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceSink for HashTrace {
    fn record(&mut self, rec: &TraceRecord) {
        self.line.clear();
        rec.write_csv(&mut self.line);
        self.hasher.update(self.line.as_bytes());
    }

    fn digest(&self) -> Option<String> {
        let d = self.hasher.clone().finalize();
        Some(d.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Streams CSV rows to a writer and hashes them on the way.
pub struct CsvTrace<W: Write> {
    out: W,
    hash: HashTrace,
    error: Option<io::Error>,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(Self { out, hash: HashTrace::new(), error: None })
    }
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn record(&mut self, rec: &TraceRecord) {
        self.hash.record(rec);
        if self.error.is_none() {
            if let Err(e) = self.out.write_all(self.hash.line.as_bytes()) {
                self.error = Some(e);
            }
        }
    }

    fn digest(&self) -> Option<String> {
        self.hash.digest()
    }

    fn flush(&mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64) -> TraceRecord {
        TraceRecord { t_us: t, kind: TraceKind::Deliver, node: Node::C, link: (Node::B, Node::C), packet_id: 7, size: 1500, detail: 3 }
    }

    #[test]
    fn csv_and_hash_agree() {
        let mut buf = Vec::new();
        let mut csv = CsvTrace::new(&mut buf).unwrap();
        let mut mem = MemoryTrace::default();
        for t in 0..3 {
            csv.record(&rec(t));
            mem.record(&rec(t));
        }
        csv.flush().unwrap();
        let d = csv.digest().unwrap();
        assert_eq!(Some(d.clone()), mem.digest());
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,deliver,C,B>C,7,1500,3");
        let direct: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(d, direct);
    }
}
