//! Scenario files.
//!
//! ```toml
//! name = "single-flow"
//! scheme = "pepspace"        # or "raw-endpoint"
//! seed = 1
//! horizon = 600.0            # seconds of simulated time
//! loss = 0.01                # B–C loss, both directions, unless a link overrides it
//! trace = "full"             # full | hash | none
//!
//! [link.bc]
//! bandwidth = 10e6
//! owd = 2.01
//!
//! [flow]
//! count = 1
//! size = 35000000            # plaintext bytes per flow
//!
//! [fec]
//! delta = 0.03
//! initial_pe = 0.01
//!
//! [buffer]
//! window = 2500              # per-stream backpressure window, bytes
//!
//! [disruption]
//! intervals = [[10.0, 22.0]]
//! ```
//!
//! Every key is optional. Links default to the standard A–B–C–D chain and the
//! window defaults to `k_opt` for the configured links and flow count.

use serde::{Deserialize, Serialize};

use crate::netsim::{secs_to_us, LinkSpec, Node};
use crate::queueing::{k_opt, QueueParams};
use crate::transport::{DEFAULT_ALPHA, DEFAULT_LOSS_BATCH};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Transport and FEC run between the two proxies.
    #[default]
    Pepspace,
    /// Transport and FEC run between the endpoints; proxies only forward.
    RawEndpoint,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Pepspace => "pepspace",
            Scheme::RawEndpoint => "raw-endpoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    #[default]
    Full,
    Hash,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub owd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Links {
    pub ab: LinkConfig,
    pub ba: LinkConfig,
    pub bc: LinkConfig,
    pub cb: LinkConfig,
    pub cd: LinkConfig,
    pub dc: LinkConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub count: usize,
    pub size: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { count: 1, size: 35_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FecSettings {
    pub delta: f64,
    pub initial_pe: f64,
    pub alpha: f64,
    /// Frames pooled per loss-estimate update.
    pub loss_batch: u32,
    /// Decoder buffer limit in symbols.
    pub high_water: usize,
    /// Acknowledgment interval, seconds.
    pub ack_interval: f64,
}

impl Default for FecSettings {
    fn default() -> Self {
        Self { delta: crate::fec::DEFAULT_DELTA, initial_pe: 0.01, alpha: DEFAULT_ALPHA, loss_batch: DEFAULT_LOSS_BATCH, high_water: 100_000, ack_interval: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferConfig {
    /// Per-stream window in bytes; `k_opt` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    /// Store-and-forward gateway on B→C.
    pub gateway: bool,
    /// Gateway capacity, bytes.
    pub capacity: u64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self { window: None, gateway: true, capacity: crate::netsim::DEFAULT_GATEWAY_CAPACITY as u64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisruptionConfig {
    /// `[start, end)` outages of the B–C link in seconds.
    pub intervals: Vec<[f64; 2]>,
    /// Also take C→B down during the outages.
    pub uplink: bool,
}

impl Default for DisruptionConfig {
    fn default() -> Self {
        Self { intervals: Vec::new(), uplink: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub horizon: f64,
    pub loss: f64,
    pub trace: TraceMode,
    pub link: Links,
    pub flow: FlowConfig,
    pub fec: FecSettings,
    pub buffer: BufferConfig,
    pub disruption: DisruptionConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            scheme: Scheme::Pepspace,
            seed: 1,
            horizon: 600.0,
            loss: 0.01,
            trace: TraceMode::Full,
            link: Links::default(),
            flow: FlowConfig::default(),
            fec: FecSettings::default(),
            buffer: BufferConfig::default(),
            disruption: DisruptionConfig::default(),
        }
    }
}

/// Resolved parameters of one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedLink {
    pub from: Node,
    pub to: Node,
    pub bandwidth: f64,
    pub owd: f64,
    pub loss: f64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Standard chain, `flows` flows of `size` bytes at B–C loss `loss`.
    pub fn standard(loss: f64, flows: usize, size: u64) -> Self {
        Self { loss, flow: FlowConfig { count: flows, size }, ..Self::default() }
    }

    pub fn links(&self) -> [ResolvedLink; 6] {
        let l = &self.link;
        let r = |c: &LinkConfig, from, to, bw: f64, owd: f64, loss: f64| ResolvedLink {
            from,
            to,
            bandwidth: c.bandwidth.unwrap_or(bw),
            owd: c.owd.unwrap_or(owd),
            loss: c.loss.unwrap_or(loss),
        };
        [
            r(&l.ab, Node::A, Node::B, 200e6, 0.010, 0.0),
            r(&l.ba, Node::B, Node::A, 200e6, 0.010, 0.0),
            r(&l.bc, Node::B, Node::C, 10e6, 2.010, self.loss),
            r(&l.cb, Node::C, Node::B, 1e6, 2.010, self.loss),
            r(&l.cd, Node::C, Node::D, 200e6, 0.010, 0.0),
            r(&l.dc, Node::D, Node::C, 200e6, 0.010, 0.0),
        ]
    }

    pub fn link(&self, from: Node, to: Node) -> ResolvedLink {
        *self.links().iter().find(|l| l.from == from && l.to == to).expect("chain link")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return err(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return err(format!("loss must be in [0, 1], got {}", self.loss));
        }
        for l in self.links() {
            if !(l.bandwidth > 0.0 && l.bandwidth.is_finite()) {
                return err(format!("link {}{}: bandwidth must be positive", l.from, l.to));
            }
            if !(l.owd >= 0.0 && l.owd.is_finite()) {
                return err(format!("link {}{}: owd must be non-negative", l.from, l.to));
            }
            if !(0.0..1.0).contains(&l.loss) {
                return err(format!("link {}{}: loss must be in [0, 1)", l.from, l.to));
            }
        }
        if self.flow.count == 0 || self.flow.count > 4096 {
            return err(format!("flow.count must be in 1..=4096, got {}", self.flow.count));
        }
        if self.flow.size == 0 {
            return err("flow.size must be positive");
        }
        let f = &self.fec;
        if !(0.0..1.0).contains(&f.delta) {
            return err(format!("fec.delta must be in [0, 1), got {}", f.delta));
        }
        if !(0.0..=1.0).contains(&f.initial_pe) {
            return err(format!("fec.initial_pe must be in [0, 1], got {}", f.initial_pe));
        }
        if !(f.alpha > 0.0 && f.alpha <= 1.0) {
            return err(format!("fec.alpha must be in (0, 1], got {}", f.alpha));
        }
        if f.high_water == 0 {
            return err("fec.high_water must be positive");
        }
        if !(f.ack_interval > 0.0 && f.ack_interval.is_finite()) {
            return err("fec.ack_interval must be positive");
        }
        if self.buffer.window == Some(0) {
            return err("buffer.window must be positive");
        }
        if self.buffer.capacity == 0 {
            return err("buffer.capacity must be positive");
        }
        let mut prev = f64::NEG_INFINITY;
        for &[s, e] in &self.disruption.intervals {
            if !(s >= 0.0 && e > s && e.is_finite()) {
                return err(format!("disruption [{s}, {e}) is empty or invalid"));
            }
            if s < prev {
                return err("disruption intervals must be sorted and disjoint");
            }
            prev = e;
        }
        if self.disruption.intervals.iter().any(|&[s, e]| secs_to_us(s) == secs_to_us(e)) {
            return err("disruption shorter than a microsecond");
        }
        Ok(())
    }

    pub fn link_specs(&self) -> Vec<LinkSpec> {
        let outages: Vec<(u64, u64)> =
            self.disruption.intervals.iter().map(|&[s, e]| (secs_to_us(s), secs_to_us(e))).collect();
        self.links()
            .iter()
            .map(|l| {
                let mut spec = LinkSpec::new(l.from, l.to, l.bandwidth, l.owd, l.loss);
                let down = (l.from, l.to) == (Node::B, Node::C)
                    || (self.disruption.uplink && (l.from, l.to) == (Node::C, Node::B));
                if down {
                    spec.disruptions = outages.clone();
                }
                spec
            })
            .collect()
    }

    /// Queue parameters of the B ingress for the configured links and flows.
    pub fn queue_params(&self, packet_bytes: f64) -> QueueParams {
        let (ab, ba) = (self.link(Node::A, Node::B), self.link(Node::B, Node::A));
        let (bc, cb) = (self.link(Node::B, Node::C), self.link(Node::C, Node::B));
        QueueParams {
            bw_in: ab.bandwidth,
            bw_out: bc.bandwidth,
            rtt_in: ab.owd + ba.owd,
            rtt_out: bc.owd + cb.owd,
            n_streams: self.flow.count as u32,
            k_bytes: 0.0,
            packet_bytes,
        }
    }

    /// Per-stream backpressure window in bytes.
    pub fn window_bytes(&self) -> usize {
        match self.buffer.window {
            Some(w) => w as usize,
            None => (k_opt(&self.queue_params(1500.0)).round() as usize).max(1),
        }
    }

    /// Round trip over the proxy tunnel (pepspace) or end to end (raw-endpoint).
    pub fn tunnel_rtt(&self) -> f64 {
        let bc = self.link(Node::B, Node::C).owd + self.link(Node::C, Node::B).owd;
        match self.scheme {
            Scheme::Pepspace => bc,
            Scheme::RawEndpoint => {
                bc + self.link(Node::A, Node::B).owd
                    + self.link(Node::B, Node::A).owd
                    + self.link(Node::C, Node::D).owd
                    + self.link(Node::D, Node::C).owd
            }
        }
    }
}
