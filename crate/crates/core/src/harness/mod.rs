//! Experiment runner: wires the endpoints, proxies and simulator for one
//! scenario, computes the metrics and writes the CSV artifacts.

pub mod config;
pub mod metrics;
pub mod world;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ConfigError, ScenarioConfig, Scheme, TraceMode};
pub use metrics::{Distribution, MetricError};
pub use world::{OpacityScan, Sample, PLAINTEXT_MARKER};

use crate::netsim::{CsvTrace, HashTrace, LinkCounters, Node, NullTrace, Simulator, TraceSink};
use world::{stream_len, RunError, World};

const US: f64 = 1e6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("invariant violation in scenario '{scenario}': {msg}")]
    Invariant { scenario: String, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl HarnessError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 3,
            HarnessError::Invariant { .. } | HarnessError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// One tunnel chunk as seen by the observer. Times are microseconds from the
/// start of the transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineRecord {
    pub flow: usize,
    /// Offset in the flow's byte stream.
    pub offset: u64,
    pub len: u64,
    pub t_send_us: u64,
    pub t_arrive_us: u64,
    pub t_inorder_us: u64,
}

impl TimelineRecord {
    pub fn owd_s(&self) -> f64 {
        (self.t_arrive_us - self.t_send_us) as f64 / US
    }

    pub fn in_order_delay_s(&self) -> f64 {
        (self.t_inorder_us - self.t_send_us) as f64 / US
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Artifact directory; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Scan proxy memory for plaintext markers once per second.
    pub opacity_scan: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scenario: String,
    pub scheme: Scheme,
    pub seed: u64,
    pub flows: usize,
    /// In-order bytes per flow, ALDE framing included.
    pub bytes: Vec<u64>,
    pub verified_plaintext: Vec<u64>,
    pub completion_s: Vec<f64>,
    pub last_completion_s: f64,
    pub goodput_bps: f64,
    pub flow_goodput_bps: Vec<f64>,
    /// First 1-s observation window, seconds from the transfer start.
    pub window_start_s: u64,
    pub goodput_series_bps: Vec<f64>,
    pub flow_series_bps: Vec<Vec<f64>>,
    pub cov: Option<f64>,
    pub jain: Option<f64>,
    pub sfi: Option<f64>,
    pub owd: Distribution,
    pub in_order_delay: Distribution,
    /// Longest gap between consecutive in-order deliveries.
    pub plateau_s: f64,
    pub recovery_span_median: Option<f64>,
    pub recovered: u64,
    pub losses_detected: u64,
    pub useless_repairs: u64,
    pub dependent_repairs: u64,
    pub stale_repairs: u64,
    pub max_dw_width: u64,
    pub max_decoder_buffered: usize,
    pub n_source: u64,
    pub n_repair: u64,
    pub n_tail: u64,
    pub redundancy_ratio: f64,
    pub p_e_max: f64,
    pub delta: f64,
    pub backpressure_stalls: u64,
    pub tunnel: LinkCounters,
    pub tunnel_capacity_bps: f64,
    pub gateway_high_water: usize,
    pub opacity: OpacityScan,
    pub events: u64,
}

impl MetricsReport {
    pub fn cov_percent(&self) -> Option<f64> {
        self.cov.map(|c| 100.0 * c)
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| rows.push((k.to_string(), v));
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        put("scenario", self.scenario.clone());
        put("scheme", self.scheme.as_str().into());
        put("seed", self.seed.to_string());
        put("flows", self.flows.to_string());
        put("bytes_total", self.bytes.iter().sum::<u64>().to_string());
        put("last_completion_s", self.last_completion_s.to_string());
        put("goodput_bps", self.goodput_bps.to_string());
        put("cov", opt(self.cov));
        put("cov_x100", opt(self.cov_percent()));
        put("jain", opt(self.jain));
        put("sfi", opt(self.sfi));
        for (name, d) in [("owd", &self.owd), ("in_order_delay", &self.in_order_delay)] {
            put(&format!("{name}_mean_s"), d.mean.to_string());
            put(&format!("{name}_median_s"), d.median.to_string());
            put(&format!("{name}_p99_s"), d.p99.to_string());
            put(&format!("{name}_max_s"), d.max.to_string());
        }
        put("plateau_s", self.plateau_s.to_string());
        put("recovery_span_median", opt(self.recovery_span_median));
        put("recovered", self.recovered.to_string());
        put("losses_detected", self.losses_detected.to_string());
        put("useless_repairs", self.useless_repairs.to_string());
        put("dependent_repairs", self.dependent_repairs.to_string());
        put("stale_repairs", self.stale_repairs.to_string());
        put("max_dw_width", self.max_dw_width.to_string());
        put("max_decoder_buffered", self.max_decoder_buffered.to_string());
        put("n_source", self.n_source.to_string());
        put("n_repair", self.n_repair.to_string());
        put("n_tail", self.n_tail.to_string());
        put("redundancy_ratio", self.redundancy_ratio.to_string());
        put("p_e_max", self.p_e_max.to_string());
        put("backpressure_stalls", self.backpressure_stalls.to_string());
        put("tunnel_sent", self.tunnel.sent.to_string());
        put("tunnel_lost", self.tunnel.lost.to_string());
        put("tunnel_held", self.tunnel.held.to_string());
        put("gateway_high_water", self.gateway_high_water.to_string());
        put("opacity_snapshots", self.opacity.snapshots.to_string());
        put("opacity_hits", self.opacity.hits.to_string());
        put("events", self.events.to_string());
        for (i, (c, g)) in self.completion_s.iter().zip(&self.flow_goodput_bps).enumerate() {
            put(&format!("flow{i}_completion_s"), c.to_string());
            put(&format!("flow{i}_goodput_bps"), g.to_string());
        }
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    /// Rates and indices inside their defined ranges.
    pub fn check(&self) -> Result<(), String> {
        if self.goodput_bps > self.tunnel_capacity_bps * (1.0 + 1e-9) {
            return Err(format!("goodput {} exceeds capacity {}", self.goodput_bps, self.tunnel_capacity_bps));
        }
        for (name, v) in [("jain", self.jain), ("sfi", self.sfi)] {
            if let Some(v) = v {
                if !(v > 0.0 && v <= 1.0 + 1e-12) {
                    return Err(format!("{name} = {v} outside (0, 1]"));
                }
            }
        }
        if self.cov.is_some_and(|c| c < 0.0) {
            return Err("negative CoV".into());
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub report: MetricsReport,
    pub timeline: Vec<TimelineRecord>,
    pub samples: Vec<Sample>,
    pub recovery_spans: Vec<u64>,
    pub trace_digest: Option<String>,
}

impl RunResult {
    pub fn timeline_csv(&self) -> String {
        timeline_csv(&self.timeline)
    }

    pub fn series_csv(&self) -> String {
        let mut out = String::from("t_us,dw_width,decoder_buffered,p_e,redundancy,bytes_in_flight,gateway_bytes\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.t_us, s.dw_width, s.decoder_buffered, s.p_e, s.redundancy, s.bytes_in_flight, s.gateway_bytes
            );
        }
        out
    }

    pub fn goodput_csv(&self) -> String {
        let r = &self.report;
        let mut out = String::from("window_start_s,aggregate_bps");
        for i in 0..r.flows {
            let _ = write!(out, ",flow{i}_bps");
        }
        out.push('\n');
        for (k, g) in r.goodput_series_bps.iter().enumerate() {
            let _ = write!(out, "{},{}", r.window_start_s + k as u64, g);
            for f in &r.flow_series_bps {
                let _ = write!(out, ",{}", f[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn meta_toml(&self) -> String {
        let mut doc = toml::Table::new();
        doc.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        doc.insert("seed".into(), toml::Value::Integer(self.config.seed as i64));
        if let Some(d) = &self.trace_digest {
            doc.insert("trace_sha256".into(), d.as_str().into());
        }
        let scenario = toml::Value::try_from(&self.config).expect("scenario config serializes");
        doc.insert("scenario".into(), scenario);
        toml::to_string(&doc).expect("run metadata serializes")
    }
}

pub const TIMELINE_HEADER: &str = "flow,offset,len,t_send_us,t_arrive_us,t_inorder_us";

pub fn timeline_csv(timeline: &[TimelineRecord]) -> String {
    let mut out = String::with_capacity(48 * timeline.len() + 64);
    out.push_str(TIMELINE_HEADER);
    out.push('\n');
    for r in timeline {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.flow, r.offset, r.len, r.t_send_us, r.t_arrive_us, r.t_inorder_us);
    }
    out
}

/// Parses a `timeline.csv` back into records.
pub fn parse_timeline(text: &str) -> Result<Vec<TimelineRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TIMELINE_HEADER) {
        return Err("missing timeline header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<u64> = line
                .split(',')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", i + 2));
            }
            Ok(TimelineRecord {
                flow: f[0] as usize,
                offset: f[1],
                len: f[2],
                t_send_us: f[3],
                t_arrive_us: f[4],
                t_inorder_us: f[5],
            })
        })
        .collect()
}

fn trace_sink(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Box<dyn TraceSink>, HarnessError> {
    Ok(match (cfg.trace, &opts.out_dir) {
        (TraceMode::None, _) => Box::new(NullTrace),
        (TraceMode::Full, Some(dir)) => {
            let path = dir.join("trace.csv");
            let f = File::create(&path).map_err(io_err(&path))?;
            Box::new(CsvTrace::new(BufWriter::new(f)).map_err(io_err(&path))?)
        }
        _ => Box::new(HashTrace::new()),
    })
}

/// Runs one scenario and, when `opts.out_dir` is set, writes `report.csv`,
/// `timeline.csv`, `goodput.csv`, `series.csv`, `trace.csv` (full trace mode)
/// and `run_meta.toml`.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let invariant = |msg: String| HarnessError::Invariant { scenario: cfg.name.clone(), msg };
    let sink = trace_sink(cfg, opts)?;
    let mut sim = Simulator::new(cfg.link_specs(), cfg.seed, sink).map_err(|e| invariant(e.to_string()))?;
    if cfg.buffer.gateway {
        sim.enable_gateway(Node::B, Node::C, cfg.buffer.capacity as usize).map_err(|e| invariant(e.to_string()))?;
    }
    let mut world = World::new(cfg, opts.opacity_scan);
    world.start(&mut sim);
    let horizon = crate::netsim::secs_to_us(cfg.horizon);
    sim.run(&mut world, Some(horizon)).map_err(|e: RunError| invariant(e.to_string()))?;
    if world.completion_us.iter().any(Option::is_none) {
        let done = world.completion_us.iter().filter(|c| c.is_some()).count();
        return Err(invariant(format!(
            "{done} of {} flows completed by the {} s horizon",
            world.completion_us.len(),
            cfg.horizon
        )));
    }
    let report = compute_report(cfg, &world, &sim).map_err(invariant)?;
    report.check().map_err(invariant)?;
    let recovery_spans = world.receiver().decoder.stats().recovery_spans.clone();
    let mut trace = sim.into_trace();
    trace.flush().map_err(|e| invariant(format!("trace flush: {e}")))?;
    let result = RunResult {
        config: cfg.clone(),
        report,
        timeline: std::mem::take(&mut world.timeline),
        samples: std::mem::take(&mut world.samples),
        recovery_spans,
        trace_digest: trace.digest(),
    };
    if let Some(dir) = &opts.out_dir {
        write_artifacts(dir, &result)?;
    }
    Ok(result)
}

/// Parses a scenario file, applies the seed override and runs it.
pub fn run_experiment(path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<RunResult, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run_scenario(&cfg, &RunOptions { out_dir: Some(out_dir.to_path_buf()), opacity_scan: false })
}

fn write_artifacts(dir: &Path, r: &RunResult) -> Result<(), HarnessError> {
    let files = [
        ("report.csv", r.report.to_csv()),
        ("timeline.csv", r.timeline_csv()),
        ("goodput.csv", r.goodput_csv()),
        ("series.csv", r.series_csv()),
        ("run_meta.toml", r.meta_toml()),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        let mut f = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(io_err(&path))?;
    }
    Ok(())
}

fn compute_report(cfg: &ScenarioConfig, world: &World, sim: &Simulator) -> Result<MetricsReport, String> {
    let n = cfg.flow.count;
    let timeline = &world.timeline;
    for r in timeline {
        if !(r.t_send_us <= r.t_arrive_us && r.t_arrive_us <= r.t_inorder_us) {
            return Err(format!("timeline order violated: {r:?}"));
        }
    }
    let completion_us: Vec<u64> = world.completion_us.iter().map(|c| c.expect("all flows complete")).collect();
    let completion_s: Vec<f64> = completion_us.iter().map(|&c| c as f64 / US).collect();
    let last_us = *completion_us.iter().max().ok_or("no flows")?;
    let first_done_us = *completion_us.iter().min().ok_or("no flows")?;

    let mut bytes = vec![0u64; n];
    let mut at_first_done = vec![0u64; n];
    let mut per_flow: Vec<Vec<(u64, u64)>> = vec![Vec::new(); n];
    let mut all: Vec<(u64, u64)> = Vec::with_capacity(timeline.len());
    for r in timeline {
        bytes[r.flow] += r.len;
        if r.t_inorder_us <= first_done_us {
            at_first_done[r.flow] += r.len;
        }
        per_flow[r.flow].push((r.t_inorder_us, r.len));
        all.push((r.t_inorder_us, r.len));
    }
    let expected = stream_len(cfg.flow.size);
    if let Some(f) = bytes.iter().position(|&b| b != expected) {
        return Err(format!("flow {f} delivered {} of {expected} bytes", bytes[f]));
    }

    let total: u64 = bytes.iter().sum();
    let goodput_bps = metrics::goodput(total, last_us as f64 / US).map_err(|e| e.to_string())?;
    let flow_goodput_bps = bytes
        .iter()
        .zip(&completion_s)
        .map(|(&b, &t)| metrics::goodput(b, t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;

    let first_delivery = all.iter().map(|&(t, _)| t).min().unwrap_or(0);
    let window_start_s = first_delivery.div_ceil(1_000_000);
    let windows = (last_us / 1_000_000).saturating_sub(window_start_s) as usize;
    let goodput_series_bps = metrics::window_series(&all, window_start_s, windows);
    let flow_series_bps: Vec<Vec<f64>> =
        per_flow.iter().map(|d| metrics::window_series(d, window_start_s, windows)).collect();
    let cov = metrics::cov(&goodput_series_bps).ok();
    let jain = if n > 1 {
        let t = first_done_us as f64 / US;
        let shares: Vec<f64> = at_first_done.iter().map(|&b| 8.0 * b as f64 / t).collect();
        metrics::jain(&shares).ok()
    } else {
        None
    };
    let sfi = if n > 1 { metrics::sfi(&flow_series_bps).ok() } else { None };

    let owd: Vec<f64> = timeline.iter().map(TimelineRecord::owd_s).collect();
    let in_order: Vec<f64> = timeline.iter().map(TimelineRecord::in_order_delay_s).collect();
    let mut deliveries: Vec<u64> = all.iter().map(|&(t, _)| t).collect();
    deliveries.sort_unstable();
    let plateau_us = deliveries.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);

    let stats = world.receiver().decoder.stats();
    let spans: Vec<f64> = stats.recovery_spans.iter().map(|&s| s as f64).collect();
    let enc = &world.sender().encoder;
    let bc = sim.counters(Node::B, Node::C).map_err(|e| e.to_string())?;
    Ok(MetricsReport {
        scenario: cfg.name.clone(),
        scheme: cfg.scheme,
        seed: cfg.seed,
        flows: n,
        bytes,
        verified_plaintext: world.verified_plaintext.clone(),
        completion_s,
        last_completion_s: last_us as f64 / US,
        goodput_bps,
        flow_goodput_bps,
        window_start_s,
        goodput_series_bps,
        flow_series_bps,
        cov,
        jain,
        sfi,
        owd: metrics::summarize(&owd),
        in_order_delay: metrics::summarize(&in_order),
        plateau_s: plateau_us as f64 / US,
        recovery_span_median: (!spans.is_empty()).then(|| metrics::median(&spans)),
        recovered: stats.recovered,
        losses_detected: stats.losses_detected,
        useless_repairs: stats.useless_repairs,
        dependent_repairs: stats.dependent_repairs,
        stale_repairs: stats.stale_repairs,
        max_dw_width: world.samples.iter().map(|s| s.dw_width).max().unwrap_or(0),
        max_decoder_buffered: stats.max_buffered,
        n_source: enc.n_source(),
        n_repair: enc.n_repair(),
        n_tail: enc.n_tail(),
        redundancy_ratio: enc.redundancy_ratio(),
        p_e_max: enc.p_e_max(),
        delta: enc.delta(),
        backpressure_stalls: world.backpressure_stalls(),
        tunnel: bc,
        tunnel_capacity_bps: cfg.link(Node::B, Node::C).bandwidth,
        gateway_high_water: sim.gateway(Node::B, Node::C).map_or(0, |g| g.high_water()),
        opacity: world.opacity,
        events: sim.events_processed(),
    })
}
