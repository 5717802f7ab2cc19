//! Finite-buffer queue models for the proxy's per-stream backpressure buffer.
//!
//! Each stream is a single-server queue with `K` slots. Service rate is the
//! stream's fair share of the egress link and arrivals are bounded by both the
//! ingress share and the flow-control window per ingress RTT.

mod sim;
mod sweep;

pub use sim::{simulate_queue, ArrivalProcess, QueueEstimate, ServiceProcess};
pub use sweep::{run_sweep, Sweep, SweepModel};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    #[error("invalid queue parameter: {0}")]
    Invalid(String),
    #[error("probability for state {n} is {value:e}, below the stability threshold")]
    NumericInstability { n: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    /// Ingress bandwidth, bits/s.
    pub bw_in: f64,
    /// Egress bandwidth, bits/s.
    pub bw_out: f64,
    /// Ingress RTT, seconds.
    pub rtt_in: f64,
    /// Egress RTT, seconds. Not used by any model.
    pub rtt_out: f64,
    pub n_streams: u32,
    /// Per-stream flow-control buffer, bytes.
    pub k_bytes: f64,
    /// Bytes per queue slot.
    pub packet_bytes: f64,
}

impl QueueParams {
    /// Parameters whose load is `rho` with `k` slots of 1250 B and μ = 1000/s.
    /// The window term is made large so the ingress share sets the load.
    pub fn with_load(rho: f64, k: u32) -> Self {
        let bw_out = 1e7;
        Self {
            bw_in: rho * bw_out,
            bw_out,
            rtt_in: 1e-9,
            rtt_out: 0.0,
            n_streams: 1,
            k_bytes: k as f64 * 1250.0,
            packet_bytes: 1250.0,
        }
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(QueueError::Invalid(format!("{name} = {v}")))
            }
        };
        pos(self.bw_in, "bw_in")?;
        pos(self.bw_out, "bw_out")?;
        pos(self.rtt_in, "rtt_in")?;
        pos(self.k_bytes, "k_bytes")?;
        pos(self.packet_bytes, "packet_bytes")?;
        if !(self.rtt_out >= 0.0) {
            return Err(QueueError::Invalid(format!("rtt_out = {}", self.rtt_out)));
        }
        if self.n_streams == 0 {
            return Err(QueueError::Invalid("n_streams = 0".into()));
        }
        if self.k_slots() == 0 {
            return Err(QueueError::Invalid("buffer smaller than one slot".into()));
        }
        Ok(())
    }

    /// Buffer size in slots.
    pub fn k_slots(&self) -> u32 {
        (self.k_bytes / self.packet_bytes + 1e-9).floor() as u32
    }

    /// Per-stream service rate, slots/s.
    pub fn mu(&self) -> f64 {
        self.bw_out / self.n_streams as f64 / (self.packet_bytes * 8.0)
    }
}

/// System load `min(B_in/B_out, K·N/(B_out·RTT_in))` with K in bits.
pub fn rho(p: &QueueParams) -> f64 {
    let share = p.bw_in / p.bw_out;
    let window = p.k_bytes * 8.0 * p.n_streams as f64 / (p.bw_out * p.rtt_in);
    share.min(window)
}

/// Buffer that puts the queue at critical load, in bytes.
pub fn k_opt(p: &QueueParams) -> f64 {
    p.bw_out * p.rtt_in / p.n_streams as f64 / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MM1KResult {
    pub rho: f64,
    pub k: u32,
    pub p0: f64,
    pub u: f64,
    pub l: f64,
    /// Mean sojourn of admitted arrivals, seconds.
    pub w: f64,
    /// Sojourn at ρ = 1, `(K+1)/(2μ)`.
    pub w_critical: f64,
}

pub fn mm1k(p: &QueueParams) -> Result<MM1KResult, QueueError> {
    p.validate()?;
    Ok(mm1k_at(rho(p), p.k_slots(), p.mu()))
}

pub fn mm1k_at(rho: f64, k: u32, mu: f64) -> MM1KResult {
    let kf = k as f64;
    let w_critical = (kf + 1.0) / (2.0 * mu);
    if rho == 1.0 {
        let p0 = 1.0 / (kf + 1.0);
        return MM1KResult { rho, k, p0, u: 1.0 - p0, l: kf / 2.0, w: w_critical, w_critical };
    }
    let rk1 = rho.powi(k as i32 + 1);
    let p0 = (1.0 - rho) / (1.0 - rk1);
    let u = 1.0 - p0;
    let l = rho / (1.0 - rho) - (kf + 1.0) * rk1 / (1.0 - rk1);
    let p_k = p0 * rho.powi(k as i32);
    let w = l / (rho * mu * (1.0 - p_k));
    MM1KResult { rho, k, p0, u, l, w, w_critical }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MD1KResult {
    pub rho: f64,
    pub k: u32,
    pub pi: Vec<f64>,
    pub c: f64,
    pub u: f64,
    pub l: f64,
    pub w: f64,
}

impl MD1KResult {
    pub fn p0(&self) -> f64 {
        self.pi[0]
    }
}

pub fn md1k(p: &QueueParams) -> Result<MD1KResult, QueueError> {
    p.validate()?;
    md1k_at(rho(p), p.k_slots(), p.mu())
}

#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Closed-form M/D/1/K probabilities
/// `π_n = C·(ρ^n/n!)·Σ_{j=0}^{K-n} (-ρ)^j/j!`.
///
/// Powers over factorials are built by running products, so no factorial is
/// ever formed.
pub fn md1k_at(rho: f64, k: u32, mu: f64) -> Result<MD1KResult, QueueError> {
    if !(rho > 0.0) || k == 0 {
        return Err(QueueError::Invalid(format!("rho = {rho}, k = {k}")));
    }
    let k = k as usize;
    // partial[m] = Σ_{j=0}^{m} (-ρ)^j/j!
    let mut partial = Vec::with_capacity(k + 1);
    let mut acc = Kahan::default();
    let mut term = 1.0;
    for j in 0..=k {
        if j > 0 {
            term *= -rho / j as f64;
        }
        acc.add(term);
        partial.push(acc.sum);
    }
    let mut raw = Vec::with_capacity(k + 1);
    let mut head = 1.0;
    let mut norm = Kahan::default();
    for n in 0..=k {
        if n > 0 {
            head *= rho / n as f64;
        }
        let v = head * partial[k - n];
        norm.add(v);
        raw.push(v);
    }
    let c = 1.0 / norm.sum;
    let mut pi = Vec::with_capacity(k + 1);
    for (n, v) in raw.into_iter().enumerate() {
        let x = c * v;
        if x < -1e-9 {
            return Err(QueueError::NumericInstability { n, value: x });
        }
        pi.push(x.max(0.0));
    }
    let mut l = Kahan::default();
    for (n, x) in pi.iter().enumerate() {
        l.add(n as f64 * x);
    }
    let w = l.sum / (rho * mu * (1.0 - pi[k]));
    Ok(MD1KResult { rho, k: k as u32, u: 1.0 - pi[0], pi, c, l: l.sum, w })
}
