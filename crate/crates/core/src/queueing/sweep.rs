//! Parameter sweeps for the `queue-model` command.
//!
//! A sweep file is TOML. Either give a load grid:
//!
//! ```toml
//! model = "mm1k"
//! rho = [0.25, 0.5, 1.0]
//! k = [1, 2, 5]
//! mu = 1000.0
//! ```
//!
//! or a link and a list of buffer sizes in bytes:
//!
//! ```toml
//! model = "md1k"
//! k_bytes = [1000, 1500, 2500, 30000, 60000]
//!
//! [link]
//! bw_in = 200e6
//! bw_out = 10e6
//! rtt_in = 0.02
//! rtt_out = 4.02
//! n_streams = 10
//! packet_bytes = 500
//! ```
//!
//! `model = "simulate"` runs the event-driven oracle instead, with optional
//! `service` (`exponential` or `deterministic`), `events` and `seed`.

use serde::Deserialize;

use super::{md1k_at, mm1k_at, rho, simulate_queue, ArrivalProcess, QueueError, QueueParams, ServiceProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepModel {
    Mm1k,
    Md1k,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SweepService {
    #[default]
    Exponential,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepLink {
    pub bw_in: f64,
    pub bw_out: f64,
    pub rtt_in: f64,
    #[serde(default)]
    pub rtt_out: f64,
    pub n_streams: u32,
    pub packet_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub model: SweepModel,
    pub rho: Option<Vec<f64>>,
    pub k: Option<Vec<u32>>,
    pub mu: Option<f64>,
    pub link: Option<SweepLink>,
    pub k_bytes: Option<Vec<f64>>,
    #[serde(default)]
    pub service: SweepService,
    pub events: Option<u64>,
    pub seed: Option<u64>,
}

impl Sweep {
    pub fn parse(text: &str) -> Result<Sweep, QueueError> {
        toml::from_str(text).map_err(|e| QueueError::Invalid(e.to_string()))
    }

    fn points(&self) -> Result<Vec<QueueParams>, QueueError> {
        match (&self.rho, &self.k, &self.link, &self.k_bytes) {
            (Some(rhos), Some(ks), None, None) => {
                let mu = self.mu.unwrap_or(1000.0);
                if !(mu > 0.0) {
                    return Err(QueueError::Invalid(format!("mu = {mu}")));
                }
                let mut out = Vec::new();
                for &r in rhos {
                    for &k in ks {
                        let mut p = QueueParams::with_load(r, k);
                        p.packet_bytes = p.bw_out / (8.0 * mu);
                        p.k_bytes = k as f64 * p.packet_bytes;
                        p.validate()?;
                        out.push(p);
                    }
                }
                Ok(out)
            }
            (None, None, Some(l), Some(kb)) => kb
                .iter()
                .map(|&k_bytes| {
                    let p = QueueParams {
                        bw_in: l.bw_in,
                        bw_out: l.bw_out,
                        rtt_in: l.rtt_in,
                        rtt_out: l.rtt_out,
                        n_streams: l.n_streams,
                        k_bytes,
                        packet_bytes: l.packet_bytes,
                    };
                    p.validate().map(|_| p)
                })
                .collect(),
            _ => Err(QueueError::Invalid("give either rho + k, or [link] + k_bytes".into())),
        }
    }
}

/// Evaluates the sweep into CSV with columns `rho,K,p0,U,L,W`.
pub fn run_sweep(sweep: &Sweep) -> Result<String, QueueError> {
    let mut out = String::new();
    if sweep.model == SweepModel::Md1k {
        out.push_str("# md1k: closed-form state probabilities; not a time average, compare with model = \"simulate\"\n");
    }
    out.push_str("rho,K,p0,U,L,W\n");
    for p in sweep.points()? {
        let (r, k, mu) = (rho(&p), p.k_slots(), p.mu());
        let row = match sweep.model {
            SweepModel::Mm1k => {
                let m = mm1k_at(r, k, mu);
                Some((m.p0, m.u, m.l, m.w))
            }
            SweepModel::Md1k => match md1k_at(r, k, mu) {
                Ok(m) => Some((m.p0(), m.u, m.l, m.w)),
                Err(QueueError::NumericInstability { .. }) => None,
                Err(e) => return Err(e),
            },
            SweepModel::Simulate => {
                let service = match sweep.service {
                    SweepService::Exponential => ServiceProcess::Exponential,
                    SweepService::Deterministic => ServiceProcess::Deterministic,
                };
                let e = simulate_queue(
                    ArrivalProcess::Poisson,
                    service,
                    &p,
                    sweep.events.unwrap_or(100_000),
                    sweep.seed.unwrap_or(1),
                )?;
                Some((e.p0, e.u, e.l, e.w))
            }
        };
        match row {
            Some((p0, u, l, w)) => out.push_str(&format!("{r},{k},{p0:.6},{u:.6},{l:.6},{w:.6}\n")),
            None => out.push_str(&format!("{r},{k},nan,nan,nan,nan\n")),
        }
    }
    Ok(out)
}
