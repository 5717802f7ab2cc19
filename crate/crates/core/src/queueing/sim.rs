use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{rho, QueueError, QueueParams};

const BATCHES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalProcess {
    /// Poisson arrivals at rate ρ·μ; arrivals to a full buffer are blocked.
    Poisson,
    /// Closed loop: the source holds K credits, sends at the ingress peak rate
    /// while it has one, and a credit returns RTT_in after its packet departs.
    DeterministicWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceProcess {
    Exponential,
    Deterministic,
}

/// Time-average estimates with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueEstimate {
    pub p0: f64,
    pub u: f64,
    pub l: f64,
    /// Mean sojourn of served packets, seconds.
    pub w: f64,
    pub blocking: f64,
    pub u_se: f64,
    pub l_se: f64,
    pub w_se: f64,
    pub blocking_se: f64,
    pub arrivals: u64,
    pub departures: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Totals {
    time: f64,
    busy: f64,
    area: f64,
    arrivals: u64,
    blocked: u64,
    departures: u64,
    sojourn: f64,
}

fn mean_se(xs: &[f64], floor: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt().max(floor))
}

/// Event-driven single-server queue with `K` slots counted over `n_events`
/// arrivals after a warm-up of `n_events / 10` arrivals.
pub fn simulate_queue(
    arrival: ArrivalProcess,
    service: ServiceProcess,
    params: &QueueParams,
    n_events: u64,
    seed: u64,
) -> Result<QueueEstimate, QueueError> {
    params.validate()?;
    if n_events < 10_000 {
        return Err(QueueError::Invalid(format!("n_events = {n_events}, need at least 10^4")));
    }
    let k = params.k_slots() as usize;
    let mu = params.mu();
    let lambda = rho(params) * mu;
    let peak_gap = params.packet_bytes * 8.0 * params.n_streams as f64 / params.bw_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inter = Exp::new(lambda).map_err(|e| QueueError::Invalid(e.to_string()))?;
    let serve = Exp::new(mu).map_err(|e| QueueError::Invalid(e.to_string()))?;
    let service_time = |rng: &mut ChaCha8Rng| match service {
        ServiceProcess::Exponential => serve.sample(rng),
        ServiceProcess::Deterministic => 1.0 / mu,
    };

    let warmup = n_events / 10;
    let batch_len = n_events / BATCHES as u64;
    let total_arrivals = warmup + batch_len * BATCHES as u64;

    let mut tot = Totals::default();
    let mut marks: Vec<Totals> = Vec::with_capacity(BATCHES + 1);
    let mut t = 0.0f64;
    let mut in_system: VecDeque<f64> = VecDeque::with_capacity(k);
    let mut departure: Option<f64> = None;
    let mut next_poisson = inter.sample(&mut rng);
    let mut credits = k;
    let mut returns: VecDeque<f64> = VecDeque::new();
    let mut last_arrival = f64::NEG_INFINITY;

    while tot.arrivals < total_arrivals {
        let next_arrival = match arrival {
            ArrivalProcess::Poisson => next_poisson,
            ArrivalProcess::DeterministicWindow if credits > 0 => (last_arrival + peak_gap).max(t),
            ArrivalProcess::DeterministicWindow => f64::INFINITY,
        };
        let next_dep = departure.unwrap_or(f64::INFINITY);
        let next_credit = returns.front().copied().unwrap_or(f64::INFINITY);
        let now = next_arrival.min(next_dep).min(next_credit);
        let dt = now - t;
        tot.time += dt;
        if !in_system.is_empty() {
            tot.busy += dt;
        }
        tot.area += in_system.len() as f64 * dt;
        t = now;

        if next_credit <= now {
            returns.pop_front();
            credits += 1;
        } else if next_dep <= now {
            let a = in_system.pop_front().expect("departure from empty queue");
            tot.departures += 1;
            tot.sojourn += t - a;
            departure = if in_system.is_empty() { None } else { Some(t + service_time(&mut rng)) };
            if arrival == ArrivalProcess::DeterministicWindow {
                returns.push_back(t + params.rtt_in);
            }
        } else {
            tot.arrivals += 1;
            if in_system.len() >= k {
                tot.blocked += 1;
            } else {
                in_system.push_back(t);
                if departure.is_none() {
                    departure = Some(t + service_time(&mut rng));
                }
            }
            match arrival {
                ArrivalProcess::Poisson => next_poisson = t + inter.sample(&mut rng),
                ArrivalProcess::DeterministicWindow => {
                    credits -= 1;
                    last_arrival = t;
                }
            }
            if tot.arrivals >= warmup && (tot.arrivals - warmup) % batch_len == 0 {
                marks.push(tot);
            }
        }
    }

    let floor = 1.0 / n_events as f64;
    let mut u = Vec::with_capacity(BATCHES);
    let mut l = Vec::with_capacity(BATCHES);
    let mut w = Vec::with_capacity(BATCHES);
    let mut b = Vec::with_capacity(BATCHES);
    for pair in marks.windows(2) {
        let (a, z) = (pair[0], pair[1]);
        let dt = z.time - a.time;
        u.push((z.busy - a.busy) / dt);
        l.push((z.area - a.area) / dt);
        let deps = z.departures - a.departures;
        w.push(if deps == 0 { 0.0 } else { (z.sojourn - a.sojourn) / deps as f64 });
        b.push((z.blocked - a.blocked) as f64 / (z.arrivals - a.arrivals) as f64);
    }
    let (first, last) = (marks[0], marks[marks.len() - 1]);
    let span = last.time - first.time;
    let u_mean = (last.busy - first.busy) / span;
    let deps = last.departures - first.departures;
    Ok(QueueEstimate {
        p0: 1.0 - u_mean,
        u: u_mean,
        l: (last.area - first.area) / span,
        w: (last.sojourn - first.sojourn) / deps.max(1) as f64,
        blocking: (last.blocked - first.blocked) as f64 / (last.arrivals - first.arrivals) as f64,
        u_se: mean_se(&u, floor).1,
        l_se: mean_se(&l, floor).1,
        w_se: mean_se(&w, floor / mu).1,
        blocking_se: mean_se(&b, floor).1,
        arrivals: last.arrivals - first.arrivals,
        departures: deps,
    })
}
