use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

/// `8 · bytes / t_r` in bits/s.
pub fn goodput(bytes: u64, t_r: f64) -> Result<f64, MetricError> {
    if !(t_r > 0.0) {
        return Err(MetricError::Undefined("goodput needs t_r > 0"));
    }
    Ok(8.0 * bytes as f64 / t_r)
}

/// Coefficient of variation, population standard deviation over the mean.
pub fn cov(series: &[f64]) -> Result<f64, MetricError> {
    if series.len() < 2 {
        return Err(MetricError::Undefined("CoV needs at least two windows"));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(MetricError::Undefined("CoV of a zero-mean series"));
    }
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

pub fn jain(values: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() || values.iter().any(|&v| v < 0.0) {
        return Err(MetricError::Undefined("Jain index needs non-negative values"));
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Err(MetricError::Undefined("Jain index of all-zero values"));
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}

/// Mean per-window Jain index over aligned per-flow series, skipping windows
/// where every flow is zero.
pub fn sfi(per_flow: &[Vec<f64>]) -> Result<f64, MetricError> {
    let windows = per_flow.iter().map(Vec::len).min().unwrap_or(0);
    if per_flow.iter().any(|s| s.len() != windows) {
        return Err(MetricError::Undefined("SFI series are not aligned"));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    let mut column = Vec::with_capacity(per_flow.len());
    for w in 0..windows {
        column.clear();
        column.extend(per_flow.iter().map(|s| s[w]));
        if let Ok(j) = jain(&column) {
            total += j;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::Undefined("SFI with no active window"));
    }
    Ok(total / n as f64)
}

/// Bits/s per 1-s window `[start + k, start + k + 1)` for `k < windows`.
pub fn window_series(deliveries: &[(u64, u64)], start_s: u64, windows: usize) -> Vec<f64> {
    let mut out = vec![0.0; windows];
    for &(t_us, bytes) in deliveries {
        let Some(k) = (t_us / 1_000_000).checked_sub(start_s) else { continue };
        if let Some(slot) = out.get_mut(k as usize) {
            *slot += 8.0 * bytes as f64;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn summarize(xs: &[f64]) -> Distribution {
    if xs.is_empty() {
        return Distribution { count: 0, mean: f64::NAN, median: f64::NAN, p99: f64::NAN, min: f64::NAN, max: f64::NAN };
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Distribution {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: median(&v),
        p99: quantile(&v, 0.99),
        min: v[0],
        max: v[v.len() - 1],
    }
}
