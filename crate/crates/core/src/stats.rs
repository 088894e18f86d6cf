//! Summary statistics and goodness-of-fit measures.

use serde::{Deserialize, Serialize};

use crate::special::stable_sum;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    stable_sum(x.iter().copied()) / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    stable_sum(x.iter().map(|v| (v - m) * (v - m))) / (x.len() - 1) as f64
}

/// Sample standard deviation over `sqrt(n)`.
pub fn standard_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Unbiased sample covariance.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "covariance needs paired samples");
    if x.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(x), mean(y));
    stable_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my))) / (x.len() - 1) as f64
}

/// Mean with a batch-means standard error for correlated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub se: f64,
    /// Effective sample size `n · var / (n · se²)`.
    pub ess: f64,
    pub n: usize,
    pub batches: usize,
}

/// Split into `batches` contiguous batches (remainder dropped from the
/// front) and use the spread of batch means as the error estimate.
pub fn batch_means(x: &[f64], batches: usize) -> BatchMeans {
    let n = x.len();
    let batches = batches.clamp(2, n.max(2));
    let size = n / batches;
    if size == 0 {
        return BatchMeans { mean: mean(x), se: f64::NAN, ess: f64::NAN, n, batches };
    }
    let tail = &x[n - size * batches..];
    let bm: Vec<f64> = tail.chunks(size).map(mean).collect();
    let se = (variance(&bm) / batches as f64).sqrt();
    let var = variance(x);
    let ess = if se > 0.0 { (var / (se * se)).min(n as f64) } else { n as f64 };
    BatchMeans { mean: mean(x), se, ess, n, batches }
}

/// Default number of batches for batch means.
pub const DEFAULT_BATCHES: usize = 50;

/// Batch-means estimate of a product moment `E[∏ x_k]` over paired columns.
pub fn batch_product(columns: &[&[f64]], batches: usize) -> BatchMeans {
    let n = columns.first().map_or(0, |c| c.len());
    let prod: Vec<f64> = (0..n).map(|t| columns.iter().map(|c| c[t]).product()).collect();
    batch_means(&prod, batches)
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// a continuous `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Total-variation distance `½ Σ |p - q|`; the shorter vector is padded
/// with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n).map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

/// `(estimate - target) / se`.
pub fn z_score(estimate: f64, se: f64, target: f64) -> f64 {
    if se > 0.0 {
        (estimate - target) / se
    } else if estimate == target {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Two-sample z statistic for independent estimates.
pub fn two_sample_z(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    z_score(a - b, (se_a * se_a + se_b * se_b).sqrt(), 0.0)
}
