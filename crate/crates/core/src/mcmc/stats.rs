//! Monte-Carlo summary statistics with standard errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batches per chain for batch-means standard errors.
pub const BATCHES_PER_CHAIN: usize = 8;

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    /// Single chain: the error comes from a windowed autocorrelation time.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub autocorrelation_fallback: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            autocorrelation_fallback: false,
        }
    }

    /// `|value − target| ≤ k · stderr`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    /// The usual agreement band `max(rel · |target|, k · stderr)`.
    pub fn agrees(&self, target: f64, rel: f64, k: f64) -> bool {
        (self.value - target).abs() <= (rel * target.abs()).max(k * self.stderr)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Integrated autocorrelation time with Sokal's automatic window `M ≥ 5τ`.
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = (0..n - lag).map(|t| (xs[t] - m) * (xs[t + lag] - m)).sum::<f64>() / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Mean of chain-concatenated draws and its standard error.
///
/// With two or more chains each chain is cut into
/// [`BATCHES_PER_CHAIN`] contiguous batches and the error is the spread of
/// all batch means, which includes any disagreement between chains. A single
/// chain falls back to the autocorrelation-window estimate and is flagged.
pub fn chained_mean(values: &[f64], chain_lengths: &[usize]) -> Result<Estimate> {
    let total: usize = chain_lengths.iter().sum();
    if total != values.len() {
        return Err(Error::Estimator(format!(
            "{} values for chains of total length {total}",
            values.len()
        )));
    }
    if total == 0 {
        return Err(Error::Estimator("no draws".into()));
    }
    let value = mean(values);
    if chain_lengths.iter().filter(|&&l| l > 0).count() < 2 {
        let var = values.iter().map(|x| (x - value).powi(2)).sum::<f64>() / total.max(2) as f64;
        let tau = integrated_autocorrelation(values);
        return Ok(Estimate {
            value,
            stderr: (var * tau / total as f64).sqrt(),
            autocorrelation_fallback: true,
        });
    }
    let mut batch_means = Vec::new();
    let mut start = 0;
    for &len in chain_lengths {
        let chain = &values[start..start + len];
        start += len;
        let batches = BATCHES_PER_CHAIN.min(len);
        for b in 0..batches {
            let lo = b * len / batches;
            let hi = (b + 1) * len / batches;
            if hi > lo {
                batch_means.push(mean(&chain[lo..hi]));
            }
        }
    }
    let k = batch_means.len() as f64;
    let bm = mean(&batch_means);
    let var = batch_means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(Estimate {
        value,
        stderr: (var / k).sqrt(),
        autocorrelation_fallback: false,
    })
}

/// Centered product `z_t = Π_i (x_i(t) − x̄_i)` of several series.
pub fn centered_product(series: &[&[f64]]) -> Vec<f64> {
    let means: Vec<f64> = series.iter().map(|s| mean(s)).collect();
    let len = series.first().map_or(0, |s| s.len());
    (0..len)
        .map(|t| series.iter().zip(&means).map(|(s, m)| s[t] - m).product())
        .collect()
}

/// Effective number of independent draws implied by an estimate.
pub fn effective_samples(values: &[f64], est: &Estimate) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / values.len().max(2) as f64;
    if est.stderr == 0.0 {
        return values.len() as f64;
    }
    var / (est.stderr * est.stderr)
}
