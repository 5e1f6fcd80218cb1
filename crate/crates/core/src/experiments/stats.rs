//! Estimators for correlated stationary time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean, variance};

/// Number of batches used by [`batch_means`].
pub const BATCHES: usize = 32;
/// Required ratio of batch length to the integrated autocorrelation time.
pub const BATCH_TO_TAU: f64 = 50.0;

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
}

impl MeanEstimate {
    pub fn scaled(&self, c: f64) -> Self {
        Self { mean: c * self.mean, se: c.abs() * self.se }
    }
}

/// Batch-means estimate with [`BATCHES`] equal batches (the remainder at the
/// start of the series is dropped).
pub fn batch_means(xs: &[f64]) -> Result<MeanEstimate> {
    batch_means_with(xs, BATCHES)
}

pub fn batch_means_with(xs: &[f64], batches: usize) -> Result<MeanEstimate> {
    let len = xs.len() / batches;
    if len < 2 {
        return Err(Error::TooFewSamples { needed: 2 * batches, got: xs.len() });
    }
    let tail = &xs[xs.len() - len * batches..];
    let means: Vec<f64> = tail.chunks_exact(len).map(mean).collect();
    Ok(MeanEstimate { mean: mean(tail), se: (variance(&means) / batches as f64).sqrt() })
}

/// Integrated autocorrelation time `1 + 2 sum_k rho_k` with a self-consistent
/// window `W >= 5 tau(W)`.
pub fn integrated_autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let centred: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Every `stride`-th element, starting from the first.
pub fn thin<T: Copy>(xs: &[T], stride: usize) -> Vec<T> {
    xs.iter().step_by(stride.max(1)).copied().collect()
}

/// Mean and batch-means SE of per-mode second moments and excess kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMoments {
    pub second: MeanEstimate,
    pub excess_kurtosis: MeanEstimate,
}

pub fn mode_moments(states: &[Vec<f64>]) -> Result<Vec<ModeMoments>> {
    let dim = states.first().map_or(0, Vec::len);
    let len = states.len() / BATCHES;
    if len < 10 {
        return Err(Error::TooFewSamples { needed: 10 * BATCHES, got: states.len() });
    }
    let tail = &states[states.len() - len * BATCHES..];
    (0..dim)
        .map(|l| {
            let sq: Vec<f64> = tail.iter().map(|x| x[l] * x[l]).collect();
            let second = batch_means(&sq)?;
            let kurt: Vec<f64> = sq
                .chunks_exact(len)
                .map(|c| {
                    let m2 = mean(c);
                    let m4 = c.iter().map(|s| s * s).sum::<f64>() / c.len() as f64;
                    m4 / (m2 * m2) - 3.0
                })
                .collect();
            let excess_kurtosis =
                MeanEstimate { mean: mean(&kurt), se: (variance(&kurt) / BATCHES as f64).sqrt() };
            Ok(ModeMoments { second, excess_kurtosis })
        })
        .collect()
}

/// `E|U_{t+s} - U_s|^4 / t^2` for each lag (in samples) of a series sampled at spacing `dt`.
pub fn time_regularity(us: &[f64], dt: f64, lags: &[usize]) -> Vec<(f64, f64)> {
    lags.iter()
        .filter(|&&k| k > 0 && k < us.len())
        .map(|&k| {
            let t = k as f64 * dt;
            let m4 = us[..us.len() - k]
                .iter()
                .zip(&us[k..])
                .map(|(a, b)| (b - a).powi(4))
                .sum::<f64>()
                / (us.len() - k) as f64;
            (t, m4 / (t * t))
        })
        .collect()
}
