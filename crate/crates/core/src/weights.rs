//! Log-space importance weights and the degeneracy diagnostics built on them.
//!
//! Weights are kept in log space end to end; normalization uses a max-shift
//! so that ratios of likelihood products never underflow.

use serde::{Deserialize, Serialize};

use crate::error::WeightError;

/// Tolerance on `exp`-sums when asserting that weights are normalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// A vector of log-weights, one per particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWeights {
    pub values: Vec<f64>,
}

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Self {
        LogWeights { values }
    }

    /// Uniform weights over `n` particles in the "mean one" convention
    /// (all entries zero), the state after a selection step.
    pub fn uniform(n: usize) -> Self {
        LogWeights {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max-shifted log of the exponential sum. Returns `-inf` on all-zero
    /// weight sets.
    pub fn log_sum_exp(&self) -> f64 {
        log_sum_exp(&self.values)
    }

    /// Linear-space probabilities `exp(values)`. Only meaningful after
    /// [`normalize`](Self::normalize).
    pub fn probabilities(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.exp()).collect()
    }
}

/// Max-shifted log-sum-exp over a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalize log-weights so their exponentials sum to one.
///
/// Also returns the per-step evidence increment
/// `log((1/N) * sum_i exp(values_i))`: when the incoming weights carry the
/// previous step's normalized weights scaled to mean one, this is the
/// estimate of `log p(y_t | y_{1:t-1})`.
pub fn normalize(weights: &LogWeights) -> Result<(LogWeights, f64), WeightError> {
    let lse = weights.log_sum_exp();
    if lse == f64::NEG_INFINITY {
        return Err(WeightError::AllWeightsZero);
    }
    let n = weights.len() as f64;
    let normalized = LogWeights::new(weights.values.iter().map(|v| v - lse).collect());
    let log_increment = lse - n.ln();
    Ok((normalized, log_increment))
}

/// Effective sample size `1 / sum_i w_i^2` of normalized weights.
///
/// Lies in `[1, N]`: `N` for uniform weights, `1` for a point mass.
pub fn effective_sample_size(weights: &LogWeights) -> Result<f64, WeightError> {
    let sum: f64 = weights.values.iter().map(|v| v.exp()).sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(WeightError::NotNormalized { sum });
    }
    let sum_sq = log_sum_exp(&weights.values.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    let ess = (-sum_sq).exp();
    Ok(ess.clamp(1.0, weights.len() as f64))
}
