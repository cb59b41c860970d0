use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest order statistics [`hill_estimator`] will use.
pub const MIN_HILL_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    /// Tail exponent of the CCDF.
    pub exponent: f64,
    pub k: usize,
    pub quantile: f64,
    pub n: usize,
    /// The order statistic `x_(k+1)` the tail is measured from.
    pub threshold: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl HillEstimate {
    pub fn ci_half_width(&self) -> f64 {
        1.96 * self.exponent / (self.k as f64).sqrt()
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Hill estimate from the top `k` order statistics, with the asymptotic
/// normal 95% interval `zeta * (1 +- 1.96 / sqrt(k))`.
pub fn hill_with_k(samples: &[f64], k: usize) -> Result<HillEstimate> {
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Hill estimator needs positive finite samples, got {bad}"
        )));
    }
    if k == 0 || k >= samples.len() {
        return Err(Error::InsufficientData(format!(
            "Hill estimator needs 1 <= k < n, got k = {k}, n = {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let sum: f64 = sorted[..k].iter().map(|&x| (x / threshold).ln()).sum();
    if !(sum > 0.0) {
        return Err(Error::Numeric(format!(
            "top {k} samples all equal the threshold {threshold}"
        )));
    }
    let exponent = k as f64 / sum;
    let half = 1.96 * exponent / (k as f64).sqrt();
    Ok(HillEstimate {
        exponent,
        k,
        quantile: k as f64 / samples.len() as f64,
        n: samples.len(),
        threshold,
        ci_low: exponent - half,
        ci_high: exponent + half,
    })
}

/// Hill estimate on the top `quantile` of the sample, `k = floor(q n)`.
/// Refuses when `k < 20`.
pub fn hill_estimator(samples: &[f64], quantile: f64) -> Result<HillEstimate> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must lie in (0, 1), got {quantile}"
        )));
    }
    let k = (quantile * samples.len() as f64).floor() as usize;
    if k < MIN_HILL_K {
        return Err(Error::InsufficientData(format!(
            "only {k} samples in the top {quantile} quantile, need {MIN_HILL_K}"
        )));
    }
    let mut est = hill_with_k(samples, k)?;
    est.quantile = quantile;
    Ok(est)
}
