use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(value, P(X >= value))` at each distinct sample value, ascending.
pub fn empirical_ccdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        if i == 0 || sorted[i - 1] != x {
            out.push((x, (sorted.len() - i) as f64 / n));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binning {
    Linear,
    Log,
}

/// Equal-width bins over `[min, max]` in linear or log space.
struct Bins {
    binning: Binning,
    lo: f64,
    width: f64,
    count: usize,
}

impl Bins {
    fn new(xs: impl Iterator<Item = f64> + Clone, binning: Binning, num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::InvalidArgument("num_bins must be at least 1".into()));
        }
        if let Some(bad) = xs
            .clone()
            .find(|x| !x.is_finite() || (binning == Binning::Log && *x <= 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "value {bad} cannot be binned on a {binning:?} scale"
            )));
        }
        let map = |x: f64| if binning == Binning::Log { x.ln() } else { x };
        let lo = xs.clone().map(map).fold(f64::INFINITY, f64::min);
        let hi = xs.map(map).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return Err(Error::InsufficientData("nothing to bin".into()));
        }
        let count = if hi > lo { num_bins } else { 1 };
        Ok(Self {
            binning,
            lo,
            width: if hi > lo { (hi - lo) / num_bins as f64 } else { 1.0 },
            count,
        })
    }

    fn index(&self, x: f64) -> usize {
        let u = if self.binning == Binning::Log { x.ln() } else { x };
        (((u - self.lo) / self.width).floor().max(0.0) as usize).min(self.count - 1)
    }

    fn edges(&self, i: usize) -> (f64, f64) {
        let a = self.lo + i as f64 * self.width;
        let b = a + self.width;
        match self.binning {
            Binning::Linear => (a, b),
            Binning::Log => (a.exp(), b.exp()),
        }
    }

    /// Arithmetic midpoint for linear bins, geometric for log bins.
    fn center(&self, i: usize) -> f64 {
        let a = self.lo + (i as f64 + 0.5) * self.width;
        match self.binning {
            Binning::Linear => a,
            Binning::Log => a.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedMean {
    pub bin_center: f64,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; NaN for a single
    /// point.
    pub standard_error: f64,
    pub count: usize,
}

/// Mean of `y` conditional on `x` falling in each bin. Empty bins are
/// omitted.
pub fn conditional_mean_binned(pairs: &[(f64, f64)], binning: Binning, num_bins: usize) -> Result<Vec<BinnedMean>> {
    let bins = Bins::new(pairs.iter().map(|p| p.0), binning, num_bins)?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); bins.count];
    for &(x, y) in pairs {
        groups[bins.index(x)].push(y);
    }
    Ok(groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(i, g)| {
            let n = g.len() as f64;
            let mean = g.iter().sum::<f64>() / n;
            let var = g.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
            BinnedMean {
                bin_center: bins.center(i),
                mean,
                standard_error: (var / n).sqrt(),
                count: g.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub bin_center: f64,
    pub lower: f64,
    pub upper: f64,
    pub density: f64,
    pub count: usize,
}

/// Normalized histogram: `count / (n * width)`. Empty bins are omitted.
pub fn histogram_density(samples: &[f64], binning: Binning, num_bins: usize) -> Result<Vec<DensityBin>> {
    let bins = Bins::new(samples.iter().copied(), binning, num_bins)?;
    let mut counts = vec![0usize; bins.count];
    for &x in samples {
        counts[bins.index(x)] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| {
            let (lower, upper) = bins.edges(i);
            // A single degenerate bin holds a point mass; report its count.
            let width = if bins.count == 1 && upper - lower == 0.0 {
                1.0
            } else {
                upper - lower
            };
            DensityBin {
                bin_center: bins.center(i),
                lower,
                upper,
                density: c as f64 / (n * width),
                count: c,
            }
        })
        .collect())
}
