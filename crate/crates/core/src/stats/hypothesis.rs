use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarqueBera {
    pub statistic: f64,
    /// Chi-square(2) survival, `exp(-JB / 2)`.
    pub p_value: f64,
    pub reject_at_0_01: bool,
    pub n: usize,
}

/// Jarque-Bera test applied to the natural logs of `samples`, i.e. a test of
/// lognormality.
pub fn jarque_bera_lognormal(samples: &[f64]) -> Result<JarqueBera> {
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lognormality test needs positive samples, got {bad}"
        )));
    }
    if samples.len() < 30 {
        return Err(Error::InsufficientData(format!(
            "need at least 30 samples, got {}",
            samples.len()
        )));
    }
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in &logs {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let scale = logs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(m2 > (1e-12 * scale).powi(2)) {
        return Err(Error::Numeric("log-samples have zero variance".into()));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let statistic = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    let p_value = (-statistic / 2.0).exp();
    Ok(JarqueBera {
        statistic,
        p_value,
        reject_at_0_01: p_value < 0.01,
        n: logs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    /// Asymptotic Kolmogorov p-value; conservative for discrete laws.
    pub p_value: f64,
    pub n: usize,
}

impl KsTest {
    pub fn passes_at(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// Kolmogorov survival `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of integer-valued samples against a CDF on the
/// integers. Both step functions are constant between integers, so the
/// supremum is attained at an integer.
pub fn ks_discrete(samples: &[usize], cdf: impl Fn(usize) -> f64) -> Result<KsTest> {
    if samples.is_empty() {
        return Err(Error::EmptySequence);
    }
    let max = *samples.iter().max().unwrap();
    let mut counts = vec![0usize; max + 1];
    for &s in samples {
        counts[s] += 1;
    }
    let n = samples.len() as f64;
    let mut acc = 0usize;
    let mut d: f64 = 0.0;
    for (v, &c) in counts.iter().enumerate() {
        acc += c;
        d = d.max((acc as f64 / n - cdf(v)).abs());
    }
    let sqrt_n = n.sqrt();
    let p_value = kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    Ok(KsTest {
        statistic: d,
        p_value,
        n: samples.len(),
    })
}
