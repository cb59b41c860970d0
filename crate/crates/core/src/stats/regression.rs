use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Ordinary least squares of `y` on `x` with the Pearson correlation and
/// its two-sided t-test p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// NaN when `y` is constant.
    pub correlation: f64,
    /// Two-sided p-value of `H0: correlation = 0`; NaN with fewer than 3
    /// points or constant `y`.
    pub p_value: f64,
    pub n: usize,
}

/// Fit `y = intercept + slope * x`. Constant `x` is refused.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "x has {} values, y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "regression needs 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sxx > n * (1e-10 * scale).powi(2)) {
        return Err(Error::InsufficientData("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let correlation = if syy > 0.0 {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    } else {
        f64::NAN
    };
    let df = n - 2.0;
    let p_value = if df < 1.0 || correlation.is_nan() {
        f64::NAN
    } else if correlation.abs() == 1.0 {
        0.0
    } else {
        let t = correlation * (df / (1.0 - correlation * correlation)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Regression {
        slope,
        intercept,
        correlation,
        p_value,
        n: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let r = linear_regression(&x, &y).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!((r.intercept - 1.0).abs() < 1e-12);
        assert!((r.correlation - 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn known_p_value() {
        // r = 0.5 with n = 10: t = 0.5 * sqrt(8 / 0.75) = 1.63299, p = 0.1411.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let r0 = linear_regression(&x, &[2.0, 1.0, 4.0, 3.0, 6.0, 2.0, 5.0, 9.0, 3.0, 6.0]).unwrap();
        let t = r0.correlation * (8.0 / (1.0 - r0.correlation.powi(2))).sqrt();
        let dist = StudentsT::new(0.0, 1.0, 8.0).unwrap();
        assert!((r0.p_value - 2.0 * (1.0 - dist.cdf(t.abs()))).abs() < 1e-12);
        let d = StudentsT::new(0.0, 1.0, 8.0).unwrap();
        assert!((2.0 * d.sf(1.632993) - 0.1411).abs() < 1e-3);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_regression(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        let r = linear_regression(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap();
        assert!(r.correlation.is_nan());
        assert_eq!(r.slope, 0.0);
        assert!(linear_regression(&[1.0], &[1.0]).is_err());
    }
}
