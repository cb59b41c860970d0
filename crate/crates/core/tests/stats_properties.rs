use chrono::NaiveDate;
use patchscan_core::stats::{
    conditional_mean_binned, empirical_ccdf, hill_estimator, hill_with_k, histogram_density, jarque_bera_lognormal,
    kolmogorov_sf, ks_discrete, linear_regression, monthly_trend_windows, Binning,
};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn positive_samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e4, 400..1500)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn hill_is_scale_free(xs in positive_samples(), power in -10i32..10) {
        let scale = 2f64.powi(power);
        let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        let a = hill_estimator(&xs, 0.05).unwrap();
        let b = hill_estimator(&scaled, 0.05).unwrap();
        prop_assert_eq!(a.k, b.k);
        prop_assert!((a.exponent - b.exponent).abs() <= 1e-9 * a.exponent);
        prop_assert!(a.ci_low < a.exponent && a.exponent < a.ci_high);
    }

    #[test]
    fn ccdf_is_a_survival_function(xs in prop::collection::vec(-50.0f64..50.0, 1..300)) {
        let ccdf = empirical_ccdf(&xs);
        prop_assert_eq!(ccdf[0].1, 1.0);
        for w in ccdf.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            prop_assert!(w[0].1 > w[1].1);
        }
        let last = ccdf.last().unwrap();
        let ties = xs.iter().filter(|&&x| x == last.0).count();
        prop_assert_eq!(last.1, ties as f64 / xs.len() as f64);
    }

    #[test]
    fn densities_integrate_to_one(xs in positive_samples(), bins in 2usize..40, log in any::<bool>()) {
        let binning = if log { Binning::Log } else { Binning::Linear };
        let h = histogram_density(&xs, binning, bins).unwrap();
        let mass: f64 = h.iter().map(|b| b.density * (b.upper - b.lower)).sum();
        prop_assert!((mass - 1.0).abs() < 1e-9, "{mass}");
    }

    #[test]
    fn binned_means_cover_all_pairs(
        pairs in prop::collection::vec((1e-2f64..1e3, -5.0f64..5.0), 50..400),
        bins in 2usize..20,
    ) {
        let means = conditional_mean_binned(&pairs, Binning::Log, bins).unwrap();
        prop_assert_eq!(means.iter().map(|b| b.count).sum::<usize>(), pairs.len());
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let weighted: f64 = means.iter().map(|b| b.mean * b.count as f64).sum();
        prop_assert!((total - weighted).abs() < 1e-8 * pairs.len() as f64);
    }

    #[test]
    fn regression_recovers_exact_lines(
        xs in prop::collection::vec(-100.0f64..100.0, 3..200),
        slope in -5.0f64..5.0,
        intercept in -5.0f64..5.0,
    ) {
        let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1.0 && slope.abs() > 1e-3);
        let ys: Vec<f64> = xs.iter().map(|x| intercept + slope * x).collect();
        let r = linear_regression(&xs, &ys).unwrap();
        prop_assert!((r.slope - slope).abs() < 1e-9);
        prop_assert!((r.intercept - intercept).abs() < 1e-7);
        prop_assert!((r.correlation.abs() - 1.0).abs() < 1e-9);
        prop_assert_eq!(r.correlation.signum(), slope.signum());
    }

    #[test]
    fn kolmogorov_tail_is_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (kolmogorov_sf(lo), kolmogorov_sf(hi));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_hi <= p_lo + 1e-12);
    }
}

#[test]
fn hill_by_hand() {
    // Top k = 2 of {1, 2, 4, 8}: threshold 2, logs ln 8/2 and ln 4/2.
    let h = hill_with_k(&[1.0, 2.0, 4.0, 8.0], 2).unwrap();
    let expected = 2.0 / (4f64.ln() + 2f64.ln());
    assert!((h.exponent - expected).abs() < 1e-12);
    let half = expected * 1.96 / 2f64.sqrt();
    assert!((h.ci_high - h.ci_low - 2.0 * half).abs() < 1e-12);
    assert!(hill_estimator(&[1.0, 2.0, 4.0, 8.0], 0.5).is_err());
}

#[test]
fn hill_on_exact_pareto_quantiles() {
    let zeta = 1.7;
    let n = 200_000;
    let xs: Vec<f64> = (0..n)
        .map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-1.0 / zeta))
        .collect();
    let h = hill_estimator(&xs, 0.05).unwrap();
    assert!((h.exponent - zeta).abs() < 0.01, "{}", h.exponent);
}

#[test]
fn jarque_bera_separates_lognormal_from_pareto() {
    let n = 20_000;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    use statrs::distribution::ContinuousCDF;
    let lognormal: Vec<f64> = (0..n)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64).exp())
        .collect();
    let jb = jarque_bera_lognormal(&lognormal).unwrap();
    assert!(!jb.reject_at_0_01, "JB = {}", jb.statistic);
    let pareto: Vec<f64> = (0..n).map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-0.5)).collect();
    assert!(jarque_bera_lognormal(&pareto).unwrap().reject_at_0_01);
    assert!(jarque_bera_lognormal(&[3.0; 50]).is_err());
}

#[test]
fn ks_accepts_exact_geometric_quantiles() {
    let a: f64 = 0.8;
    let n = 5000;
    let samples: Vec<usize> = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            ((1.0 - u).ln() / a.ln()).ceil() as usize
        })
        .collect();
    let test = ks_discrete(&samples, |l| 1.0 - a.powi(l as i32)).unwrap();
    assert!(test.statistic < 0.01, "D = {}", test.statistic);
    assert!(test.passes_at(0.01));
    let shifted: Vec<usize> = samples.iter().map(|l| l + 2).collect();
    assert!(!ks_discrete(&shifted, |l| 1.0 - a.powi(l as i32))
        .unwrap()
        .passes_at(0.01));
}

#[test]
fn monthly_trend_by_hand() {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
    let closes = vec![
        (d(2004, 1, 30), 100.0),
        (d(2004, 2, 2), 110.0),
        (d(2004, 2, 3), 99.0),
        (d(2004, 2, 4), 108.9),
        // January has no return and March only one: both excluded.
        (d(2004, 3, 1), 108.9),
    ];
    let (windows, excluded) = monthly_trend_windows(&closes).unwrap();
    assert_eq!(excluded, 2);
    assert_eq!(windows.len(), 1);
    let r = [1.1f64.ln(), 0.9f64.ln(), 1.1f64.ln()];
    let mean = r.iter().sum::<f64>() / 3.0;
    let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((windows[0].x - mean / sd).abs() < 1e-12, "{}", windows[0].x);
    assert_eq!((windows[0].year, windows[0].month), (2004, 2));
}
