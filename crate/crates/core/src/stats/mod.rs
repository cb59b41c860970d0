//! Tail estimation, distribution summaries, tests and the trend-conditioned
//! buy-sell asymmetry.

mod asymmetry;
mod distribution;
mod hill;
mod hypothesis;
mod regression;

pub use asymmetry::{
    asymmetry_by_trend, monthly_trend_windows, AsymmetryReport, Delta, DeltaRegression, LabelAggregate, MonthlyTrend,
    TrendWindow, MIN_ASYMMETRY_PATCH_LEN,
};
pub use distribution::{conditional_mean_binned, empirical_ccdf, histogram_density, BinnedMean, Binning, DensityBin};
pub use hill::{hill_estimator, hill_with_k, HillEstimate, MIN_HILL_K};
pub use hypothesis::{jarque_bera_lognormal, kolmogorov_sf, ks_discrete, JarqueBera, KsTest};
pub use regression::{linear_regression, Regression};
