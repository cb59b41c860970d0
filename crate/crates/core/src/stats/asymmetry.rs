use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::regression::{linear_regression, Regression};
use crate::error::{Error, Result};
use crate::patches::{Label, Patch};
use crate::trades::date_of;

/// Patches shorter than this are left out of the asymmetry analysis.
pub const MIN_ASYMMETRY_PATCH_LEN: usize = 10;

/// Price trend of one calendar month from close-to-close daily log returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTrend {
    pub year: i32,
    pub month: u32,
    pub mean_return: f64,
    /// Sample standard deviation of the month's daily returns.
    pub volatility: f64,
    pub x: f64,
    pub num_returns: usize,
}

/// Monthly trend ratios `x = <r> / sigma`. Each daily return belongs to the
/// month of its later close. Months with fewer than two returns or zero
/// volatility are dropped; their number is returned alongside.
pub fn monthly_trend_windows(daily_closes: &[(NaiveDate, f64)]) -> Result<(Vec<MonthlyTrend>, usize)> {
    let mut closes = daily_closes.to_vec();
    closes.sort_by_key(|c| c.0);
    if let Some(bad) = closes.iter().find(|c| !(c.1 > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "non-positive close {} on {}",
            bad.1, bad.0
        )));
    }
    let mut by_month: BTreeMap<(i32, u32), Vec<f64>> = BTreeMap::new();
    if let Some(first) = closes.first() {
        by_month.entry((first.0.year(), first.0.month())).or_default();
    }
    for w in closes.windows(2) {
        by_month
            .entry((w[1].0.year(), w[1].0.month()))
            .or_default()
            .push((w[1].1 / w[0].1).ln());
    }
    let mut windows = Vec::new();
    let mut excluded = 0;
    for ((year, month), r) in by_month {
        if r.len() < 2 {
            excluded += 1;
            continue;
        }
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            excluded += 1;
            continue;
        }
        windows.push(MonthlyTrend {
            year,
            month,
            mean_return: mean,
            volatility: sd,
            x: mean / sd,
            num_returns: r.len(),
        });
    }
    Ok((windows, excluded))
}

/// Summary of one label's patches inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelAggregate {
    pub count: usize,
    /// Mean transactions per patch; NaN when `count` is zero.
    pub mean_length: f64,
    /// Mean over patches with at least one classified trade.
    pub mean_market_order_fraction: f64,
    pub mean_participation_rate: f64,
}

impl LabelAggregate {
    fn of(patches: &[&Patch]) -> Self {
        let n = patches.len() as f64;
        let mean = |f: &dyn Fn(&Patch) -> f64| patches.iter().map(|p| f(p)).sum::<f64>() / n;
        let fractions: Vec<f64> = patches.iter().filter_map(|p| p.market_order_fraction).collect();
        Self {
            count: patches.len(),
            mean_length: mean(&|p| p.n_tot as f64),
            mean_market_order_fraction: fractions.iter().sum::<f64>() / fractions.len() as f64,
            mean_participation_rate: mean(&|p| p.participation_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta {
    Count,
    MeanLength,
    MarketOrderFraction,
    ParticipationRate,
}

impl Delta {
    pub const ALL: [Delta; 4] = [
        Delta::Count,
        Delta::MeanLength,
        Delta::MarketOrderFraction,
        Delta::ParticipationRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Delta::Count => "count",
            Delta::MeanLength => "mean_length",
            Delta::MarketOrderFraction => "market_order_fraction",
            Delta::ParticipationRate => "participation_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendWindow {
    pub window_id: String,
    pub trend: MonthlyTrend,
    pub buy: LabelAggregate,
    pub neutral: LabelAggregate,
    pub sell: LabelAggregate,
}

impl TrendWindow {
    /// Buy minus sell. NaN when a side has no patches (or, for the
    /// market-order fraction, no classified trades).
    pub fn delta(&self, d: Delta) -> f64 {
        match d {
            Delta::Count => self.buy.count as f64 - self.sell.count as f64,
            Delta::MeanLength => self.buy.mean_length - self.sell.mean_length,
            Delta::MarketOrderFraction => self.buy.mean_market_order_fraction - self.sell.mean_market_order_fraction,
            Delta::ParticipationRate => self.buy.mean_participation_rate - self.sell.mean_participation_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRegression {
    pub delta: Delta,
    pub windows_used: usize,
    /// `None` when fewer than two windows have the delta or `x` is
    /// constant across them.
    pub regression: Option<Regression>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub windows: Vec<TrendWindow>,
    /// Months dropped for zero volatility or too few returns.
    pub excluded_windows: usize,
    pub patches_used: usize,
    pub regressions: Vec<DeltaRegression>,
}

/// Buy-minus-sell patch statistics per calendar month, regressed on the
/// month's trend ratio `x`. Patches are assigned to the month of their
/// first trade; only those with at least `min_patch_len` transactions
/// count.
pub fn asymmetry_by_trend(
    patches: &[Patch],
    daily_closes: &[(NaiveDate, f64)],
    min_patch_len: usize,
) -> Result<AsymmetryReport> {
    let (trends, excluded_windows) = monthly_trend_windows(daily_closes)?;
    if trends.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} valid monthly windows, need at least 2 ({} excluded)",
            trends.len(),
            excluded_windows
        )));
    }
    let mut grouped: BTreeMap<(i32, u32), [Vec<&Patch>; 3]> = BTreeMap::new();
    for p in patches.iter().filter(|p| p.n_tot >= min_patch_len) {
        let d = date_of(p.t_first);
        let slot = match p.label {
            Label::Buy => 0,
            Label::Neutral => 1,
            Label::Sell => 2,
        };
        grouped.entry((d.year(), d.month())).or_default()[slot].push(p);
    }
    let mut patches_used = 0;
    let windows: Vec<TrendWindow> = trends
        .into_iter()
        .map(|trend| {
            let empty: [Vec<&Patch>; 3] = Default::default();
            let groups = grouped.get(&(trend.year, trend.month)).unwrap_or(&empty);
            patches_used += groups.iter().map(Vec::len).sum::<usize>();
            TrendWindow {
                window_id: format!("{:04}-{:02}", trend.year, trend.month),
                buy: LabelAggregate::of(&groups[0]),
                neutral: LabelAggregate::of(&groups[1]),
                sell: LabelAggregate::of(&groups[2]),
                trend,
            }
        })
        .collect();
    let regressions = Delta::ALL
        .iter()
        .map(|&delta| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = windows
                .iter()
                .map(|w| (w.trend.x, w.delta(delta)))
                .filter(|(_, y)| y.is_finite())
                .unzip();
            let regression = linear_regression(&xs, &ys).ok();
            DeltaRegression {
                delta,
                windows_used: xs.len(),
                degenerate: regression.is_none(),
                regression,
            }
        })
        .collect();
    Ok(AsymmetryReport {
        windows,
        excluded_windows,
        patches_used,
        regressions,
    })
}
