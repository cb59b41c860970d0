//! The batch run: load, filter members, fit and decode each member-year,
//! extract patches, then pooled statistics, asymmetry and the optional
//! segment comparison. Every report lands under `<output_dir>/<run_id>/`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::{cross_tabulate, read_segments_csv, write_cross_tab_csv, Assignment};
use crate::error::{Error, Result};
use crate::hmm::{fit_baum_welch, posterior_decode, FitConfig, FitReport, HmmModel};
use crate::hsmm::{decode_hsmm, fit_hsmm, HsmmModel};
use crate::patches::{
    extract_patches, filter_min_length, label_from_buy_emissions, label_states, sort_patches, write_patches_csv, Label,
    Patch, StateLabeling,
};
use crate::stats::{
    asymmetry_by_trend, conditional_mean_binned, empirical_ccdf, hill_estimator, histogram_density, AsymmetryReport,
    Binning, Delta,
};
use crate::trades::{date_of, load_transactions, year_of, MarketTape, SchemaConfig, TradingCalendar, Transaction};
use crate::BUY_SYMBOL;

/// Name of the marker file left in a run directory when a stage fails.
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub transactions: PathBuf,
    pub calendar: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to the first 12 hex digits of the config hash.
    pub run_id: Option<String>,
    pub min_transactions_per_year: usize,
    pub min_active_days: usize,
    pub num_states: usize,
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub use_hsmm: bool,
    pub max_sojourn: usize,
    pub n_min: usize,
    pub hill_quantile: f64,
    pub num_bins: usize,
    pub asymmetry_min_patch_len: usize,
    pub compare_assignment: Assignment,
    pub seed: u64,
    /// Fit each member once over the whole file instead of per year.
    pub single_period: bool,
    pub max_malformed_fraction: f64,
    pub dedup_both_sides: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            transactions: PathBuf::new(),
            calendar: None,
            segments: None,
            output_dir: PathBuf::from("out"),
            run_id: None,
            min_transactions_per_year: 1000,
            min_active_days: 200,
            num_states: 3,
            restarts: fit.restarts,
            tolerance: fit.tolerance,
            max_iterations: fit.max_iterations,
            use_hsmm: false,
            max_sojourn: crate::hsmm::DEFAULT_MAX_SOJOURN,
            n_min: 10,
            hill_quantile: 0.05,
            num_bins: 20,
            asymmetry_min_patch_len: crate::stats::MIN_ASYMMETRY_PATCH_LEN,
            compare_assignment: Assignment::Midpoint,
            seed: 0,
            single_period: false,
            max_malformed_fraction: SchemaConfig::default().max_malformed_fraction,
            dedup_both_sides: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let exists = |p: &Path, what: &str| {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} file `{}` does not exist", p.display())))
            }
        };
        exists(&self.transactions, "transactions")?;
        if let Some(p) = &self.calendar {
            exists(p, "calendar")?;
        }
        if let Some(p) = &self.segments {
            exists(p, "segments")?;
        }
        if self.num_states != 3 {
            return Err(Error::Config(format!(
                "patch labeling needs 3 states, config has {}",
                self.num_states
            )));
        }
        let shortest = 10 * self.num_states * 2;
        if self.min_transactions_per_year < shortest {
            return Err(Error::Config(format!(
                "min_transactions_per_year must be at least {shortest} to fit a {}-state model",
                self.num_states
            )));
        }
        if self.use_hsmm {
            if self.max_sojourn < 2 {
                return Err(Error::Config("max_sojourn must be at least 2".into()));
            }
            if self.min_transactions_per_year < self.num_states * self.max_sojourn {
                return Err(Error::Config(format!(
                    "min_transactions_per_year must be at least num_states * max_sojourn = {}",
                    self.num_states * self.max_sojourn
                )));
            }
        }
        if !(self.hill_quantile > 0.0 && self.hill_quantile < 1.0) {
            return Err(Error::Config(format!(
                "hill_quantile must lie in (0, 1), got {}",
                self.hill_quantile
            )));
        }
        if self.num_bins == 0 || self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "num_bins, restarts and max_iterations must be positive".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(Error::Config(format!("run_id `{id}` is not a plain directory name")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the config's JSON form.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn resolved_run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| self.config_hash()[..12].to_string())
    }

    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            restarts: self.restarts,
            seed,
            time_budget: None,
        }
    }

    pub fn schema(&self) -> SchemaConfig {
        SchemaConfig {
            max_malformed_fraction: self.max_malformed_fraction,
            dedup_both_sides: self.dedup_both_sides,
        }
    }
}

/// Seed for one member-period, independent of which other tasks run.
pub fn task_seed(seed: u64, member_id: &str, year: Option<i32>) -> u64 {
    let period = year.map_or_else(|| "all".to_string(), |y| y.to_string());
    let digest = Sha256::digest(format!("{seed}:{member_id}:{period}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// One member over one fitting period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberPeriod {
    pub member_id: String,
    /// `None` in single-period mode.
    pub year: Option<i32>,
    /// Position of the period's first trade in the member's full sequence.
    pub index_offset: usize,
    pub num_transactions: usize,
    pub active_days: usize,
}

impl MemberPeriod {
    pub fn period_label(&self) -> String {
        self.year.map_or_else(|| "all".to_string(), |y| y.to_string())
    }

    /// The period's trades, in time order.
    pub fn transactions<'a>(&self, tape: &'a MarketTape) -> Vec<&'a Transaction> {
        tape.transactions()
            .iter()
            .filter(|t| t.member_id == self.member_id)
            .skip(self.index_offset)
            .take(self.num_transactions)
            .collect()
    }
}

/// Split every member's trades by year (or not) and keep the periods that
/// pass the activity filter, ordered by member then year.
pub fn member_periods(tape: &MarketTape, config: &RunConfig) -> Vec<MemberPeriod> {
    let mut out = Vec::new();
    for (member, txs) in tape.by_member() {
        let mut start = 0;
        while start < txs.len() {
            let year = (!config.single_period).then(|| year_of(txs[start].timestamp));
            let end = match year {
                Some(y) => start + txs[start..].iter().take_while(|t| year_of(t.timestamp) == y).count(),
                None => txs.len(),
            };
            let days: BTreeSet<_> = txs[start..end].iter().map(|t| date_of(t.timestamp)).collect();
            let mp = MemberPeriod {
                member_id: member.to_string(),
                year,
                index_offset: start,
                num_transactions: end - start,
                active_days: days.len(),
            };
            if mp.num_transactions >= config.min_transactions_per_year && mp.active_days >= config.min_active_days {
                out.push(mp);
            }
            start = end;
        }
    }
    out
}

/// Find one member's trades for `year` (all years when `None`), ignoring
/// the activity filter.
pub fn select_member_period(tape: &MarketTape, member_id: &str, year: Option<i32>) -> Result<MemberPeriod> {
    let txs: Vec<&Transaction> = tape
        .transactions()
        .iter()
        .filter(|t| t.member_id == member_id)
        .collect();
    let start = match year {
        Some(y) => txs.iter().position(|t| year_of(t.timestamp) == y),
        None => (!txs.is_empty()).then_some(0),
    }
    .ok_or_else(|| Error::InsufficientData(format!("member {member_id} has no trades in the selected period")))?;
    let end = match year {
        Some(y) => start + txs[start..].iter().take_while(|t| year_of(t.timestamp) == y).count(),
        None => txs.len(),
    };
    let days: BTreeSet<_> = txs[start..end].iter().map(|t| date_of(t.timestamp)).collect();
    Ok(MemberPeriod {
        member_id: member_id.to_string(),
        year,
        index_offset: start,
        num_transactions: end - start,
        active_days: days.len(),
    })
}

/// A fitted HMM or HSMM.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Hmm(HmmModel),
    Hsmm(HsmmModel),
}

impl FittedModel {
    /// Parse either model; a `sojourn` member marks an HSMM.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("sojourn").is_some() {
            Ok(FittedModel::Hsmm(HsmmModel::from_json(text)?))
        } else {
            Ok(FittedModel::Hmm(HmmModel::from_json(text)?))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            FittedModel::Hmm(m) => m.to_json(),
            FittedModel::Hsmm(m) => m.to_json(),
        }
    }

    pub fn labeling(&self) -> Result<StateLabeling> {
        match self {
            FittedModel::Hmm(m) => label_states(m),
            FittedModel::Hsmm(m) => {
                if m.num_symbols() != 2 {
                    return Err(Error::InvalidArgument("labeling needs a 2-symbol model".into()));
                }
                let buy: Vec<f64> = (0..m.num_states()).map(|j| m.emission(j, BUY_SYMBOL)).collect();
                label_from_buy_emissions(&buy)
            }
        }
    }

    /// Most probable state at each position.
    pub fn decode(&self, obs: &[usize]) -> Result<Vec<usize>> {
        match self {
            FittedModel::Hmm(m) => Ok(posterior_decode(m, obs)?.path),
            FittedModel::Hsmm(m) => Ok(decode_hsmm(m, obs)?.path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSummary {
    pub seed: u64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub degenerate: bool,
    pub short_input: bool,
}

impl FitSummary {
    fn of<M>(seed: u64, r: &FitReport<M>) -> Self {
        Self {
            seed,
            log_likelihood: r.final_log_likelihood(),
            iterations: r.iterations,
            converged: r.converged,
            restarts_used: r.restarts_used,
            degenerate: r.degenerate,
            short_input: r.short_input,
        }
    }
}

fn symbols(txs: &[&Transaction]) -> Vec<usize> {
    txs.iter().map(|t| t.sign.symbol()).collect()
}

/// Fit the configured model to one member-period's signs.
pub fn fit_member_period(
    tape: &MarketTape,
    mp: &MemberPeriod,
    config: &RunConfig,
) -> Result<(FittedModel, FitSummary)> {
    let obs = symbols(&mp.transactions(tape));
    let seed = task_seed(config.seed, &mp.member_id, mp.year);
    let fit_config = config.fit_config(seed);
    if config.use_hsmm {
        let report = fit_hsmm(&obs, config.num_states, 2, config.max_sojourn, &fit_config)?;
        let summary = FitSummary::of(seed, &report);
        Ok((FittedModel::Hsmm(report.fitted_model), summary))
    } else {
        let report = fit_baum_welch(&obs, config.num_states, 2, &fit_config)?;
        let summary = FitSummary::of(seed, &report);
        Ok((FittedModel::Hmm(report.fitted_model), summary))
    }
}

/// Decode, label and cut one member-period into patches.
pub fn extract_member_period(
    model: &FittedModel,
    tape: &MarketTape,
    mp: &MemberPeriod,
) -> Result<(StateLabeling, Vec<Patch>)> {
    let txs = mp.transactions(tape);
    let labeling = model.labeling()?;
    if labeling.ambiguous {
        log::warn!(
            "member {} period {}: tied buy emissions, labels follow state order",
            mp.member_id,
            mp.period_label()
        );
    }
    let path = model.decode(&symbols(&txs))?;
    let patches = extract_patches(&path, &labeling, &txs, tape, mp.index_offset)?;
    Ok((labeling, patches))
}

/// What one member-period produced.
#[derive(Debug, Clone, Serialize)]
pub struct TaskResult {
    pub member_id: String,
    pub period: String,
    pub num_transactions: usize,
    pub fit: FitSummary,
    pub labeling: StateLabeling,
    #[serde(skip)]
    pub model_json: String,
    #[serde(skip)]
    pub patches: Vec<Patch>,
}

/// Fit, decode, label and extract for one member-period.
pub fn analyze_member_period(tape: &MarketTape, mp: &MemberPeriod, config: &RunConfig) -> Result<TaskResult> {
    let (model, fit) = fit_member_period(tape, mp, config)?;
    let (labeling, patches) = extract_member_period(&model, tape, mp)?;
    Ok(TaskResult {
        member_id: mp.member_id.clone(),
        period: mp.period_label(),
        num_transactions: mp.num_transactions,
        fit,
        labeling,
        model_json: model.to_json()?,
        patches,
    })
}

/// Write `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn file_stem(member_id: &str, period: &str) -> String {
    let clean: String = member_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}_{period}")
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TapeSummary {
    pub total_transactions: usize,
    pub active_members: usize,
    pub active_transaction_share: f64,
    pub active_share_volume_share: f64,
}

/// Whole-tape counts for the members in `members`.
pub fn tape_summary<'a>(tape: &MarketTape, members: impl IntoIterator<Item = &'a str>) -> TapeSummary {
    let members: BTreeSet<&str> = members.into_iter().collect();
    let (mut n, mut shares, mut total_shares) = (0usize, 0u64, 0u64);
    for t in tape.transactions() {
        total_shares += t.shares;
        if members.contains(t.member_id.as_str()) {
            n += 1;
            shares += t.shares;
        }
    }
    TapeSummary {
        total_transactions: tape.len(),
        active_members: members.len(),
        active_transaction_share: 100.0 * n as f64 / tape.len().max(1) as f64,
        active_share_volume_share: 100.0 * shares as f64 / total_shares.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub line: usize,
    pub statistic: String,
    pub value: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Counts, means and standard deviations of patch lengths, directional
/// versus neutral, before and after the `n_min` filter.
pub fn summary_rows(tape: Option<&TapeSummary>, patches: &[Patch], n_min: usize) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let mut push = |statistic: String, value: f64| {
        rows.push(SummaryRow {
            line: rows.len() + 1,
            statistic,
            value,
        })
    };
    if let Some(t) = tape {
        push("total number of transactions".into(), t.total_transactions as f64);
        push("number of active market members".into(), t.active_members as f64);
        push(
            "% of transactions of active market members".into(),
            t.active_transaction_share,
        );
        push(
            "% of volume (shares) of active market members".into(),
            t.active_share_volume_share,
        );
    }
    let long = filter_min_length(patches, n_min);
    let lengths = |set: &[Patch], directional: bool| -> Vec<f64> {
        set.iter()
            .filter(|p| p.label.is_directional() == directional)
            .map(|p| p.n_tot as f64)
            .collect()
    };
    let sets = [(patches.to_vec(), String::new()), (long, format!(" (N >= {n_min})"))];
    for (set, suffix) in &sets {
        for (directional, name) in [(true, "directional"), (false, "neutral")] {
            push(
                format!("total number of {name} patches{suffix}"),
                lengths(set, directional).len() as f64,
            );
        }
    }
    for (set, suffix) in &sets {
        for (directional, name) in [(true, "directional"), (false, "neutral")] {
            let (mean, sd) = mean_sd(&lengths(set, directional));
            push(format!("mean length of {name} patches{suffix}"), mean);
            push(format!("sd of length of {name} patches{suffix}"), sd);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HillRow {
    pub group: String,
    pub variable: String,
    pub exponent: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub k: Option<usize>,
    pub n: usize,
    pub note: String,
}

fn patch_variable(p: &Patch, variable: &str) -> f64 {
    match variable {
        "T" => p.duration_seconds,
        "N_tot" => p.n_tot as f64,
        _ => p.v_tot,
    }
}

/// Tail exponents of T, N_tot and V_tot for directional and neutral
/// patches. Zero durations (single-trade patches) are left out of T.
pub fn hill_table(patches: &[Patch], quantile: f64) -> Vec<HillRow> {
    let mut rows = Vec::new();
    for (directional, group) in [(true, "directional"), (false, "neutral")] {
        for variable in ["T", "N_tot", "V_tot"] {
            let xs: Vec<f64> = patches
                .iter()
                .filter(|p| p.label.is_directional() == directional)
                .map(|p| patch_variable(p, variable))
                .filter(|&x| x > 0.0)
                .collect();
            let row = match hill_estimator(&xs, quantile) {
                Ok(h) => HillRow {
                    group: group.into(),
                    variable: variable.into(),
                    exponent: Some(h.exponent),
                    ci_half_width: Some(h.ci_half_width()),
                    ci_low: Some(h.ci_low),
                    ci_high: Some(h.ci_high),
                    k: Some(h.k),
                    n: xs.len(),
                    note: String::new(),
                },
                Err(e) => HillRow {
                    group: group.into(),
                    variable: variable.into(),
                    exponent: None,
                    ci_half_width: None,
                    ci_low: None,
                    ci_high: None,
                    k: None,
                    n: xs.len(),
                    note: e.to_string(),
                },
            };
            rows.push(row);
        }
    }
    rows
}

#[derive(Serialize)]
struct LabeledDensity {
    label: Label,
    bin_center: f64,
    lower: f64,
    upper: f64,
    density: f64,
    count: usize,
}

#[derive(Serialize)]
struct LabeledMean {
    label: Label,
    bin_center: f64,
    mean: f64,
    standard_error: f64,
    count: usize,
}

#[derive(Serialize)]
struct CcdfPoint {
    group: &'static str,
    variable: &'static str,
    value: f64,
    ccdf: f64,
}

const DENSITY_HEADER: [&str; 6] = ["label", "bin_center", "lower", "upper", "density", "count"];
const MEAN_HEADER: [&str; 5] = ["label", "bin_center", "mean", "standard_error", "count"];

fn density_by_label(patches: &[Patch], value: impl Fn(&Patch) -> Option<f64>, num_bins: usize) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for label in Label::ALL {
        let xs: Vec<f64> = patches.iter().filter(|p| p.label == label).filter_map(&value).collect();
        if xs.is_empty() {
            continue;
        }
        for b in histogram_density(&xs, Binning::Linear, num_bins)? {
            rows.push(LabeledDensity {
                label,
                bin_center: b.bin_center,
                lower: b.lower,
                upper: b.upper,
                density: b.density,
                count: b.count,
            });
        }
    }
    csv_bytes(&rows, &DENSITY_HEADER)
}

fn mean_by_label(
    patches: &[Patch],
    pair: impl Fn(&Patch) -> Option<(f64, f64)>,
    binning: Binning,
    num_bins: usize,
) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for label in Label::ALL {
        let pairs: Vec<(f64, f64)> = patches.iter().filter(|p| p.label == label).filter_map(&pair).collect();
        if pairs.is_empty() {
            continue;
        }
        for b in conditional_mean_binned(&pairs, binning, num_bins)? {
            rows.push(LabeledMean {
                label,
                bin_center: b.bin_center,
                mean: b.mean,
                standard_error: b.standard_error,
                count: b.count,
            });
        }
    }
    csv_bytes(&rows, &MEAN_HEADER)
}

/// Plot-data files, one per figure analogue, as `(file name, contents)`.
/// Densities and conditional means use patches with at least `n_min`
/// transactions; the CCDFs use every patch with a positive value.
pub fn figure_data(patches: &[Patch], n_min: usize, num_bins: usize) -> Result<Vec<(String, Vec<u8>)>> {
    let long = filter_min_length(patches, n_min);
    let len = |p: &Patch| p.n_tot as f64;
    let mut files = vec![
        (
            "buy_volume_ratio_density.csv".to_string(),
            density_by_label(&long, |p| Some(p.buy_volume_ratio), num_bins)?,
        ),
        (
            "buy_volume_ratio_vs_length.csv".to_string(),
            mean_by_label(&long, |p| Some((len(p), p.buy_volume_ratio)), Binning::Log, num_bins)?,
        ),
        (
            "market_order_fraction_density.csv".to_string(),
            density_by_label(&long, |p| p.market_order_fraction, num_bins)?,
        ),
        (
            "market_order_fraction_vs_length.csv".to_string(),
            mean_by_label(
                &long,
                |p| p.market_order_fraction.map(|f| (len(p), f)),
                Binning::Log,
                num_bins,
            )?,
        ),
        (
            "participation_density.csv".to_string(),
            density_by_label(&long, |p| Some(p.participation_rate), num_bins)?,
        ),
        (
            "participation_vs_length.csv".to_string(),
            mean_by_label(&long, |p| Some((len(p), p.participation_rate)), Binning::Log, num_bins)?,
        ),
        (
            "participation_vs_market_order_fraction.csv".to_string(),
            mean_by_label(
                &long,
                |p| p.market_order_fraction.map(|f| (f, p.participation_rate)),
                Binning::Linear,
                num_bins,
            )?,
        ),
    ];
    let mut ccdf = Vec::new();
    for (directional, group) in [(true, "directional"), (false, "neutral")] {
        for variable in ["T", "N_tot", "V_tot"] {
            let xs: Vec<f64> = patches
                .iter()
                .filter(|p| p.label.is_directional() == directional)
                .map(|p| patch_variable(p, variable))
                .filter(|&x| x > 0.0)
                .collect();
            for (value, c) in empirical_ccdf(&xs) {
                ccdf.push(CcdfPoint {
                    group,
                    variable,
                    value,
                    ccdf: c,
                });
            }
        }
    }
    files.push((
        "size_ccdf.csv".to_string(),
        csv_bytes(&ccdf, &["group", "variable", "value", "ccdf"])?,
    ));
    Ok(files)
}

/// Write the pooled statistics (summary, Hill table, figure data) into
/// `dir`. Returns `(relative path, data rows)` for each file.
pub fn write_stats_reports(
    dir: &Path,
    tape: Option<&TapeSummary>,
    patches: &[Patch],
    config: &RunConfig,
) -> Result<Vec<(String, usize)>> {
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>, rows: usize| -> Result<()> {
        write_atomic(&dir.join(&name), &bytes)?;
        written.push((name, rows));
        Ok(())
    };
    let summary = summary_rows(tape, patches, config.n_min);
    put(
        "summary.csv".into(),
        csv_bytes(&summary, &["line", "statistic", "value"])?,
        summary.len(),
    )?;
    let long = filter_min_length(patches, config.n_min);
    let hill = hill_table(&long, config.hill_quantile);
    put(
        "hill.csv".into(),
        csv_bytes(
            &hill,
            &[
                "group",
                "variable",
                "exponent",
                "ci_half_width",
                "ci_low",
                "ci_high",
                "k",
                "n",
                "note",
            ],
        )?,
        hill.len(),
    )?;
    for (name, bytes) in figure_data(patches, config.n_min, config.num_bins)? {
        let rows = bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
        put(format!("figures/{name}"), bytes, rows)?;
    }
    Ok(written)
}

#[derive(Serialize)]
struct WindowRow<'a> {
    window_id: &'a str,
    x: f64,
    mean_return: f64,
    volatility: f64,
    num_returns: usize,
    buy_count: usize,
    neutral_count: usize,
    sell_count: usize,
    delta_count: f64,
    delta_mean_length: f64,
    delta_market_order_fraction: f64,
    delta_participation_rate: f64,
}

#[derive(Serialize)]
struct RegressionRow {
    delta: &'static str,
    windows_used: usize,
    slope: Option<f64>,
    intercept: Option<f64>,
    correlation: Option<f64>,
    p_value: Option<f64>,
    degenerate: bool,
}

/// Write the asymmetry windows and regressions into `dir`.
pub fn write_asymmetry_reports(dir: &Path, report: &AsymmetryReport) -> Result<Vec<(String, usize)>> {
    let windows: Vec<WindowRow> = report
        .windows
        .iter()
        .map(|w| WindowRow {
            window_id: &w.window_id,
            x: w.trend.x,
            mean_return: w.trend.mean_return,
            volatility: w.trend.volatility,
            num_returns: w.trend.num_returns,
            buy_count: w.buy.count,
            neutral_count: w.neutral.count,
            sell_count: w.sell.count,
            delta_count: w.delta(Delta::Count),
            delta_mean_length: w.delta(Delta::MeanLength),
            delta_market_order_fraction: w.delta(Delta::MarketOrderFraction),
            delta_participation_rate: w.delta(Delta::ParticipationRate),
        })
        .collect();
    let regressions: Vec<RegressionRow> = report
        .regressions
        .iter()
        .map(|r| RegressionRow {
            delta: r.delta.as_str(),
            windows_used: r.windows_used,
            slope: r.regression.map(|g| g.slope),
            intercept: r.regression.map(|g| g.intercept),
            correlation: r.regression.map(|g| g.correlation),
            p_value: r.regression.map(|g| g.p_value),
            degenerate: r.degenerate,
        })
        .collect();
    write_atomic(&dir.join("asymmetry_windows.csv"), &csv_bytes(&windows, &[])?)?;
    write_atomic(&dir.join("asymmetry_regressions.csv"), &csv_bytes(&regressions, &[])?)?;
    Ok(vec![
        ("asymmetry_windows.csv".into(), windows.len()),
        ("asymmetry_regressions.csv".into(), regressions.len()),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub run_id: String,
    pub status: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub row_counts: BTreeMap<String, usize>,
    pub rows_read: usize,
    pub rows_malformed: usize,
    pub tasks: Vec<TaskResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub patches: Vec<Patch>,
}

/// Run directory for `config`.
pub fn run_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.join(config.resolved_run_id())
}

/// Run everything. On failure after the run directory exists, a
/// [`FAILED_MARKER`] file with the error is left next to any partial
/// outputs.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let dir = run_dir(config);
    std::fs::create_dir_all(&dir)?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    let result = run_stages(config, &dir);
    if let Err(e) = &result {
        std::fs::write(&marker, format!("{e}\n"))?;
    }
    result
}

fn run_stages(config: &RunConfig, dir: &Path) -> Result<PipelineOutcome> {
    let calendar = config.calendar.as_deref().map(TradingCalendar::load).transpose()?;
    let (tape, load) = load_transactions(&config.transactions, &config.schema(), calendar)?;
    let periods = member_periods(&tape, config);
    if periods.is_empty() {
        return Err(Error::NoMembersPassedFilter);
    }
    log::info!("{} member-periods passed the activity filter", periods.len());

    let tasks: Vec<TaskResult> = periods
        .par_iter()
        .map(|mp| {
            let task = analyze_member_period(&tape, mp, config)?;
            write_atomic(
                &dir.join("models")
                    .join(format!("{}.json", file_stem(&task.member_id, &task.period))),
                task.model_json.as_bytes(),
            )?;
            Ok(task)
        })
        .collect::<Result<_>>()?;

    let mut row_counts = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut patches: Vec<Patch> = tasks.iter().flat_map(|t| t.patches.iter().cloned()).collect();
    sort_patches(&mut patches);
    let mut buf = Vec::new();
    write_patches_csv(&mut buf, &patches)?;
    write_atomic(&dir.join("patches.csv"), &buf)?;
    row_counts.insert("patches.csv".to_string(), patches.len());

    let summary = tape_summary(&tape, periods.iter().map(|p| p.member_id.as_str()));
    for (name, rows) in write_stats_reports(dir, Some(&summary), &patches, config)? {
        row_counts.insert(name, rows);
    }

    match asymmetry_by_trend(&patches, &tape.daily_closes(), config.asymmetry_min_patch_len) {
        Ok(report) => {
            for (name, rows) in write_asymmetry_reports(dir, &report)? {
                row_counts.insert(name, rows);
            }
        }
        Err(e @ Error::InsufficientData(_)) => warnings.push(format!("asymmetry skipped: {e}")),
        Err(e) => return Err(e),
    }

    if let Some(path) = &config.segments {
        let segments = read_segments_csv(std::fs::File::open(path)?)?;
        let rows = cross_tabulate(&patches, &segments, config.compare_assignment)?;
        let mut buf = Vec::new();
        write_cross_tab_csv(&mut buf, &rows)?;
        write_atomic(&dir.join("compare.csv"), &buf)?;
        row_counts.insert("compare.csv".to_string(), rows.len());
    }

    for t in &tasks {
        if t.labeling.ambiguous {
            warnings.push(format!("{} {}: tied buy emissions", t.member_id, t.period));
        }
        if t.fit.degenerate {
            warnings.push(format!("{} {}: single-symbol sequence", t.member_id, t.period));
        }
        if !t.fit.converged {
            warnings.push(format!("{} {}: EM stopped before converging", t.member_id, t.period));
        }
    }
    if !load.malformed.is_empty() {
        warnings.push(format!("{} malformed input rows skipped", load.malformed.len()));
    }

    let mut versions = BTreeMap::new();
    versions.insert("patchscan-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("manifest".to_string(), "1".to_string());
    let manifest = Manifest {
        run_id: config.resolved_run_id(),
        status: "ok".into(),
        config: config.clone(),
        config_hash: config.config_hash(),
        seed: config.seed,
        versions,
        row_counts,
        rows_read: load.rows_read,
        rows_malformed: load.malformed.len(),
        tasks,
        warnings,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(PipelineOutcome {
        run_dir: dir.to_path_buf(),
        patches,
        manifest,
    })
}
