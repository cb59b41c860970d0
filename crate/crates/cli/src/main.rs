//! `patchscan`: command-line driver for patch detection runs.
//!
//! Every subcommand reads its defaults from the `--config` JSON file (a
//! pipeline run config) when one is given; explicit flags win.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use patchscan_core::compare::{cross_tabulate, read_segments_csv, write_cross_tab_csv, Assignment};
use patchscan_core::patches::{read_patches_csv, sort_patches, write_patches_csv};
use patchscan_core::pipeline::{
    extract_member_period, fit_member_period, run_pipeline, select_member_period, tape_summary,
    write_asymmetry_reports, write_atomic, write_stats_reports, FittedModel, RunConfig,
};
use patchscan_core::stats::asymmetry_by_trend;
use patchscan_core::synthgen::{
    generate_patched_series, write_fixture_csv, write_ground_truth, FixtureFill, PatchGenConfig,
};
use patchscan_core::trades::{load_transactions, TradingCalendar};
use patchscan_core::{ErrorKind, MarketTape};

#[derive(Parser)]
#[command(
    name = "patchscan",
    version,
    about = "Detect hidden-order patches in transaction-sign series"
)]
struct Cli {
    /// Run config (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic patched sign series with ground truth.
    Simulate(SimulateArgs),
    /// Fit a model to one member's signs and write it as JSON.
    Fit(FitArgs),
    /// Decode one member's states with a fitted model.
    Decode(DecodeArgs),
    /// Extract one member's patches with a fitted model.
    Patches(DecodeArgs),
    /// Summary, Hill tables and figure data from a patch CSV.
    Stats(StatsArgs),
    /// Buy-sell asymmetry against the monthly price trend.
    Asymmetry(AsymmetryArgs),
    /// Count HMM patches inside an external segmentation.
    Compare(CompareArgs),
    /// Run the whole analysis.
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone, Default)]
struct InputArgs {
    /// Transactions CSV.
    #[arg(long)]
    transactions: Option<PathBuf>,
    /// Trading calendar JSON.
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long)]
    max_malformed_fraction: Option<f64>,
    /// The feed lists both sides of each trade.
    #[arg(long)]
    dedup_both_sides: bool,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    num_states: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Fit the explicit-duration semi-Markov model.
    #[arg(long)]
    hsmm: bool,
    #[arg(long)]
    max_sojourn: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    num_patches: Option<usize>,
    #[arg(long)]
    pareto_exponent: Option<f64>,
    #[arg(long)]
    min_length: Option<usize>,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Make every patch a buy patch instead of alternating.
    #[arg(long)]
    no_alternate: bool,
    #[arg(long, default_value = "SYN")]
    member_id: String,
    /// Epoch seconds of the first trade.
    #[arg(long)]
    start_time: Option<f64>,
    #[arg(long)]
    spacing_seconds: Option<f64>,
    #[arg(long)]
    shares: Option<u64>,
    #[arg(long)]
    price: Option<f64>,
    /// Transactions CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth patch CSV to write.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    member: String,
    /// Fit one calendar year; all trades when omitted.
    #[arg(long)]
    year: Option<i32>,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Model JSON from `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    member: String,
    #[arg(long)]
    year: Option<i32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Patch CSV (one or more; concatenated).
    #[arg(long, required = true, num_args = 1..)]
    patches: Vec<PathBuf>,
    /// Transactions CSV, for the whole-tape summary lines.
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    hill_quantile: Option<f64>,
    #[arg(long)]
    num_bins: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AsymmetryArgs {
    #[arg(long, required = true, num_args = 1..)]
    patches: Vec<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    min_patch_len: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AssignmentArg {
    Midpoint,
    FirstIndex,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, required = true, num_args = 1..)]
    patches: Vec<PathBuf>,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long, value_enum)]
    assignment: Option<AssignmentArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    min_transactions_per_year: Option<usize>,
    #[arg(long)]
    min_active_days: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    hill_quantile: Option<f64>,
    #[arg(long)]
    num_bins: Option<usize>,
    #[arg(long)]
    asymmetry_min_patch_len: Option<usize>,
    #[arg(long, value_enum)]
    compare_assignment: Option<AssignmentArg>,
    /// Fit each member once over all years.
    #[arg(long)]
    single_period: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn assignment(a: AssignmentArg) -> Assignment {
    match a {
        AssignmentArg::Midpoint => Assignment::Midpoint,
        AssignmentArg::FirstIndex => Assignment::FirstIndex,
    }
}

impl InputArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.transactions, self.transactions.clone());
        if self.calendar.is_some() {
            c.calendar = self.calendar.clone();
        }
        set(&mut c.max_malformed_fraction, self.max_malformed_fraction);
        c.dedup_both_sides |= self.dedup_both_sides;
    }
}

impl ModelArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.num_states, self.num_states);
        set(&mut c.restarts, self.restarts);
        set(&mut c.tolerance, self.tolerance);
        set(&mut c.max_iterations, self.max_iterations);
        set(&mut c.max_sojourn, self.max_sojourn);
        set(&mut c.seed, self.seed);
        c.use_hsmm |= self.hsmm;
    }
}

fn base_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn load_tape(config: &RunConfig) -> Result<MarketTape> {
    if config.transactions.as_os_str().is_empty() {
        return Err(patchscan_core::Error::Config("no transactions file given".into()).into());
    }
    let calendar = config.calendar.as_deref().map(TradingCalendar::load).transpose()?;
    let (tape, report) = load_transactions(&config.transactions, &config.schema(), calendar)
        .with_context(|| format!("loading {}", config.transactions.display()))?;
    if !report.malformed.is_empty() {
        log::warn!("{} malformed rows skipped", report.malformed.len());
    }
    Ok(tape)
}

fn read_patch_files(paths: &[PathBuf]) -> Result<Vec<patchscan_core::Patch>> {
    let mut all = Vec::new();
    for p in paths {
        let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        all.extend(read_patches_csv(f)?);
    }
    sort_patches(&mut all);
    Ok(all)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut gen = PatchGenConfig::default();
    set(&mut gen.num_patches, args.num_patches);
    set(&mut gen.pareto_exponent, args.pareto_exponent);
    set(&mut gen.min_length, args.min_length);
    set(&mut gen.bias, args.bias);
    set(&mut gen.seed, args.seed);
    gen.alternate_signs = !args.no_alternate;
    let mut fill = FixtureFill {
        member_id: args.member_id,
        ..FixtureFill::default()
    };
    set(&mut fill.start_time, args.start_time);
    set(&mut fill.spacing_seconds, args.spacing_seconds);
    set(&mut fill.shares, args.shares);
    set(&mut fill.price, args.price);
    let (symbols, truth) = generate_patched_series(&gen)?;
    let mut buf = Vec::new();
    write_fixture_csv(&mut buf, &symbols, &fill)?;
    write_atomic(&args.out, &buf)?;
    if let Some(path) = args.truth {
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &truth)?;
        write_atomic(&path, &buf)?;
    }
    log::info!("{} symbols in {} patches", symbols.len(), truth.len());
    Ok(())
}

fn fit(config: &RunConfig, args: FitArgs) -> Result<()> {
    let mut c = config.clone();
    args.input.apply(&mut c);
    args.model.apply(&mut c);
    let tape = load_tape(&c)?;
    let mp = select_member_period(&tape, &args.member, args.year)?;
    let (model, summary) = fit_member_period(&tape, &mp, &c)?;
    write_atomic(&args.out, model.to_json()?.as_bytes())?;
    log::info!(
        "log-likelihood {} after {} iterations (converged: {})",
        summary.log_likelihood,
        summary.iterations,
        summary.converged
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FittedModel::from_json(&text)?)
}

fn decode(config: &RunConfig, args: DecodeArgs) -> Result<()> {
    let mut c = config.clone();
    args.input.apply(&mut c);
    let tape = load_tape(&c)?;
    let model = load_model(&args.model)?;
    let mp = select_member_period(&tape, &args.member, args.year)?;
    let txs = mp.transactions(&tape);
    let obs: Vec<usize> = txs.iter().map(|t| t.sign.symbol()).collect();
    let labeling = model.labeling()?;
    let path = model.decode(&obs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "timestamp", "sign", "state", "label"])?;
    for (i, (tx, &s)) in txs.iter().zip(&path).enumerate() {
        w.write_record([
            (i + mp.index_offset).to_string(),
            tx.timestamp.to_string(),
            tx.sign.to_string(),
            s.to_string(),
            labeling.label(s).to_string(),
        ])?;
    }
    write_atomic(&args.out, &w.into_inner()?)?;
    Ok(())
}

fn patches(config: &RunConfig, args: DecodeArgs) -> Result<()> {
    let mut c = config.clone();
    args.input.apply(&mut c);
    let tape = load_tape(&c)?;
    let model = load_model(&args.model)?;
    let mp = select_member_period(&tape, &args.member, args.year)?;
    let (_, found) = extract_member_period(&model, &tape, &mp)?;
    let mut buf = Vec::new();
    write_patches_csv(&mut buf, &found)?;
    write_atomic(&args.out, &buf)?;
    log::info!("{} patches", found.len());
    Ok(())
}

fn stats(config: &RunConfig, args: StatsArgs) -> Result<()> {
    let mut c = config.clone();
    set(&mut c.transactions, args.transactions);
    if args.calendar.is_some() {
        c.calendar = args.calendar;
    }
    set(&mut c.n_min, args.n_min);
    set(&mut c.hill_quantile, args.hill_quantile);
    set(&mut c.num_bins, args.num_bins);
    let all = read_patch_files(&args.patches)?;
    let summary = if c.transactions.as_os_str().is_empty() {
        None
    } else {
        let tape = load_tape(&c)?;
        Some(tape_summary(&tape, all.iter().map(|p| p.member_id.as_str())))
    };
    write_stats_reports(&args.out_dir, summary.as_ref(), &all, &c)?;
    Ok(())
}

fn asymmetry(config: &RunConfig, args: AsymmetryArgs) -> Result<()> {
    let mut c = config.clone();
    args.input.apply(&mut c);
    set(&mut c.asymmetry_min_patch_len, args.min_patch_len);
    let tape = load_tape(&c)?;
    let all = read_patch_files(&args.patches)?;
    let report = asymmetry_by_trend(&all, &tape.daily_closes(), c.asymmetry_min_patch_len)?;
    write_asymmetry_reports(&args.out_dir, &report)?;
    for r in &report.regressions {
        match r.regression {
            Some(g) => log::info!("{}: r = {:.3}, p = {:.3e}", r.delta.as_str(), g.correlation, g.p_value),
            None => log::warn!("{}: degenerate regression", r.delta.as_str()),
        }
    }
    Ok(())
}

fn compare(config: &RunConfig, args: CompareArgs) -> Result<()> {
    let segments_path = args
        .segments
        .or_else(|| config.segments.clone())
        .ok_or_else(|| patchscan_core::Error::Config("no segments file given".into()))?;
    let how = args.assignment.map(assignment).unwrap_or(config.compare_assignment);
    let all = read_patch_files(&args.patches)?;
    let segments = read_segments_csv(std::fs::File::open(&segments_path)?)?;
    let rows = cross_tabulate(&all, &segments, how)?;
    let mut buf = Vec::new();
    write_cross_tab_csv(&mut buf, &rows)?;
    write_atomic(&args.out, &buf)?;
    Ok(())
}

fn pipeline(config: &RunConfig, args: PipelineArgs) -> Result<()> {
    let mut c = config.clone();
    args.input.apply(&mut c);
    args.model.apply(&mut c);
    if args.segments.is_some() {
        c.segments = args.segments;
    }
    set(&mut c.output_dir, args.output_dir);
    if args.run_id.is_some() {
        c.run_id = args.run_id;
    }
    set(&mut c.min_transactions_per_year, args.min_transactions_per_year);
    set(&mut c.min_active_days, args.min_active_days);
    set(&mut c.n_min, args.n_min);
    set(&mut c.hill_quantile, args.hill_quantile);
    set(&mut c.num_bins, args.num_bins);
    set(&mut c.asymmetry_min_patch_len, args.asymmetry_min_patch_len);
    set(&mut c.compare_assignment, args.compare_assignment.map(assignment));
    c.single_period |= args.single_period;
    let outcome = run_pipeline(&c)?;
    for w in &outcome.manifest.warnings {
        log::warn!("{w}");
    }
    println!("{}", outcome.run_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(&config, a),
        Command::Decode(a) => decode(&config, a),
        Command::Patches(a) => patches(&config, a),
        Command::Stats(a) => stats(&config, a),
        Command::Asymmetry(a) => asymmetry(&config, a),
        Command::Compare(a) => compare(&config, a),
        Command::Pipeline(a) => pipeline(&config, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err
        .chain()
        .find_map(|e| e.downcast_ref::<patchscan_core::Error>())
        .map(|e| e.kind())
    {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numeric) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
