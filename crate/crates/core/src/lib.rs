//! Detection of hidden-order patches in transaction-sign series.
//!
//! A market member's trades are reduced to a sequence of buy/sell symbols,
//! a three-state hidden Markov model (or an explicit-duration semi-Markov
//! model) is fitted to it, and the decoded state runs become *patches*:
//! stretches of predominantly buying, selling or undirected activity. The
//! crate then characterizes those patches: sizes and durations, tail
//! exponents, liquidity and participation, and buy-sell asymmetry against
//! the monthly price trend.
//!
//! Module map:
//! - [`hmm`]: model, likelihood, Baum-Welch, posterior and Viterbi decoding.
//! - [`hsmm`]: explicit-duration semi-Markov model with free-form sojourns.
//! - [`synthgen`]: Pareto-length patch series with ground truth.
//! - [`trades`]: transactions, CSV ingestion, calendar, Lee-Ready.
//! - [`patches`]: state labeling and per-patch metrics.
//! - [`stats`]: Hill estimator, CCDF, binned means, Jarque-Bera, asymmetry.
//! - [`compare`]: patches inside an external segmentation.
//! - [`pipeline`]: the batch run that ties it together.

pub mod compare;
pub mod error;
pub mod hmm;
pub mod hsmm;
pub mod patches;
pub mod pipeline;
pub mod prob;
pub mod stats;
pub mod synthgen;
pub mod trades;

pub use error::{Error, ErrorKind, Result};
pub use hmm::{FitConfig, FitReport, HmmModel};
pub use hsmm::HsmmModel;
pub use patches::{Label, Patch, StateLabeling};
pub use trades::{MarketTape, Sign, Transaction};

/// Symbol used for a sell in observation sequences.
pub const SELL_SYMBOL: usize = 0;
/// Symbol used for a buy in observation sequences.
pub const BUY_SYMBOL: usize = 1;
