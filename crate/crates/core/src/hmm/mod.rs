//! Discrete-emission hidden Markov models.
//!
//! Observations are symbol indices in `0..num_symbols`; for transaction
//! signs symbol `0` is a sell and symbol `1` a buy (see [`crate::Sign`]).
//! Everything here is label-agnostic: which state means "buy" is decided
//! later by [`crate::patches::label_states`].

mod fit;
mod inference;
mod model;
pub mod oracle;
mod simulate;

pub use fit::{align_states, fit_baum_welch, random_model, FitConfig, FitReport};
pub use inference::{log_likelihood, posterior_decode, viterbi_decode, Decoding, PosteriorMatrix, TIE_TOL};
pub use model::{HmmModel, STOCHASTIC_TOL};
pub use simulate::{complete_run_lengths, simulate, sojourn_pmf, SojournPmf};

pub(crate) use fit::restart_seeds;
pub(crate) use model::{check_rows, check_symbols, flatten_rows};
pub(crate) use simulate::geometric_pmf;
