//! Explicit-duration hidden semi-Markov models with nonparametric sojourn
//! distributions, fitted by EM in `O(T * N * max_sojourn)` per iteration.

mod fit;
mod inference;
mod model;
pub mod oracle;
mod simulate;

pub use fit::{fit_hsmm, fit_hsmm_from, random_hsmm, DEFAULT_MAX_SOJOURN, RECOMMENDED_MIN_LENGTH};
pub use inference::{decode_hsmm, hsmm_log_likelihood, HsmmDecoding};
pub use model::{HsmmModel, SOJOURN_TOL};
pub use simulate::simulate_hsmm;
