//! Shared workloads for the criterion benches.

use patchscan_core::hmm::{simulate, HmmModel};
use patchscan_core::HsmmModel;

/// The three-state buy/neutral/sell generator used throughout the benches.
pub fn reference_hmm() -> HmmModel {
    HmmModel::new(
        vec![
            vec![0.89, 0.055, 0.055],
            vec![0.075, 0.85, 0.075],
            vec![0.055, 0.055, 0.89],
        ],
        vec![vec![0.05, 0.95], vec![0.49, 0.51], vec![0.94, 0.06]],
        vec![1.0 / 3.0; 3],
    )
    .expect("reference model is valid")
}

/// `len` symbols drawn from [`reference_hmm`].
pub fn reference_symbols(len: usize, seed: u64) -> Vec<usize> {
    simulate(&reference_hmm(), len, seed).expect("simulation succeeds").0
}

/// The reference HMM recast with sojourns truncated at `max_sojourn`.
pub fn reference_hsmm(max_sojourn: usize) -> HsmmModel {
    HsmmModel::from_hmm(&reference_hmm(), max_sojourn).expect("conversion succeeds")
}
