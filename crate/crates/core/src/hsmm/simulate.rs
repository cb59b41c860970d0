use super::model::HsmmModel;
use crate::error::{Error, Result};
use crate::prob::{sample_categorical, seeded_rng};

/// Draw a state, a stay length from its sojourn law, emit that many symbols,
/// jump, and repeat until `length` symbols exist. The last stay is cut short.
pub fn simulate_hsmm(model: &HsmmModel, length: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if length == 0 {
        return Err(Error::InvalidArgument("simulation length must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut symbols = Vec::with_capacity(length);
    let mut states = Vec::with_capacity(length);
    let mut q = sample_categorical(&mut rng, model.initial());
    loop {
        let stay = sample_categorical(&mut rng, model.sojourn(q)) + 1;
        for _ in 0..stay {
            states.push(q);
            symbols.push(sample_categorical(&mut rng, model.emission_row(q)));
            if symbols.len() == length {
                return Ok((symbols, states));
            }
        }
        q = sample_categorical(&mut rng, model.transition_row(q));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::complete_run_lengths;

    fn point_mass_three() -> HsmmModel {
        HsmmModel::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 0.0],
            vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn point_mass_sojourn_runs() {
        let (obs, states) = simulate_hsmm(&point_mass_three(), 100, 1).unwrap();
        assert_eq!(obs.len(), 100);
        for runs in complete_run_lengths(&states, 2) {
            assert!(runs.iter().all(|&l| l == 3));
        }
        assert_eq!(&states[..6], &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn seeded() {
        let m = HsmmModel::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![0.5, 0.5],
            vec![vec![0.3, 0.3, 0.4], vec![0.5, 0.25, 0.25]],
        )
        .unwrap();
        assert_eq!(simulate_hsmm(&m, 300, 8).unwrap(), simulate_hsmm(&m, 300, 8).unwrap());
    }
}
