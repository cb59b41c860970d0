//! Exhaustive path enumeration. Exponential in the sequence length; exists
//! to cross-check the dynamic-programming routines on short inputs.

use super::model::HmmModel;
use crate::error::{Error, Result};

/// Largest number of state paths the oracles will enumerate.
pub const MAX_ENUMERATED_PATHS: u128 = 10_000_000;

fn path_count(n: usize, len: usize) -> Result<usize> {
    let count = (n as u128).checked_pow(len as u32);
    match count {
        Some(c) if c <= MAX_ENUMERATED_PATHS => Ok(c as usize),
        _ => Err(Error::EnumerationTooLarge { states: n, len }),
    }
}

/// Visit every state path with its joint probability `P(Q, O)`.
fn for_each_path(model: &HmmModel, obs: &[usize], mut visit: impl FnMut(&[usize], f64)) -> Result<()> {
    model.check_observations(obs)?;
    let n = model.num_states();
    let total = path_count(n, obs.len())?;
    let mut path = vec![0usize; obs.len()];
    for code in 0..total {
        let mut c = code;
        for q in path.iter_mut() {
            *q = c % n;
            c /= n;
        }
        let mut p = model.initial()[path[0]] * model.emission(path[0], obs[0]);
        for t in 1..obs.len() {
            p *= model.transition(path[t - 1], path[t]) * model.emission(path[t], obs[t]);
        }
        visit(&path, p);
    }
    Ok(())
}

/// `P(O | model)` as the direct sum over all `N^T` state paths.
pub fn brute_force_likelihood(model: &HmmModel, obs: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for_each_path(model, obs, |_, p| total += p)?;
    Ok(total)
}

/// `P(q_t = i | O)` by enumeration, one row per position.
pub fn brute_force_posterior(model: &HmmModel, obs: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut gamma = vec![vec![0.0; model.num_states()]; obs.len()];
    let mut total = 0.0;
    for_each_path(model, obs, |path, p| {
        total += p;
        for (t, &q) in path.iter().enumerate() {
            gamma[t][q] += p;
        }
    })?;
    if total <= 0.0 {
        return Err(Error::Numeric("observation sequence has zero probability".into()));
    }
    gamma.iter_mut().flatten().for_each(|g| *g /= total);
    Ok(gamma)
}

/// The joint-probability maximizing path by enumeration.
pub fn brute_force_best_path(model: &HmmModel, obs: &[usize]) -> Result<(Vec<usize>, f64)> {
    let mut best = (Vec::new(), -1.0);
    for_each_path(model, obs, |path, p| {
        if p > best.1 {
            best = (path.to_vec(), p);
        }
    })?;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_symbol_closed_form() {
        let m = HmmModel::new(
            vec![vec![0.6, 0.4], vec![0.3, 0.7]],
            vec![vec![0.2, 0.8], vec![0.9, 0.1]],
            vec![0.25, 0.75],
        )
        .unwrap();
        let p = brute_force_likelihood(&m, &[1]).unwrap();
        assert!((p - (0.25 * 0.8 + 0.75 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn impossible_under_only_reachable_state() {
        let m = HmmModel::new(
            vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert_eq!(brute_force_likelihood(&m, &[0, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn refuses_long_sequences() {
        let m = HmmModel::new(
            vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![0.5, 0.5, 0.0],
        )
        .unwrap();
        assert!(brute_force_likelihood(&m, &[0; 14]).is_ok());
        assert!(matches!(
            brute_force_likelihood(&m, &[0; 15]),
            Err(Error::EnumerationTooLarge { states: 3, len: 15 })
        ));
    }
}
