use serde::Serialize;

use super::model::HmmModel;
use crate::error::{Error, Result};
use crate::prob::{sample_categorical, seeded_rng};

/// Draw `length` symbols and the hidden path that produced them.
pub fn simulate(model: &HmmModel, length: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if length == 0 {
        return Err(Error::InvalidArgument("simulation length must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut states = Vec::with_capacity(length);
    let mut symbols = Vec::with_capacity(length);
    let mut q = sample_categorical(&mut rng, model.initial());
    for t in 0..length {
        if t > 0 {
            q = sample_categorical(&mut rng, model.transition_row(q));
        }
        states.push(q);
        symbols.push(sample_categorical(&mut rng, model.emission_row(q)));
    }
    Ok((symbols, states))
}

/// Geometric run-length law of one HMM state truncated at `max_len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SojournPmf {
    /// `pmf[l - 1] = a_ii^(l-1) (1 - a_ii)` for `l = 1..=max_len`.
    pub pmf: Vec<f64>,
    /// Probability of a run longer than `max_len`, i.e. `a_ii^max_len`.
    pub tail_mass: f64,
}

impl SojournPmf {
    pub fn cdf(&self) -> Vec<f64> {
        self.pmf
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }
}

/// Probability that `state` lasts exactly `l` steps, for `l = 1..=max_len`.
pub fn sojourn_pmf(model: &HmmModel, state: usize, max_len: usize) -> Result<SojournPmf> {
    if state >= model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "state {state} out of range for {} states",
            model.num_states()
        )));
    }
    let stay = model.transition(state, state);
    if stay >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "state {state} is absorbing; its sojourn has no finite law"
        )));
    }
    Ok(geometric_pmf(stay, max_len))
}

pub(crate) fn geometric_pmf(stay: f64, max_len: usize) -> SojournPmf {
    let mut pmf = Vec::with_capacity(max_len);
    let mut survive = 1.0;
    for _ in 0..max_len {
        pmf.push(survive * (1.0 - stay));
        survive *= stay;
    }
    SojournPmf {
        pmf,
        tail_mass: survive,
    }
}

/// Lengths of the complete runs of each state in `path`. The first and last
/// runs are censored by the sequence boundaries and are left out.
pub fn complete_run_lengths(path: &[usize], num_states: usize) -> Vec<Vec<usize>> {
    let mut runs = vec![Vec::new(); num_states];
    let mut bounds = Vec::new();
    let mut start = 0;
    for t in 1..=path.len() {
        if t == path.len() || path[t] != path[start] {
            bounds.push((path[start], t - start));
            start = t;
        }
    }
    if bounds.len() > 2 {
        for &(s, len) in &bounds[1..bounds.len() - 1] {
            runs[s].push(len);
        }
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_values() {
        let p = geometric_pmf(0.9, 3);
        assert!((p.pmf[0] - 0.1).abs() < 1e-15);
        assert!((p.pmf[1] - 0.09).abs() < 1e-15);
        let total: f64 = p.pmf.iter().sum();
        assert!((total + p.tail_mass - 1.0).abs() < 1e-15);

        let p = geometric_pmf(0.0, 4);
        assert_eq!(p.pmf, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn partial_sums_approach_one() {
        for &a in &[0.1, 0.5, 0.89, 0.99] {
            for &len in &[1usize, 10, 100] {
                let p = geometric_pmf(a, len);
                let s: f64 = p.pmf.iter().sum();
                assert!(s >= 1.0 - a.powi(len as i32) - 1e-12);
            }
        }
    }

    #[test]
    fn absorbing_state_rejected() {
        let m = HmmModel::new(
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![vec![1.0], vec![1.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert!(sojourn_pmf(&m, 0, 10).is_err());
        assert!(sojourn_pmf(&m, 1, 10).is_ok());
        assert!(sojourn_pmf(&m, 2, 10).is_err());
    }

    #[test]
    fn absorbing_start_gives_constant_path() {
        let m = HmmModel::new(
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let (_, states) = simulate(&m, 1000, 3).unwrap();
        assert!(states.iter().all(|&s| s == 0));
    }

    #[test]
    fn seeded_simulation_repeats() {
        let m = HmmModel::new(
            vec![vec![0.6, 0.4], vec![0.3, 0.7]],
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(simulate(&m, 500, 9).unwrap(), simulate(&m, 500, 9).unwrap());
        assert_ne!(simulate(&m, 500, 9).unwrap(), simulate(&m, 500, 10).unwrap());
        assert!(simulate(&m, 0, 1).is_err());
    }

    #[test]
    fn run_lengths_drop_censored_ends() {
        let runs = complete_run_lengths(&[0, 0, 1, 1, 1, 0, 2, 2, 0, 0], 3);
        assert_eq!(runs, vec![vec![1], vec![3], vec![2]]);
    }
}
