use std::time::Instant;

use rayon::prelude::*;

use super::inference::expectations;
use super::model::HsmmModel;
use crate::error::{Error, Result};
use crate::hmm::{check_symbols, restart_seeds, FitConfig, FitReport};
use crate::prob::{dirichlet_uniform, floor_and_normalize, normalize, seeded_rng, PROB_FLOOR};

/// Inputs shorter than this are accepted but flagged: nonparametric sojourn
/// estimates need long sequences.
pub const RECOMMENDED_MIN_LENGTH: usize = 20_000;

/// Default longest sojourn, in transactions.
pub const DEFAULT_MAX_SOJOURN: usize = 200;

/// Random start with uniform sojourns over `1..=max_sojourn`.
pub fn random_hsmm(num_states: usize, num_symbols: usize, max_sojourn: usize, seed: u64) -> HsmmModel {
    let mut rng = seeded_rng(seed);
    let n = num_states;
    let mut transition = vec![0.0; n * n];
    if n == 1 {
        transition[0] = 1.0;
    } else {
        for i in 0..n {
            let draw = dirichlet_uniform(&mut rng, n - 1);
            let mut it = draw.into_iter();
            for j in (0..n).filter(|&j| j != i) {
                transition[i * n + j] = it.next().unwrap();
            }
        }
    }
    let emission: Vec<f64> = (0..n).flat_map(|_| dirichlet_uniform(&mut rng, num_symbols)).collect();
    let initial = dirichlet_uniform(&mut rng, n);
    let sojourn = vec![1.0 / max_sojourn as f64; n * max_sojourn];
    HsmmModel::from_flat(n, num_symbols, max_sojourn, transition, emission, initial, sojourn)
        .expect("random start satisfies the model invariants")
}

/// One EM update. Returns the new model and `ln P(O)` of `model`.
pub(crate) fn hsmm_em_step(model: &HsmmModel, obs: &[usize]) -> Result<(HsmmModel, f64)> {
    let n = model.num_states();
    let m = model.num_symbols();
    let l_max = model.max_sojourn();
    let ex = expectations(model, obs)?;

    let mut transition = ex.transitions;
    if n == 1 {
        transition[0] = 1.0;
    } else {
        for (i, row) in transition.chunks_mut(n).enumerate() {
            if row.iter().sum::<f64>() <= 0.0 {
                row.copy_from_slice(model.transition_row(i));
            }
            floor_and_normalize(row, PROB_FLOOR, Some(i));
        }
    }

    let mut emission = vec![0.0; n * m];
    for (row, &o) in ex.occupancy.chunks(n).zip(obs) {
        for (j, &g) in row.iter().enumerate() {
            emission[j * m + o] += g;
        }
    }
    for row in emission.chunks_mut(m) {
        floor_and_normalize(row, PROB_FLOOR, None);
    }

    let mut initial = ex.initial;
    floor_and_normalize(&mut initial, PROB_FLOOR, None);

    let mut sojourn = ex.durations;
    for (j, row) in sojourn.chunks_mut(l_max).enumerate() {
        if normalize(row) <= 0.0 {
            row.copy_from_slice(model.sojourn(j));
        }
    }

    let next = HsmmModel::from_flat(n, m, l_max, transition, emission, initial, sojourn)?;
    Ok((next, ex.log_likelihood))
}

/// Run EM from `start` until convergence, the iteration cap or `deadline`.
pub fn fit_hsmm_from(start: HsmmModel, obs: &[usize], config: &FitConfig) -> Result<FitReport<HsmmModel>> {
    start.check_observations(obs)?;
    let deadline = config.time_budget.map(|b| Instant::now() + b);
    run(start, obs, config, deadline)
}

fn run(start: HsmmModel, obs: &[usize], config: &FitConfig, deadline: Option<Instant>) -> Result<FitReport<HsmmModel>> {
    let mut model = start;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut budget_exhausted = false;
    let mut pending_final = true;
    while iterations < config.max_iterations {
        let (next, ll) = hsmm_em_step(&model, obs)?;
        if trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() < config.tolerance)
        {
            trace.push(ll);
            converged = true;
            pending_final = false;
            break;
        }
        trace.push(ll);
        model = next;
        iterations += 1;
        if deadline.is_some_and(|d| Instant::now() >= d) {
            budget_exhausted = true;
            break;
        }
    }
    if pending_final {
        trace.push(super::hsmm_log_likelihood(&model, obs)?);
    }
    Ok(FitReport {
        fitted_model: model,
        log_likelihood_trace: trace,
        iterations,
        converged,
        restarts_used: 1,
        degenerate: false,
        short_input: obs.len() < RECOMMENDED_MIN_LENGTH,
        budget_exhausted,
    })
}

/// Fit an explicit-duration HSMM with nonparametric sojourns, best of
/// `config.restarts` random starts.
pub fn fit_hsmm(
    obs: &[usize],
    num_states: usize,
    num_symbols: usize,
    max_sojourn: usize,
    config: &FitConfig,
) -> Result<FitReport<HsmmModel>> {
    if num_states == 0 || num_symbols == 0 {
        return Err(Error::InvalidArgument(
            "num_states and num_symbols must be positive".into(),
        ));
    }
    if max_sojourn < 2 {
        return Err(Error::InvalidArgument(format!(
            "max_sojourn must be at least 2, got {max_sojourn}"
        )));
    }
    check_symbols(obs, num_symbols)?;
    let required = num_states * max_sojourn;
    if obs.len() < required {
        return Err(Error::SequenceTooShort {
            len: obs.len(),
            required,
        });
    }
    let deadline = config.time_budget.map(|b| Instant::now() + b);
    let seeds = restart_seeds(config.seed, config.restarts);
    let runs: Vec<Result<FitReport<HsmmModel>>> = seeds
        .par_iter()
        .map(|&s| {
            run(
                random_hsmm(num_states, num_symbols, max_sojourn, s),
                obs,
                config,
                deadline,
            )
        })
        .collect();

    let mut best: Option<FitReport<HsmmModel>> = None;
    let mut budget_exhausted = false;
    for r in runs {
        let r = r?;
        budget_exhausted |= r.budget_exhausted;
        let ll = r.final_log_likelihood();
        if ll.is_finite() && best.as_ref().is_none_or(|b| ll > b.final_log_likelihood()) {
            best = Some(r);
        }
    }
    let mut best = best.ok_or_else(|| Error::Numeric("no restart reached a finite likelihood".into()))?;
    best.restarts_used = seeds.len();
    best.budget_exhausted = budget_exhausted;
    best.degenerate = num_states > 1 && obs.iter().all(|&o| o == obs[0]);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsmm::simulate_hsmm;

    #[test]
    fn argument_checks() {
        let obs = vec![0usize; 100];
        let cfg = FitConfig::default();
        assert!(matches!(fit_hsmm(&obs, 2, 2, 1, &cfg), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            fit_hsmm(&obs, 2, 2, 60, &cfg),
            Err(Error::SequenceTooShort {
                len: 100,
                required: 120
            })
        ));
    }

    #[test]
    fn single_state_matches_frequency() {
        let obs: Vec<usize> = (0..400).map(|t| usize::from(t % 5 == 0)).collect();
        let cfg = FitConfig {
            restarts: 1,
            ..FitConfig::default()
        };
        let r = fit_hsmm(&obs, 1, 2, 10, &cfg).unwrap();
        assert!((r.fitted_model.emission(0, 1) - 0.2).abs() < 1e-12);
        assert!(r.short_input);
    }

    #[test]
    fn em_keeps_structure_and_climbs() {
        let gen = HsmmModel::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.9, 0.1], vec![0.15, 0.85]],
            vec![0.5, 0.5],
            vec![vec![0.0, 0.1, 0.4, 0.4, 0.1, 0.0], vec![0.2, 0.2, 0.2, 0.2, 0.1, 0.1]],
        )
        .unwrap();
        let (obs, _) = simulate_hsmm(&gen, 3000, 4).unwrap();
        let cfg = FitConfig {
            restarts: 2,
            max_iterations: 40,
            seed: 1,
            ..FitConfig::default()
        };
        let r = fit_hsmm(&obs, 2, 2, 6, &cfg).unwrap();
        assert!(r.max_decrease() <= 1e-6, "decrease {}", r.max_decrease());
        let m = &r.fitted_model;
        for j in 0..2 {
            assert_eq!(m.transition(j, j), 0.0);
            assert!((m.sojourn(j).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
