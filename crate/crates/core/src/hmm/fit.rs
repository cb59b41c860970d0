//! Baum-Welch maximum-likelihood fitting with random restarts.

use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{forward, forward_backward};
use super::model::HmmModel;
use crate::error::{Error, Result};
use crate::prob::{dirichlet_uniform, floor_and_normalize, seeded_rng, PROB_FLOOR};

/// Settings shared by the HMM and HSMM EM fitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// EM stops once `|delta ln P|` drops below this.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Wall-clock limit for a whole fit; when hit, the best model so far is
    /// returned with `budget_exhausted` set.
    #[serde(with = "opt_secs")]
    pub time_budget: Option<Duration>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-6,
            restarts: 10,
            seed: 0,
            time_budget: None,
        }
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

/// Outcome of an EM fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport<M> {
    pub fitted_model: M,
    /// `ln P(O)` of the model entering each iteration, ending with the
    /// returned model.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    /// The input could not identify the requested number of states (for
    /// instance a constant symbol sequence with more than one state).
    pub degenerate: bool,
    /// Set when the input was shorter than recommended for this model.
    pub short_input: bool,
    pub budget_exhausted: bool,
}

impl<M> FitReport<M> {
    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Largest single-step decrease in the trace (zero if monotone).
    pub fn max_decrease(&self) -> f64 {
        self.log_likelihood_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Draw one independent seed per restart from the master seed.
pub(crate) fn restart_seeds(seed: u64, restarts: usize) -> Vec<u64> {
    let mut rng = seeded_rng(seed);
    (0..restarts.max(1)).map(|_| rng.random()).collect()
}

/// Random starting point: Dirichlet(1) rows everywhere.
pub fn random_model(num_states: usize, num_symbols: usize, seed: u64) -> HmmModel {
    let mut rng = seeded_rng(seed);
    let transition = (0..num_states)
        .map(|_| dirichlet_uniform(&mut rng, num_states))
        .collect();
    let emission = (0..num_states)
        .map(|_| dirichlet_uniform(&mut rng, num_symbols))
        .collect();
    let initial = dirichlet_uniform(&mut rng, num_states);
    HmmModel::new(transition, emission, initial).expect("Dirichlet draws are stochastic")
}

/// One M-step from the sufficient statistics of `model` on `obs`.
/// Returns the re-estimated model and `ln P(O | model)`.
pub(crate) fn baum_welch_step(model: &HmmModel, obs: &[usize]) -> Result<(HmmModel, f64)> {
    let n = model.num_states();
    let m = model.num_symbols();
    let fb = forward_backward(model, obs)?;
    let gamma = fb.posterior();

    let mut trans = vec![0.0; n * n];
    let mut weighted = vec![0.0; n];
    for t in 0..obs.len() - 1 {
        let alpha = &fb.alpha[t * n..(t + 1) * n];
        let beta = &fb.beta[(t + 1) * n..(t + 2) * n];
        let c = fb.scale[t + 1];
        for (j, w) in weighted.iter_mut().enumerate() {
            *w = model.emission(j, obs[t + 1]) * beta[j] / c;
        }
        for (i, &a) in alpha.iter().enumerate() {
            for j in 0..n {
                trans[i * n + j] += a * model.transition(i, j) * weighted[j];
            }
        }
    }
    let mut emit = vec![0.0; n * m];
    for (row, &o) in gamma.rows().zip(obs) {
        for (j, &g) in row.iter().enumerate() {
            emit[j * m + o] += g;
        }
    }
    for row in trans.chunks_mut(n) {
        floor_and_normalize(row, PROB_FLOOR, None);
    }
    for row in emit.chunks_mut(m) {
        floor_and_normalize(row, PROB_FLOOR, None);
    }
    let mut initial = gamma.row(0).to_vec();
    floor_and_normalize(&mut initial, PROB_FLOOR, None);
    let next = HmmModel::from_flat(n, m, trans, emit, initial)?;
    Ok((next, fb.log_likelihood))
}

struct SingleRun {
    model: HmmModel,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_em(
    start: HmmModel,
    obs: &[usize],
    config: &FitConfig,
    deadline: Option<std::time::Instant>,
) -> Result<(SingleRun, bool)> {
    let mut model = start;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut out_of_time = false;
    while iterations < config.max_iterations {
        let (next, ll) = baum_welch_step(&model, obs)?;
        if let Some(&prev) = trace.last() {
            if (ll - prev).abs() < config.tolerance {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        model = next;
        iterations += 1;
        if deadline.is_some_and(|d| std::time::Instant::now() >= d) {
            out_of_time = true;
            break;
        }
    }
    if !converged {
        trace.push(forward(&model, obs).2);
    }
    Ok((
        SingleRun {
            model,
            trace,
            iterations,
            converged,
        },
        out_of_time,
    ))
}

/// Fit an `num_states`-state HMM to `obs` by Baum-Welch, keeping the best of
/// `config.restarts` random starts.
pub fn fit_baum_welch(
    obs: &[usize],
    num_states: usize,
    num_symbols: usize,
    config: &FitConfig,
) -> Result<FitReport<HmmModel>> {
    if num_states == 0 || num_symbols == 0 {
        return Err(Error::InvalidArgument(
            "num_states and num_symbols must be positive".into(),
        ));
    }
    super::model::check_symbols(obs, num_symbols)?;
    let required = 10 * num_states * num_symbols;
    if obs.len() < required {
        return Err(Error::SequenceTooShort {
            len: obs.len(),
            required,
        });
    }
    let deadline = config.time_budget.map(|b| std::time::Instant::now() + b);
    let seeds = restart_seeds(config.seed, config.restarts);
    let runs: Vec<Result<(SingleRun, bool)>> = seeds
        .par_iter()
        .map(|&s| run_em(random_model(num_states, num_symbols, s), obs, config, deadline))
        .collect();

    let mut best: Option<SingleRun> = None;
    let mut budget_exhausted = false;
    for run in runs {
        let (run, out_of_time) = run?;
        budget_exhausted |= out_of_time;
        let ll = *run.trace.last().unwrap();
        if ll.is_finite() && best.as_ref().is_none_or(|b| ll > *b.trace.last().unwrap()) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::Numeric("no restart reached a finite likelihood".into()))?;
    let distinct = {
        let first = obs[0];
        obs.iter().any(|&o| o != first)
    };
    Ok(FitReport {
        fitted_model: best.model,
        log_likelihood_trace: best.trace,
        iterations: best.iterations,
        converged: best.converged,
        restarts_used: seeds.len(),
        degenerate: num_states > 1 && !distinct,
        short_input: false,
        budget_exhausted,
    })
}

/// The state permutation of `model` whose emission rows best match
/// `reference` in L1 distance. Entry `k` is the `model` state aligned with
/// reference state `k`. Exhaustive over permutations, so intended for the
/// small state counts used here.
pub fn align_states(model: &HmmModel, reference: &HmmModel) -> Vec<usize> {
    let n = model.num_states();
    let cost = |k: usize, s: usize| -> f64 {
        model
            .emission_row(s)
            .iter()
            .zip(reference.emission_row(k))
            .map(|(a, b)| (a - b).abs())
            .sum()
    };
    let mut best = ((0..n).collect::<Vec<_>>(), f64::INFINITY);
    let mut perm: Vec<usize> = (0..n).collect();
    permutations(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(k, &s)| cost(k, s)).sum();
        if c < best.1 {
            best = (p.to_vec(), c);
        }
    });
    best.0
}

fn permutations(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, visit);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::simulate;

    #[test]
    fn single_state_fit_is_empirical_frequency() {
        let obs: Vec<usize> = (0..500).map(|t| usize::from(t % 7 < 3)).collect();
        let ones = obs.iter().filter(|&&o| o == 1).count() as f64;
        let report = fit_baum_welch(&obs, 1, 2, &FitConfig::default()).unwrap();
        let b = report.fitted_model.emission(0, 1);
        assert!((b - ones / 500.0).abs() < 1e-15, "{b}");
        assert!(report.converged);
    }

    #[test]
    fn rejects_short_sequences() {
        let err = fit_baum_welch(&[0, 1, 0], 3, 2, &FitConfig::default());
        assert!(matches!(err, Err(Error::SequenceTooShort { len: 3, required: 60 })));
    }

    #[test]
    fn constant_input_is_flagged_degenerate() {
        let obs = vec![1; 200];
        let cfg = FitConfig {
            restarts: 2,
            ..FitConfig::default()
        };
        let report = fit_baum_welch(&obs, 3, 2, &cfg).unwrap();
        assert!(report.degenerate);
        assert!(report.final_log_likelihood() > -1e-6);
    }

    #[test]
    fn same_seed_same_fit() {
        let gen = HmmModel::new(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let (obs, _) = simulate(&gen, 2000, 11).unwrap();
        let cfg = FitConfig {
            restarts: 3,
            seed: 5,
            ..FitConfig::default()
        };
        let a = fit_baum_welch(&obs, 2, 2, &cfg).unwrap();
        let b = fit_baum_welch(&obs, 2, 2, &cfg).unwrap();
        assert_eq!(a.fitted_model, b.fitted_model);
        assert_eq!(a.log_likelihood_trace, b.log_likelihood_trace);
        assert!(a.max_decrease() <= 1e-9);
    }

    #[test]
    fn alignment_recovers_permutation() {
        let m = random_model(3, 2, 3);
        let p = m.permute_states(&[2, 0, 1]).unwrap();
        let order = align_states(&p, &m);
        assert_eq!(p.permute_states(&order).unwrap(), m);
    }
}
