//! Scaled forward-backward recursions and the two decoders.

use serde::Serialize;

use super::model::HmmModel;
use crate::error::{Error, Result};
use crate::prob::argmax_with_tie;

/// Posterior gaps below this count as a tie when decoding.
pub const TIE_TOL: f64 = 1e-12;

/// `gamma[t][i] = P(q_t = i | O, model)`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorMatrix {
    num_states: usize,
    gamma: Vec<f64>,
}

impl PosteriorMatrix {
    pub(crate) fn new(num_states: usize, gamma: Vec<f64>) -> Self {
        debug_assert_eq!(gamma.len() % num_states, 0);
        Self { num_states, gamma }
    }

    pub fn len(&self) -> usize {
        self.gamma.len() / self.num_states
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.gamma[t * self.num_states..(t + 1) * self.num_states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.gamma.chunks(self.num_states)
    }

    /// Per-position argmax. Returns the path and the positions where the
    /// winning state was tied with another within [`TIE_TOL`].
    pub fn argmax_path(&self) -> (Vec<usize>, Vec<usize>) {
        let mut ties = Vec::new();
        let path = self
            .rows()
            .enumerate()
            .map(|(t, row)| {
                let (best, tie) = argmax_with_tie(row, TIE_TOL);
                if tie {
                    ties.push(t);
                }
                best
            })
            .collect();
        (path, ties)
    }
}

/// Output of marginal (posterior) decoding.
#[derive(Debug, Clone)]
pub struct Decoding {
    pub posterior: PosteriorMatrix,
    pub path: Vec<usize>,
    /// Positions where the argmax was resolved by the lowest-index rule.
    pub tie_positions: Vec<usize>,
}

/// Scaled forward and backward variables for one sequence.
///
/// `alpha[t]` is normalized to sum to one; `scale[t]` is the normalizer,
/// equal to `P(o_t | o_1..o_{t-1})`, so `ln P(O) = sum ln scale[t]`.
pub(crate) struct ForwardBackward {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub scale: Vec<f64>,
    pub log_likelihood: f64,
}

/// Scaled forward pass. The log-likelihood is negative infinity when the
/// sequence has probability zero; alpha is then only partially filled.
pub(crate) fn forward(model: &HmmModel, obs: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = model.num_states();
    let t_len = obs.len();
    let mut alpha = vec![0.0; t_len * n];
    let mut scale = vec![0.0; t_len];
    let mut log_lik = 0.0;

    for (i, a) in alpha[..n].iter_mut().enumerate() {
        *a = model.initial()[i] * model.emission(i, obs[0]);
    }
    for t in 0..t_len {
        if t > 0 {
            let (prev, cur) = alpha.split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..];
            for j in 0..n {
                let mut s = 0.0;
                for (i, &p) in prev.iter().enumerate() {
                    s += p * model.transition(i, j);
                }
                cur[j] = s * model.emission(j, obs[t]);
            }
        }
        let row = &mut alpha[t * n..(t + 1) * n];
        let c: f64 = row.iter().sum();
        scale[t] = c;
        if c <= 0.0 || !c.is_finite() {
            return (alpha, scale, f64::NEG_INFINITY);
        }
        row.iter_mut().for_each(|a| *a /= c);
        log_lik += c.ln();
    }
    (alpha, scale, log_lik)
}

pub(crate) fn forward_backward(model: &HmmModel, obs: &[usize]) -> Result<ForwardBackward> {
    let n = model.num_states();
    let t_len = obs.len();
    let (alpha, scale, log_likelihood) = forward(model, obs);
    if log_likelihood == f64::NEG_INFINITY {
        return Err(Error::Numeric(
            "observation sequence has zero probability under the model".into(),
        ));
    }
    let mut beta = vec![0.0; t_len * n];
    beta[(t_len - 1) * n..].iter_mut().for_each(|b| *b = 1.0);
    let mut weighted = vec![0.0; n];
    for t in (0..t_len - 1).rev() {
        let next = &beta[(t + 1) * n..(t + 2) * n];
        let c = scale[t + 1];
        for (j, w) in weighted.iter_mut().enumerate() {
            *w = model.emission(j, obs[t + 1]) * next[j] / c;
        }
        for i in 0..n {
            let row = model.transition_row(i);
            beta[t * n + i] = row.iter().zip(&weighted).map(|(a, w)| a * w).sum();
        }
    }
    Ok(ForwardBackward {
        n,
        alpha,
        beta,
        scale,
        log_likelihood,
    })
}

impl ForwardBackward {
    pub fn posterior(&self) -> PosteriorMatrix {
        let n = self.n;
        let mut gamma: Vec<f64> = self.alpha.iter().zip(&self.beta).map(|(a, b)| a * b).collect();
        for row in gamma.chunks_mut(n) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|g| *g = (*g / s).clamp(0.0, 1.0));
        }
        PosteriorMatrix::new(n, gamma)
    }
}

/// `ln P(O | model)` via the scaled forward recursion. Returns negative
/// infinity for a sequence the model cannot produce.
pub fn log_likelihood(model: &HmmModel, obs: &[usize]) -> Result<f64> {
    model.check_observations(obs)?;
    Ok(forward(model, obs).2)
}

/// Smoothed state posteriors and the per-position most probable state.
pub fn posterior_decode(model: &HmmModel, obs: &[usize]) -> Result<Decoding> {
    model.check_observations(obs)?;
    let posterior = forward_backward(model, obs)?.posterior();
    let (path, tie_positions) = posterior.argmax_path();
    Ok(Decoding {
        posterior,
        path,
        tie_positions,
    })
}

/// Single most probable joint state path (log-space dynamic programming).
/// Ties go to the lower state index.
pub fn viterbi_decode(model: &HmmModel, obs: &[usize]) -> Result<Vec<usize>> {
    model.check_observations(obs)?;
    let n = model.num_states();
    let t_len = obs.len();
    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let log_a: Vec<f64> = (0..n * n).map(|k| ln(model.transition(k / n, k % n))).collect();

    let mut delta: Vec<f64> = (0..n)
        .map(|i| ln(model.initial()[i]) + ln(model.emission(i, obs[0])))
        .collect();
    let mut back = vec![0usize; t_len * n];
    let mut next = vec![0.0; n];
    for t in 1..t_len {
        for j in 0..n {
            let mut best = 0;
            let mut best_score = delta[0] + log_a[j];
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let s = d + log_a[i * n + j];
                if s > best_score {
                    best_score = s;
                    best = i;
                }
            }
            back[t * n + j] = best;
            next[j] = best_score + ln(model.emission(j, obs[t]));
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut last = 0;
    for (i, &d) in delta.iter().enumerate().skip(1) {
        if d > delta[last] {
            last = i;
        }
    }
    if delta[last] == f64::NEG_INFINITY {
        return Err(Error::Numeric(
            "observation sequence has zero probability under the model".into(),
        ));
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * n + path[t]];
    }
    Ok(path)
}
