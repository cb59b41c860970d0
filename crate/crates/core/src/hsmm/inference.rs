//! Explicit-duration forward-backward with per-step scaling.
//!
//! Notation: a *segment* is a maximal stay in one state. `start[t][j]` is the
//! probability that a segment of `j` begins at `t` together with the
//! observations before `t`; `end[t][j]` that a segment of `j` ends at `t`
//! (and the next begins at `t + 1`) together with the observations up to
//! `t`. The last segment is right-censored by the end of the sequence and
//! weighted by the survivor `D_j(l)` rather than `d_j(l)`.
//!
//! Scaling: `scale[t] = P(o_t | o_0..o_{t-1})`, obtained from the state
//! occupancy at `t`. Every forward quantity at `t` is divided by the
//! product of the scales up to `t`, every backward quantity by the product
//! from `t` on, so the scaled values stay of order one and
//! `ln P(O) = sum ln scale[t]`.

use super::model::HsmmModel;
use crate::error::{Error, Result};
use crate::hmm::PosteriorMatrix;

pub(crate) struct Forward {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub scale: Vec<f64>,
    pub log_likelihood: f64,
}

/// Emission probabilities laid out `[t * n + j]`.
pub(crate) fn emission_table(model: &HsmmModel, obs: &[usize]) -> Vec<f64> {
    let n = model.num_states();
    let mut b = Vec::with_capacity(obs.len() * n);
    for &o in obs {
        b.extend((0..n).map(|j| model.emission(j, o)));
    }
    b
}

pub(crate) fn forward(model: &HsmmModel, b: &[f64], t_len: usize) -> Result<Forward> {
    let n = model.num_states();
    let l_max = model.max_sojourn();
    let survivors: Vec<Vec<f64>> = (0..n).map(|j| model.survivor(j)).collect();
    let mut start = vec![0.0; t_len * n];
    let mut end = vec![0.0; t_len * n];
    let mut scale = vec![0.0; t_len];
    start[..n].copy_from_slice(model.initial());

    let mut occ = vec![0.0; n];
    let mut fin = vec![0.0; n];
    let mut log_likelihood = 0.0;
    for t in 0..t_len {
        for j in 0..n {
            let d = model.sojourn(j);
            let surv = &survivors[j];
            let (mut o_acc, mut e_acc, mut prod) = (0.0, 0.0, 1.0);
            for len in 1..=l_max.min(t + 1) {
                let u = t + 1 - len;
                if len > 1 {
                    prod *= b[u * n + j] / scale[u];
                }
                let s = start[u * n + j];
                if s == 0.0 {
                    continue;
                }
                o_acc += s * surv[len - 1] * prod;
                e_acc += s * d[len - 1] * prod;
            }
            occ[j] = o_acc * b[t * n + j];
            fin[j] = e_acc * b[t * n + j];
        }
        let c: f64 = occ.iter().sum();
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::Numeric(format!(
                "observation sequence has zero probability under the model (position {t})"
            )));
        }
        scale[t] = c;
        log_likelihood += c.ln();
        for j in 0..n {
            end[t * n + j] = fin[j] / c;
        }
        if t + 1 < t_len {
            for k in 0..n {
                start[(t + 1) * n + k] = (0..n).map(|j| end[t * n + j] * model.transition(j, k)).sum();
            }
        }
    }
    Ok(Forward {
        start,
        end,
        scale,
        log_likelihood,
    })
}

/// Backward pass. Returns `(begin, leave)` where `begin[t][j]` is the scaled
/// probability of `o_t..` given a segment of `j` starts at `t`, and
/// `leave[t][j] = sum_k a_jk begin[t][k]`, the continuation after a segment
/// of `j` that ended at `t - 1`.
pub(crate) fn backward(model: &HsmmModel, b: &[f64], scale: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = model.num_states();
    let l_max = model.max_sojourn();
    let t_len = scale.len();
    let survivors: Vec<Vec<f64>> = (0..n).map(|j| model.survivor(j)).collect();
    let mut begin = vec![0.0; t_len * n];
    let mut leave = vec![0.0; (t_len + 1) * n];
    for t in (0..t_len).rev() {
        for j in 0..n {
            let d = model.sojourn(j);
            let mut acc = 0.0;
            let mut prod = 1.0;
            for len in 1..=l_max.min(t_len - t) {
                let s = t + len - 1;
                prod *= b[s * n + j] / scale[s];
                acc += if t + len == t_len {
                    prod * survivors[j][len - 1]
                } else {
                    prod * d[len - 1] * leave[(t + len) * n + j]
                };
            }
            begin[t * n + j] = acc;
        }
        for j in 0..n {
            leave[t * n + j] = (0..n).map(|k| model.transition(j, k) * begin[t * n + k]).sum();
        }
    }
    (begin, leave)
}

/// Expected sufficient statistics from one forward-backward sweep.
pub(crate) struct Expectations {
    pub log_likelihood: f64,
    pub occupancy: Vec<f64>,
    pub transitions: Vec<f64>,
    pub initial: Vec<f64>,
    pub durations: Vec<f64>,
}

pub(crate) fn expectations(model: &HsmmModel, obs: &[usize]) -> Result<Expectations> {
    let n = model.num_states();
    let l_max = model.max_sojourn();
    let t_len = obs.len();
    let b = emission_table(model, obs);
    let fwd = forward(model, &b, t_len)?;
    let (begin, leave) = backward(model, &b, &fwd.scale);

    let mut diff = vec![0.0; (t_len + 1) * n];
    let mut durations = vec![0.0; n * l_max];
    let mut censored = vec![0.0; n * l_max];
    for j in 0..n {
        let d = model.sojourn(j);
        let surv = model.survivor(j);
        for u in 0..t_len {
            let s = fwd.start[u * n + j];
            if s == 0.0 {
                continue;
            }
            let mut prod = 1.0;
            for len in 1..=l_max.min(t_len - u) {
                let last = u + len - 1;
                prod *= b[last * n + j] / fwd.scale[last];
                let w = if u + len == t_len {
                    let w = s * prod * surv[len - 1];
                    censored[j * l_max + len - 1] += w;
                    w
                } else {
                    let w = s * prod * d[len - 1] * leave[(u + len) * n + j];
                    durations[j * l_max + len - 1] += w;
                    w
                };
                diff[u * n + j] += w;
                diff[(u + len) * n + j] -= w;
            }
        }
        // A censored stay of length l lasted l' >= l with odds d(l') / D(l).
        let mut carry = 0.0;
        for len in 0..l_max {
            if surv[len] > 0.0 {
                carry += censored[j * l_max + len] / surv[len];
            }
            durations[j * l_max + len] += carry * d[len];
        }
    }

    let mut occupancy = vec![0.0; t_len * n];
    let mut running = vec![0.0; n];
    for t in 0..t_len {
        let row = &mut occupancy[t * n..(t + 1) * n];
        for j in 0..n {
            running[j] += diff[t * n + j];
            row[j] = running[j].max(0.0);
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|g| *g = (*g / total).min(1.0));
        }
    }

    let mut transitions = vec![0.0; n * n];
    for t in 0..t_len.saturating_sub(1) {
        for j in 0..n {
            let e = fwd.end[t * n + j];
            if e == 0.0 {
                continue;
            }
            for k in 0..n {
                transitions[j * n + k] += e * model.transition(j, k) * begin[(t + 1) * n + k];
            }
        }
    }
    let initial = (0..n).map(|j| model.initial()[j] * begin[j]).collect();

    Ok(Expectations {
        log_likelihood: fwd.log_likelihood,
        occupancy,
        transitions,
        initial,
        durations,
    })
}

/// `ln P(O | model)` including the survivor term for the final stay.
pub fn hsmm_log_likelihood(model: &HsmmModel, obs: &[usize]) -> Result<f64> {
    model.check_observations(obs)?;
    let b = emission_table(model, obs);
    match forward(model, &b, obs.len()) {
        Ok(f) => Ok(f.log_likelihood),
        Err(Error::Numeric(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Result of semi-Markov marginal decoding.
#[derive(Debug, Clone)]
pub struct HsmmDecoding {
    pub posterior: PosteriorMatrix,
    pub path: Vec<usize>,
    pub tie_positions: Vec<usize>,
    /// Number of decoded runs longer than `max_sojourn`. Posterior argmax can
    /// join adjacent stays of one state, so this need not be zero.
    pub runs_exceeding_max_sojourn: usize,
}

/// Per-position most probable state under the explicit-duration smoothed
/// posterior.
pub fn decode_hsmm(model: &HsmmModel, obs: &[usize]) -> Result<HsmmDecoding> {
    model.check_observations(obs)?;
    let ex = expectations(model, obs)?;
    let posterior = PosteriorMatrix::new(model.num_states(), ex.occupancy);
    let (path, tie_positions) = posterior.argmax_path();
    let mut runs_exceeding_max_sojourn = 0;
    let mut run = 0;
    for t in 0..path.len() {
        run += 1;
        if t + 1 == path.len() || path[t + 1] != path[t] {
            if run > model.max_sojourn() {
                runs_exceeding_max_sojourn += 1;
            }
            run = 0;
        }
    }
    Ok(HsmmDecoding {
        posterior,
        path,
        tie_positions,
        runs_exceeding_max_sojourn,
    })
}
