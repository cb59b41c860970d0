//! Enumeration over every semi-Markov segmentation of a short sequence.

use super::model::HsmmModel;
use crate::error::{Error, Result};

/// Guard on the number of segmentations visited.
pub const MAX_SEGMENTATIONS: usize = 5_000_000;

struct Walker<'a> {
    model: &'a HsmmModel,
    obs: &'a [usize],
    survivors: Vec<Vec<f64>>,
    occupancy: Vec<Vec<f64>>,
    total: f64,
    visited: usize,
    segments: Vec<(usize, usize, usize)>,
}

impl Walker<'_> {
    fn walk(&mut self, t: usize, prev: Option<usize>, weight: f64) -> Result<()> {
        let t_len = self.obs.len();
        if t == t_len {
            self.visited += 1;
            if self.visited > MAX_SEGMENTATIONS {
                return Err(Error::EnumerationTooLarge {
                    states: self.model.num_states(),
                    len: t_len,
                });
            }
            self.total += weight;
            for &(state, from, to) in &self.segments {
                for row in &mut self.occupancy[from..to] {
                    row[state] += weight;
                }
            }
            return Ok(());
        }
        let n = self.model.num_states();
        for j in 0..n {
            let enter = match prev {
                None => self.model.initial()[j],
                Some(i) => self.model.transition(i, j),
            };
            if enter == 0.0 {
                continue;
            }
            let mut emit = 1.0;
            for len in 1..=self.model.max_sojourn().min(t_len - t) {
                emit *= self.model.emission(j, self.obs[t + len - 1]);
                let stay = if t + len == t_len {
                    self.survivors[j][len - 1]
                } else {
                    self.model.sojourn(j)[len - 1]
                };
                let w = weight * enter * emit * stay;
                if w == 0.0 {
                    continue;
                }
                self.segments.push((j, t, t + len));
                self.walk(t + len, Some(j), w)?;
                self.segments.pop();
            }
        }
        Ok(())
    }
}

/// `P(O)` and `P(q_t = j | O)` by summing over all segmentations, with the
/// final stay weighted by its survivor probability.
pub fn brute_force_hsmm(model: &HsmmModel, obs: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    model.check_observations(obs)?;
    let mut w = Walker {
        model,
        obs,
        survivors: (0..model.num_states()).map(|j| model.survivor(j)).collect(),
        occupancy: vec![vec![0.0; model.num_states()]; obs.len()],
        total: 0.0,
        visited: 0,
        segments: Vec::new(),
    };
    w.walk(0, None, 1.0)?;
    if w.total > 0.0 {
        let total = w.total;
        w.occupancy.iter_mut().flatten().for_each(|g| *g /= total);
    }
    Ok((w.total, w.occupancy))
}
