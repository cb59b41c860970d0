use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{check_rows, check_symbols, flatten_rows, geometric_pmf, HmmModel, STOCHASTIC_TOL};
use crate::prob::{is_stochastic, normalize};

/// Tolerance on the normalization of each sojourn distribution.
pub const SOJOURN_TOL: f64 = 1e-10;

/// Explicit-duration hidden semi-Markov model.
///
/// The transition matrix has a zero diagonal: leaving a state is governed by
/// its sojourn law `d_j(l)`, `l = 1..=max_sojourn`, and the transition row
/// only says where to go next. A single-state model is the exception; its
/// lone state renews itself, so its transition matrix is `[[1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HsmmModelJson", into = "HsmmModelJson")]
pub struct HsmmModel {
    num_states: usize,
    num_symbols: usize,
    max_sojourn: usize,
    transition: Vec<f64>,
    emission: Vec<f64>,
    initial: Vec<f64>,
    sojourn: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HsmmModelJson {
    num_states: usize,
    num_symbols: usize,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
    initial: Vec<f64>,
    sojourn: Vec<Vec<f64>>,
    max_sojourn: usize,
}

impl TryFrom<HsmmModelJson> for HsmmModel {
    type Error = Error;

    fn try_from(j: HsmmModelJson) -> Result<Self> {
        if j.initial.len() != j.num_states || j.emission.first().map_or(0, Vec::len) != j.num_symbols {
            return Err(Error::InvalidModel("declared sizes disagree with the arrays".into()));
        }
        let model = HsmmModel::new(j.transition, j.emission, j.initial, j.sojourn)?;
        if model.max_sojourn != j.max_sojourn {
            return Err(Error::InvalidModel(format!(
                "max_sojourn {} but sojourn rows have length {}",
                j.max_sojourn, model.max_sojourn
            )));
        }
        Ok(model)
    }
}

impl From<HsmmModel> for HsmmModelJson {
    fn from(m: HsmmModel) -> Self {
        HsmmModelJson {
            num_states: m.num_states,
            num_symbols: m.num_symbols,
            transition: m.transition.chunks(m.num_states).map(<[f64]>::to_vec).collect(),
            emission: m.emission.chunks(m.num_symbols).map(<[f64]>::to_vec).collect(),
            sojourn: m.sojourn.chunks(m.max_sojourn).map(<[f64]>::to_vec).collect(),
            initial: m.initial,
            max_sojourn: m.max_sojourn,
        }
    }
}

impl HsmmModel {
    pub fn new(
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        initial: Vec<f64>,
        sojourn: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        let m = emission.first().map_or(0, Vec::len);
        let l = sojourn.first().map_or(0, Vec::len);
        if m == 0 || l == 0 {
            return Err(Error::InvalidModel("empty emission or sojourn rows".into()));
        }
        if transition.len() != n || emission.len() != n || sojourn.len() != n {
            return Err(Error::InvalidModel(format!("expected {n} rows in every matrix")));
        }
        let transition = flatten_rows(&transition, n, "transition")?;
        let emission = flatten_rows(&emission, m, "emission")?;
        let sojourn = flatten_rows(&sojourn, l, "sojourn")?;
        Self::from_flat(n, m, l, transition, emission, initial, sojourn)
    }

    pub(crate) fn from_flat(
        num_states: usize,
        num_symbols: usize,
        max_sojourn: usize,
        transition: Vec<f64>,
        emission: Vec<f64>,
        initial: Vec<f64>,
        sojourn: Vec<f64>,
    ) -> Result<Self> {
        let n = num_states;
        if n == 1 {
            if transition != [1.0] {
                return Err(Error::InvalidModel(
                    "a single-state model must have transition [[1]]".into(),
                ));
            }
        } else {
            if let Some(i) = (0..n).find(|&i| transition[i * n + i] != 0.0) {
                return Err(Error::InvalidModel(format!(
                    "transition diagonal entry {i} is not zero"
                )));
            }
            check_rows(&transition, n, STOCHASTIC_TOL, "transition")?;
        }
        check_rows(&emission, num_symbols, STOCHASTIC_TOL, "emission")?;
        check_rows(&sojourn, max_sojourn, SOJOURN_TOL, "sojourn")?;
        if !is_stochastic(&initial, STOCHASTIC_TOL) {
            return Err(Error::InvalidModel(format!(
                "initial distribution invalid: {initial:?}"
            )));
        }
        Ok(Self {
            num_states,
            num_symbols,
            max_sojourn,
            transition,
            emission,
            initial,
            sojourn,
        })
    }

    /// The semi-Markov model equivalent to `hmm` up to truncation: jumps are
    /// the renormalized off-diagonal rows, sojourns the geometric laws
    /// `a_ii^(l-1)(1-a_ii)` cut at `max_sojourn` and renormalized.
    pub fn from_hmm(hmm: &HmmModel, max_sojourn: usize) -> Result<Self> {
        if max_sojourn == 0 {
            return Err(Error::InvalidArgument("max_sojourn must be positive".into()));
        }
        let n = hmm.num_states();
        let mut transition = vec![0.0; n * n];
        let mut sojourn = Vec::with_capacity(n * max_sojourn);
        for i in 0..n {
            let row = &mut transition[i * n..(i + 1) * n];
            if n == 1 {
                row[0] = 1.0;
            } else {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = if i == j { 0.0 } else { hmm.transition(i, j) };
                }
                if normalize(row) <= 0.0 {
                    row.iter_mut()
                        .enumerate()
                        .for_each(|(j, x)| *x = if i == j { 0.0 } else { 1.0 / (n - 1) as f64 });
                }
            }
            let mut d = geometric_pmf(hmm.transition(i, i), max_sojourn).pmf;
            if normalize(&mut d) <= 0.0 {
                d[max_sojourn - 1] = 1.0;
            }
            sojourn.extend(d);
        }
        Self::from_flat(
            n,
            hmm.num_symbols(),
            max_sojourn,
            transition,
            hmm.emission_rows().concat(),
            hmm.initial().to_vec(),
            sojourn,
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn max_sojourn(&self) -> usize {
        self.max_sojourn
    }

    #[inline]
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.num_states + j]
    }

    #[inline]
    pub fn emission(&self, j: usize, k: usize) -> f64 {
        self.emission[j * self.num_symbols + k]
    }

    pub fn emission_row(&self, j: usize) -> &[f64] {
        &self.emission[j * self.num_symbols..(j + 1) * self.num_symbols]
    }

    pub fn transition_row(&self, i: usize) -> &[f64] {
        &self.transition[i * self.num_states..(i + 1) * self.num_states]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `d_j(l)` for `l = 1..=max_sojourn`, indexed from zero.
    pub fn sojourn(&self, j: usize) -> &[f64] {
        &self.sojourn[j * self.max_sojourn..(j + 1) * self.max_sojourn]
    }

    /// `D_j(l) = sum_{l' >= l} d_j(l')`, indexed from zero.
    pub fn survivor(&self, j: usize) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .sojourn(j)
            .iter()
            .rev()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        s.reverse();
        s
    }

    /// Equivalent plain-HMM view for labeling: emissions and initial law
    /// with transitions that keep the jump structure and use each state's
    /// mean sojourn for the self-transition.
    pub fn to_hmm_view(&self) -> Result<HmmModel> {
        let n = self.num_states;
        let rows = (0..n)
            .map(|i| {
                if n == 1 {
                    return vec![1.0];
                }
                let mean: f64 = self
                    .sojourn(i)
                    .iter()
                    .enumerate()
                    .map(|(l, p)| (l + 1) as f64 * p)
                    .sum();
                let stay = 1.0 - 1.0 / mean.max(1.0);
                (0..n)
                    .map(|j| {
                        if i == j {
                            stay
                        } else {
                            (1.0 - stay) * self.transition(i, j)
                        }
                    })
                    .collect()
            })
            .collect();
        HmmModel::new(
            rows,
            self.emission.chunks(self.num_symbols).map(<[f64]>::to_vec).collect(),
            self.initial.clone(),
        )
    }

    pub fn check_observations(&self, obs: &[usize]) -> Result<()> {
        check_symbols(obs, self.num_symbols)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
