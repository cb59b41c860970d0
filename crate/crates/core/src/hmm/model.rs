use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::is_stochastic;

/// Row-sum tolerance for stochastic matrices and vectors.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A discrete-emission hidden Markov model `(A, B, pi)`.
///
/// Matrices are stored row-major. Construction validates every row, so a
/// value of this type always satisfies the stochastic invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmModelJson", into = "HmmModelJson")]
pub struct HmmModel {
    num_states: usize,
    num_symbols: usize,
    transition: Vec<f64>,
    emission: Vec<f64>,
    initial: Vec<f64>,
}

/// On-disk layout: rows as nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct HmmModelJson {
    pub num_states: usize,
    pub num_symbols: usize,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl TryFrom<HmmModelJson> for HmmModel {
    type Error = Error;

    fn try_from(j: HmmModelJson) -> Result<Self> {
        if j.transition.len() != j.num_states || j.emission.len() != j.num_states {
            return Err(Error::InvalidModel(format!(
                "expected {} transition and emission rows",
                j.num_states
            )));
        }
        HmmModel::new(j.transition, j.emission, j.initial)
    }
}

impl From<HmmModel> for HmmModelJson {
    fn from(m: HmmModel) -> Self {
        HmmModelJson {
            num_states: m.num_states,
            num_symbols: m.num_symbols,
            transition: m.transition_rows(),
            emission: m.emission_rows(),
            initial: m.initial,
        }
    }
}

pub(crate) fn flatten_rows(rows: &[Vec<f64>], width: usize, what: &str) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::InvalidModel(format!(
                "{what} row {i} has {} entries, expected {width}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

pub(crate) fn check_rows(flat: &[f64], width: usize, tol: f64, what: &str) -> Result<()> {
    for (i, row) in flat.chunks(width).enumerate() {
        if !is_stochastic(row, tol) {
            return Err(Error::InvalidModel(format!(
                "{what} row {i} is not a probability vector: {row:?}"
            )));
        }
    }
    Ok(())
}

impl HmmModel {
    /// Build a model from transition rows, emission rows and the initial
    /// distribution.
    pub fn new(transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        let m = emission.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::InvalidModel("model needs at least one symbol".into()));
        }
        if transition.len() != n || emission.len() != n {
            return Err(Error::InvalidModel(format!(
                "initial has {n} states but transition has {} rows and emission {}",
                transition.len(),
                emission.len()
            )));
        }
        let transition = flatten_rows(&transition, n, "transition")?;
        let emission = flatten_rows(&emission, m, "emission")?;
        Self::from_flat(n, m, transition, emission, initial)
    }

    pub(crate) fn from_flat(
        num_states: usize,
        num_symbols: usize,
        transition: Vec<f64>,
        emission: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        check_rows(&transition, num_states, STOCHASTIC_TOL, "transition")?;
        check_rows(&emission, num_symbols, STOCHASTIC_TOL, "emission")?;
        if !is_stochastic(&initial, STOCHASTIC_TOL) {
            return Err(Error::InvalidModel(format!(
                "initial distribution is not a probability vector: {initial:?}"
            )));
        }
        Ok(Self {
            num_states,
            num_symbols,
            transition,
            emission,
            initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// `a_ij`, the probability of moving from state `i` to state `j`.
    #[inline]
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.num_states + j]
    }

    /// `b_j(k)`, the probability of emitting symbol `k` from state `j`.
    #[inline]
    pub fn emission(&self, j: usize, k: usize) -> f64 {
        self.emission[j * self.num_symbols + k]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, i: usize) -> &[f64] {
        &self.transition[i * self.num_states..(i + 1) * self.num_states]
    }

    pub fn emission_row(&self, j: usize) -> &[f64] {
        &self.emission[j * self.num_symbols..(j + 1) * self.num_symbols]
    }

    pub fn transition_rows(&self) -> Vec<Vec<f64>> {
        self.transition.chunks(self.num_states).map(<[f64]>::to_vec).collect()
    }

    pub fn emission_rows(&self) -> Vec<Vec<f64>> {
        self.emission.chunks(self.num_symbols).map(<[f64]>::to_vec).collect()
    }

    /// Return the same model with states reordered so that new state `k` is
    /// old state `order[k]`.
    pub fn permute_states(&self, order: &[usize]) -> Result<Self> {
        let n = self.num_states;
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&s| s >= n || std::mem::replace(&mut seen[s], true)) {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of 0..{n}"
            )));
        }
        let transition = order
            .iter()
            .map(|&i| order.iter().map(|&j| self.transition(i, j)).collect())
            .collect();
        let emission = order.iter().map(|&i| self.emission_row(i).to_vec()).collect();
        let initial = order.iter().map(|&i| self.initial[i]).collect();
        Self::new(transition, emission, initial)
    }

    /// Validate that every symbol of `obs` is within this model's alphabet.
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

pub(crate) fn check_symbols(obs: &[usize], num_symbols: usize) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some((position, &symbol)) = obs.iter().enumerate().find(|(_, &s)| s >= num_symbols) {
        return Err(Error::InvalidSymbol {
            position,
            symbol,
            num_symbols,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> HmmModel {
        HmmModel::new(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            vec![0.6, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = HmmModel::new(
            vec![vec![0.9, 0.2], vec![0.5, 0.5]],
            vec![vec![1.0], vec![1.0]],
            vec![1.0, 0.0],
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let err = HmmModel::new(vec![vec![1.0]], vec![vec![0.5, 0.5]], vec![0.9]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = HmmModel::new(
            vec![
                vec![1.0 / 3.0, 2.0 / 3.0],
                vec![0.123456789012345678, 1.0 - 0.123456789012345678],
            ],
            vec![
                vec![0.1, 0.9],
                vec![std::f64::consts::FRAC_1_PI, 1.0 - std::f64::consts::FRAC_1_PI],
            ],
            vec![0.7, 0.30000000000000004],
        )
        .unwrap();
        let back = HmmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["num_states"], 2);
        assert_eq!(v["transition"][1].as_array().unwrap().len(), 2);
    }

    #[test]
    fn permutation_moves_rows_and_columns() {
        let m = coin();
        let p = m.permute_states(&[1, 0]).unwrap();
        assert_eq!(p.transition(0, 0), 0.8);
        assert_eq!(p.transition(0, 1), 0.2);
        assert_eq!(p.emission(0, 1), 0.9);
        assert_eq!(p.initial(), &[0.4, 0.6]);
        assert!(m.permute_states(&[0, 0]).is_err());
    }

    #[test]
    fn symbol_checks() {
        let m = coin();
        assert!(matches!(m.check_observations(&[]), Err(Error::EmptySequence)));
        assert!(matches!(
            m.check_observations(&[0, 1, 2]),
            Err(Error::InvalidSymbol {
                position: 2,
                symbol: 2,
                ..
            })
        ));
    }
}
