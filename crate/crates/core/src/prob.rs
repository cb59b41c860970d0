//! Small helpers for probability vectors and seeded sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Smallest value any re-estimated emission or transition entry may take.
pub const PROB_FLOOR: f64 = 1e-12;

/// Deterministic generator used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw from a symmetric Dirichlet(1) distribution of dimension `n`.
pub fn dirichlet_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e.max(f64::MIN_POSITIVE)
        })
        .collect();
    normalize(&mut v);
    v
}

/// Scale `v` in place so it sums to one. Returns the original sum.
pub fn normalize(v: &mut [f64]) -> f64 {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    s
}

/// Raise entries below `floor` to `floor`, then renormalize. Entries listed in
/// `skip` are held at exactly zero (used for structural zeros).
pub fn floor_and_normalize(v: &mut [f64], floor: f64, skip: Option<usize>) {
    for (i, x) in v.iter_mut().enumerate() {
        if Some(i) == skip {
            *x = 0.0;
        } else if *x < floor || !x.is_finite() {
            *x = floor;
        }
    }
    normalize(v);
}

/// Check that `v` is a probability vector within `tol`.
pub fn is_stochastic(v: &[f64], tol: f64) -> bool {
    !v.is_empty()
        && v.iter().all(|&x| x.is_finite() && (0.0..=1.0).contains(&x))
        && (v.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Inverse-CDF draw from a discrete distribution. Falls back to the last
/// index with positive mass if rounding leaves `u` above the total.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Index of the maximum, ties resolved toward the lowest index. The second
/// value reports whether another entry came within `tie_tol` of the maximum.
pub fn argmax_with_tie(v: &[f64], tie_tol: f64) -> (usize, bool) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    let tie = v
        .iter()
        .enumerate()
        .any(|(i, &x)| i != best && (v[best] - x).abs() <= tie_tol);
    (best, tie)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_rows_are_stochastic() {
        let mut rng = seeded_rng(7);
        for n in 1..6 {
            let v = dirichlet_uniform(&mut rng, n);
            assert!(is_stochastic(&v, 1e-12));
        }
    }

    #[test]
    fn floor_keeps_structural_zero() {
        let mut v = vec![0.0, 0.0, 1.0];
        floor_and_normalize(&mut v, 1e-12, Some(0));
        assert_eq!(v[0], 0.0);
        assert!(v[1] > 0.0);
        assert!(is_stochastic(&v, 1e-15));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_with_tie(&[0.4, 0.4, 0.2], 1e-12), (0, true));
        assert_eq!(argmax_with_tie(&[0.1, 0.5, 0.4], 1e-12), (1, false));
    }
}
