use patchscan_core::hmm::oracle::{brute_force_best_path, brute_force_likelihood, brute_force_posterior};
use patchscan_core::hmm::{
    fit_baum_welch, log_likelihood, posterior_decode, random_model, simulate, viterbi_decode, FitConfig, HmmModel,
};
use proptest::prelude::*;

fn path_log_prob(model: &HmmModel, obs: &[usize], path: &[usize]) -> f64 {
    let mut lp = model.initial()[path[0]].ln() + model.emission(path[0], obs[0]).ln();
    for t in 1..obs.len() {
        lp += model.transition(path[t - 1], path[t]).ln() + model.emission(path[t], obs[t]).ln();
    }
    lp
}

fn case() -> impl Strategy<Value = (HmmModel, Vec<usize>)> {
    (1usize..=3, 2usize..=3, any::<u64>(), 1usize..=7)
        .prop_flat_map(|(n, m, seed, len)| (Just(random_model(n, m, seed)), prop::collection::vec(0..m, len)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn forward_matches_enumeration((model, obs) in case()) {
        let fast = log_likelihood(&model, &obs).unwrap();
        let exact = brute_force_likelihood(&model, &obs).unwrap().ln();
        prop_assert!(((fast - exact) / exact).abs() < 1e-10, "{fast} vs {exact}");
    }

    #[test]
    fn posterior_rows_are_distributions((model, obs) in case()) {
        let d = posterior_decode(&model, &obs).unwrap();
        let exact = brute_force_posterior(&model, &obs).unwrap();
        for (t, row) in d.posterior.rows().enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &g) in row.iter().enumerate() {
                prop_assert!(g >= 0.0);
                prop_assert!((g - exact[t][j]).abs() < 1e-10);
            }
            prop_assert_eq!(row[d.path[t]], row.iter().cloned().fold(f64::MIN, f64::max));
        }
    }

    #[test]
    fn viterbi_is_jointly_best((model, obs) in case()) {
        let path = viterbi_decode(&model, &obs).unwrap();
        let (_, best) = brute_force_best_path(&model, &obs).unwrap();
        prop_assert!((path_log_prob(&model, &obs, &path) - best.ln()).abs() < 1e-9);
        let marginal = posterior_decode(&model, &obs).unwrap().path;
        prop_assert!(path_log_prob(&model, &obs, &path) >= path_log_prob(&model, &obs, &marginal) - 1e-9);
    }

    #[test]
    fn likelihood_ignores_state_order((model, obs) in case(), rot in 0usize..3) {
        let n = model.num_states();
        let order: Vec<usize> = (0..n).map(|k| (k + rot) % n).collect();
        let permuted = model.permute_states(&order).unwrap();
        let a = log_likelihood(&model, &obs).unwrap();
        let b = log_likelihood(&permuted, &obs).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn json_round_trip_is_exact(n in 1usize..=4, m in 2usize..=3, seed in any::<u64>()) {
        let model = random_model(n, m, seed);
        let back = HmmModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn simulation_is_seeded(seed in any::<u64>(), len in 1usize..300) {
        let model = random_model(3, 2, seed ^ 0x5eed);
        let a = simulate(&model, len, seed).unwrap();
        prop_assert_eq!(&a, &simulate(&model, len, seed).unwrap());
        prop_assert_eq!(a.0.len(), len);
        prop_assert!(a.0.iter().all(|&o| o < 2) && a.1.iter().all(|&s| s < 3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn em_never_decreases_likelihood(seed in any::<u64>(), n in 1usize..=3) {
        let (obs, _) = simulate(&random_model(3, 2, seed), 800, seed).unwrap();
        let cfg = FitConfig { restarts: 1, max_iterations: 60, tolerance: 0.0, seed, time_budget: None };
        let report = fit_baum_welch(&obs, n, 2, &cfg).unwrap();
        prop_assert!(report.max_decrease() <= 1e-9);
        let refit = fit_baum_welch(&obs, n, 2, &cfg).unwrap();
        prop_assert_eq!(refit.fitted_model, report.fitted_model);
    }
}

#[test]
fn symbol_out_of_range_is_rejected() {
    let model = random_model(2, 2, 1);
    assert!(log_likelihood(&model, &[0, 1, 2]).is_err());
}

#[test]
fn rows_must_be_stochastic() {
    assert!(HmmModel::new(
        vec![vec![0.5, 0.6], vec![0.5, 0.5]],
        vec![vec![0.5, 0.5]; 2],
        vec![0.5, 0.5]
    )
    .is_err());
    assert!(HmmModel::new(vec![vec![1.0]], vec![vec![-0.1, 1.1]], vec![1.0]).is_err());
}
