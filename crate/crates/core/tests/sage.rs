use divlens::corpus::FrequencyTable;
use divlens::sage::{
    estimate_population_baseline, fit_problem, fit_sage, l1_norm, optimality_residual, sage_top_k, solve_fixed_lambda,
    Regularization, SageConfig, SageProblem,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut impl Rng, n: usize) -> SageProblem {
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    let z: f64 = weights.iter().sum();
    let background: Vec<f64> = weights.iter().map(|w| (w / z).ln()).collect();
    let counts: Vec<f64> = (0..n).map(|_| rng.random_range(0..60) as f64).collect();
    let words = (0..n).map(|i| format!("w{i:02}")).collect();
    SageProblem::from_parts(words, background, counts)
}

fn central_difference(problem: &SageProblem, eta: &[f64], h: f64) -> Vec<f64> {
    (0..eta.len())
        .map(|i| {
            let mut up = eta.to_vec();
            let mut down = eta.to_vec();
            up[i] += h;
            down[i] -= h;
            (problem.smooth_objective(&up) - problem.smooth_objective(&down)) / (2.0 * h)
        })
        .collect()
}

/// Plain proximal gradient with a fixed unit step.
fn ista(problem: &SageProblem, lambda: f64, iterations: usize) -> Vec<f64> {
    let mut x = vec![0.0; problem.len()];
    for _ in 0..iterations {
        let g = problem.gradient(&x);
        for (xi, gi) in x.iter_mut().zip(g) {
            let v = *xi - gi;
            *xi = v.signum() * (v.abs() - lambda).max(0.0);
        }
    }
    x
}

#[test]
fn gradient_matches_finite_differences_at_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let problem = random_problem(&mut rng, 20);
        let fit = fit_problem(&problem, &SageConfig::default()).unwrap();
        let analytic = problem.gradient(&fit.eta);
        let numeric = central_difference(&problem, &fit.eta, 1e-5);
        let err = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-4, "finite-difference error {err}");
        assert!(optimality_residual(&analytic, &fit.eta, fit.regularization) <= 1e-5);
    }
}

#[test]
fn dense_problem_matches_plain_proximal_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let problem = random_problem(&mut rng, 5);
        let lambda = 0.2 * problem.lambda_max();
        let fast = solve_fixed_lambda(&problem, lambda, None, 1e-10, 100_000).unwrap();
        let slow = ista(&problem, lambda, 200_000);
        for (a, b) in fast.eta.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {slow:?}", fast.eta);
        }
    }
}

#[test]
fn proportional_community_recovers_zero() {
    let baseline = FrequencyTable::from_counts([("a", 400u64), ("b", 200), ("c", 100), ("d", 300)]);
    let population = estimate_population_baseline(&baseline, 100, 0, 1000, &FrequencyTable::new()).unwrap();
    let community = FrequencyTable::from_counts([("a", 40u64), ("b", 20), ("c", 10), ("d", 30)]);
    let fit = fit_sage(&community, &population, &SageConfig::default()).unwrap();
    assert!(fit.eta.iter().all(|e| e.abs() <= 1e-6), "{:?}", fit.eta);
    assert!(sage_top_k(&fit, 10).is_empty());
}

#[test]
fn population_worked_example() {
    let baseline = FrequencyTable::from_counts([("a", 7u64), ("b", 3)]);
    let community = FrequencyTable::from_counts([("c", 4u64), ("a", 1)]);
    // ten baseline words at five per comment make two comments
    let pop = estimate_population_baseline(&baseline, 2, 100, 200, &community).unwrap();
    let got: Vec<(&str, f64)> = pop.iter().collect();
    assert_eq!(got, vec![("a", 350.0), ("b", 150.0), ("c", 4.0)]);
}

#[test]
fn overrepresented_word_gets_positive_eta() {
    let baseline = FrequencyTable::from_counts((0..30).map(|i| (format!("w{i}"), 100u64)));
    let mut community = FrequencyTable::from_counts((0..30).map(|i| (format!("w{i}"), 20u64)));
    community.add("w3", 400);
    let pop = estimate_population_baseline(&baseline, 300, 0, 10_000, &community).unwrap();
    let fit = fit_sage(&community, &pop, &SageConfig::default()).unwrap();
    let top = sage_top_k(&fit, 1);
    assert_eq!(top.words().collect::<Vec<_>>(), ["w3"]);
    assert!(fit.eta_of("w3").unwrap() > 1.0);
}

#[test]
fn fixed_lambda_above_max_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let problem = random_problem(&mut rng, 15);
    let config = SageConfig { regularization: Regularization::Fixed(problem.lambda_max() * 1.01), ..SageConfig::default() };
    let fit = fit_problem(&problem, &config).unwrap();
    assert!(fit.eta.iter().all(|&e| e == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lambda_path_shrinks_and_improves_on_zero(seed in 0u64..10_000, n in 2usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_problem(&mut rng, n);
        prop_assume!(problem.counts.iter().sum::<f64>() > 0.0);
        let max = problem.lambda_max();
        let zero = vec![0.0; n];
        let mut last_norm = f64::INFINITY;
        for frac in [0.01, 0.05, 0.2, 0.5, 0.9] {
            let lambda = frac * max;
            let sol = solve_fixed_lambda(&problem, lambda, None, 1e-9, 100_000).unwrap();
            let norm = l1_norm(&sol.eta);
            prop_assert!(norm <= last_norm + 1e-6, "norm {} after {}", norm, last_norm);
            prop_assert!(problem.objective(&sol.eta, lambda) <= problem.objective(&zero, lambda) + 1e-12);
            last_norm = norm;
        }
    }
}
