use funcmetric::random_effects::{
    fit_random_coef_mle, marginal_theta_expectation, simulate_multi_study, RandomCoefOptions,
    RandomCoefParams,
};

fn truth() -> RandomCoefParams {
    RandomCoefParams {
        mu_a: -1.2,
        mu_b: -1.5,
        sigma_a: 0.5,
        sigma_b: 0.4,
        sigma_ab: -0.1,
    }
}

#[test]
fn recovers_population_parameters_within_three_se() {
    let times = [2.0, 4.0, 8.0, 12.0, 16.0, 24.0];
    let data = simulate_multi_study(&truth(), 500, &times, 20, 2024).unwrap();
    let fit = fit_random_coef_mle(&data, &RandomCoefOptions::default()).unwrap();
    let se = fit.std_errors.expect("observed information should be invertible");
    let t = truth();
    let est = fit.params;
    let pairs = [
        ("mu_a", est.mu_a, t.mu_a),
        ("mu_b", est.mu_b, t.mu_b),
        ("sigma_a", est.sigma_a, t.sigma_a),
        ("sigma_b", est.sigma_b, t.sigma_b),
        ("sigma_ab", est.sigma_ab, t.sigma_ab),
    ];
    for ((name, hat, true_value), s) in pairs.iter().zip(se) {
        assert!(s > 0.0 && s.is_finite(), "{name}: se {s}");
        assert!(
            (hat - true_value).abs() <= 3.0 * s,
            "{name}: {hat} vs {true_value} (se {s})"
        );
    }
    assert_eq!(fit.n_studies, 20);
    assert!(fit.prob_alpha_above_one < 0.05 && fit.warnings.is_empty(), "{:?}", fit.warnings);
}

#[test]
fn fitted_marginal_curve_tracks_pooled_proportions() {
    let times = [2.0, 4.0, 8.0, 12.0, 16.0, 24.0];
    let data = simulate_multi_study(&truth(), 500, &times, 30, 7).unwrap();
    let fit = fit_random_coef_mle(&data, &RandomCoefOptions::default()).unwrap();
    for (j, &t) in times.iter().enumerate() {
        let pooled: f64 = data
            .iter()
            .map(|s| s.observations()[j].y as f64 / s.n() as f64)
            .sum::<f64>()
            / data.len() as f64;
        let model = marginal_theta_expectation(&fit.params, t).unwrap();
        assert!((model - pooled).abs() < 0.06, "t={t}: {model} vs {pooled}");
    }
}

#[test]
fn large_alpha_mass_is_flagged() {
    let params = RandomCoefParams {
        mu_a: -0.2,
        mu_b: -1.5,
        sigma_a: 0.3,
        sigma_b: 0.3,
        sigma_ab: 0.0,
    };
    let data = simulate_multi_study(&params, 300, &[2.0, 4.0, 8.0, 12.0], 12, 3).unwrap();
    let fit = fit_random_coef_mle(&data, &RandomCoefOptions::default()).unwrap();
    // true P(alpha > 1) = Phi(-2/3) ~ 0.25
    assert!(fit.prob_alpha_above_one > 0.05, "{}", fit.prob_alpha_above_one);
    assert!(fit.warnings.iter().any(|w| w.contains("P(alpha > 1)")));
}
