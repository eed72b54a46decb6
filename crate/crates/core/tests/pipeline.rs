use funcmetric::fit::default_window;
use funcmetric::*;

fn times() -> Vec<f64> {
    (0..16).map(|i| 2.0 * i as f64).collect()
}

fn arms(n: u32, seed: u64) -> (TrialSeries, TrialSeries) {
    let c1 = ResponseCurve::exp_decay(0.6, 0.2).unwrap();
    let c2 = ResponseCurve::exp_decay(0.9, 0.08).unwrap();
    (
        simulate_trial("ref", &c1, n, &times(), seed).unwrap(),
        simulate_trial("test", &c2, n, &times(), seed + 1).unwrap(),
    )
}

fn spec() -> MetricSpec {
    MetricSpec::new(NormOrder::Finite(1.0), 5.0, 20.0).unwrap()
}

#[test]
fn parametric_pipeline_brackets_truth() {
    let (s1, s2) = arms(2000, 10);
    let opts = MleOptions::default();
    let f1 = fit_parametric_mle(&s1, ModelKind::ExpDecay, &opts).unwrap();
    let f2 = fit_parametric_mle(&s2, ModelKind::ExpDecay, &opts).unwrap();
    assert!(f1.converged && f2.converged);
    let boot = parametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 99, &opts).unwrap();
    assert_eq!(boot.replicate_values.len() + boot.n_failed, 200);
    assert!(boot.ci_lower < boot.point_estimate && boot.point_estimate < boot.ci_upper);
    // true L_1(5, 20) = 0.88886
    assert!(boot.ci_lower < 0.88886 && 0.88886 < boot.ci_upper, "{boot:?}");

    let loose = noninferiority_decision(&boot, 1.5).unwrap();
    assert!(loose.reject_null);
    let tight = noninferiority_decision(&boot, 0.5).unwrap();
    assert!(!tight.reject_null);
}

#[test]
fn nonparametric_pipeline_is_reproducible() {
    let (s1, s2) = arms(200, 3);
    let (t0, t1) = default_window(&s1).unwrap();
    let pick = |s: &TrialSeries| {
        let sel = select_degree_ks(s, 0.2, ConstraintMode::Strict, t0, t1).unwrap();
        sel.chosen_or_fallback().unwrap().0.clone()
    };
    let (f1, f2) = (pick(&s1), pick(&s2));
    let opts = NonparametricBootstrapOptions::default();
    let a = nonparametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 5, &opts).unwrap();
    let b = nonparametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 5, &opts).unwrap();
    assert_eq!(a, b);
    let c = nonparametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 6, &opts).unwrap();
    assert_ne!(a.replicate_values, c.replicate_values);
    assert!(a.se > 0.0 && a.ci_lower <= a.median && a.median <= a.ci_upper);
}

#[test]
fn bootstrap_is_independent_of_thread_count() {
    let (s1, s2) = arms(300, 21);
    let opts = MleOptions::default();
    let f1 = fit_parametric_mle(&s1, ModelKind::ExpDecay, &opts).unwrap();
    let f2 = fit_parametric_mle(&s2, ModelKind::ExpDecay, &opts).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| parametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 8, &opts).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn reports_round_trip_through_json() {
    let (s1, _) = arms(150, 4);
    let fit = fit_parametric_mle(&s1, ModelKind::LogLogistic, &MleOptions::default()).unwrap();
    let json = serde_json::to_string(&fit).unwrap();
    let back: ParametricFit = serde_json::from_str(&json).unwrap();
    assert_eq!(fit, back);

    let np = fit_bernstein_wls(&s1, 4, ConstraintMode::Relaxed, 0.0, 30.0).unwrap();
    let json = serde_json::to_string(&np).unwrap();
    let back: NonparametricFit = serde_json::from_str(&json).unwrap();
    assert_eq!(np.curve.gamma(), back.curve.gamma());

    let spec = MetricSpec::new(NormOrder::Infinity, 0.0, 30.0).unwrap();
    let back: MetricSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(spec, back);
}

#[test]
fn mixed_families_can_be_compared() {
    let (s1, s2) = arms(500, 12);
    let p = fit_parametric_mle(&s1, ModelKind::ExpDecay, &MleOptions::default()).unwrap();
    let np = fit_bernstein_wls(&s2, 4, ConstraintMode::Strict, 0.0, 30.0).unwrap();
    let r = lp_metric(
        &p.curve().unwrap(),
        &ResponseCurve::Bernstein(np.curve.clone()),
        &spec(),
    )
    .unwrap();
    assert!((r.value - 0.889).abs() < 0.3, "{}", r.value);
}
