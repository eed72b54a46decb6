use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use funcmetric::fit::{constraint_system, solve_qp};
use funcmetric::nalgebra::{DMatrix, DVector};
use funcmetric::{
    fit_bernstein_wls, fit_parametric_mle, lp_metric, select_degree_ks, simulate_trial, ConstraintMode,
    MetricSpec, MleOptions, ModelKind, NormOrder, ResponseCurve,
};

fn times() -> Vec<f64> {
    (1..=15).map(|i| 2.0 * i as f64).collect()
}

fn bench_fits(c: &mut Criterion) {
    let truth = ResponseCurve::exp_decay(0.6, 0.2).unwrap();
    let series = simulate_trial("A", &truth, 100, &times(), 7).unwrap();
    let opts = MleOptions::default();

    c.bench_function("mle_exp_decay", |b| {
        b.iter(|| fit_parametric_mle(black_box(&series), ModelKind::ExpDecay, &opts).unwrap())
    });
    c.bench_function("bernstein_wls_m5", |b| {
        b.iter(|| fit_bernstein_wls(black_box(&series), 5, ConstraintMode::Strict, 0.0, 30.0).unwrap())
    });
    c.bench_function("select_degree_ks", |b| {
        b.iter(|| select_degree_ks(black_box(&series), 0.5, ConstraintMode::Strict, 0.0, 30.0).unwrap())
    });
}

fn bench_metric(c: &mut Criterion) {
    let c1 = ResponseCurve::exp_decay(0.6, 0.2).unwrap();
    let c2 = ResponseCurve::exp_decay(0.9, 0.08).unwrap();
    let l1 = MetricSpec::new(NormOrder::Finite(1.0), 5.0, 20.0).unwrap();
    let sup = MetricSpec::new(NormOrder::Infinity, 5.0, 20.0).unwrap();
    c.bench_function("lp_metric_l1", |b| b.iter(|| lp_metric(black_box(&c1), &c2, &l1).unwrap()));
    c.bench_function("lp_metric_sup", |b| b.iter(|| lp_metric(black_box(&c1), &c2, &sup).unwrap()));
}

fn bench_qp(c: &mut Criterion) {
    let m = 8;
    let h = DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 } else { 0.3 });
    let f = DVector::from_fn(m, |i, _| 1.0 - 0.4 * i as f64);
    let (r, rhs) = constraint_system(m, ConstraintMode::Strict);
    c.bench_function("qp_degree8", |b| b.iter(|| solve_qp(black_box(&h), &f, &r, &rhs).unwrap()));
}

criterion_group!(benches, bench_fits, bench_metric, bench_qp);
criterion_main!(benches);
