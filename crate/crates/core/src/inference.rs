//! Bootstrap sampling distributions of the plug-in metric.
//!
//! Every replicate draws from its own ChaCha stream keyed by `(seed, index)`,
//! so results do not depend on scheduling or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{
    fit_bernstein_wls, fit_parametric_mle, select_degree_ks, MleOptions, NonparametricFit,
    ParametricFit, TrialSeries,
};
use crate::metric::{lp_metric, MetricSpec};
use crate::models::ResponseCurve;
use crate::simlab::{replicate_rng, simulate_counts};

pub const MIN_REPLICATES: usize = 200;
/// Largest tolerated share of failed replicate fits.
pub const MAX_FAILURE_RATE: f64 = 0.05;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicate_values: Vec<f64>,
    pub point_estimate: f64,
    pub se: f64,
    pub ci_level: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub median: f64,
    pub n_failed: usize,
    pub n_requested: usize,
    pub seed: u64,
}

impl BootstrapResult {
    /// Summarizes successful replicate values.
    pub fn from_replicates(
        replicate_values: Vec<f64>,
        point_estimate: f64,
        n_failed: usize,
        seed: u64,
        ci_level: f64,
    ) -> Result<Self> {
        let (ci_lower, ci_upper) = percentile_ci(&replicate_values, ci_level)?;
        let median = quantile(&replicate_values, 0.5)?;
        let n_requested = replicate_values.len() + n_failed;
        Ok(Self {
            se: sample_sd(&replicate_values),
            replicate_values,
            point_estimate,
            ci_level,
            ci_lower,
            ci_upper,
            median,
            n_failed,
            n_requested,
            seed,
        })
    }
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Equal-tailed percentile interval at `level`.
pub fn percentile_ci(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData("percentile interval needs at least 2 values".into()));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!("confidence level {level} outside [0, 1)")));
    }
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(values, tail)?, quantile(values, 1.0 - tail)?))
}

fn check_replicates(b: usize) -> Result<()> {
    if b < MIN_REPLICATES {
        return Err(Error::InsufficientReplicates {
            required: MIN_REPLICATES,
            got: b,
        });
    }
    Ok(())
}

fn summarize(outcomes: Vec<Option<f64>>, point: f64, seed: u64) -> Result<BootstrapResult> {
    let total = outcomes.len();
    let values: Vec<f64> = outcomes.into_iter().flatten().collect();
    let failed = total - values.len();
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    BootstrapResult::from_replicates(values, point, failed, seed, DEFAULT_CI_LEVEL)
}

fn fitted_rates(curve: &ResponseCurve, series: &TrialSeries) -> Result<Vec<f64>> {
    series.observations().iter().map(|o| curve.eval(o.t)).collect()
}

/// Parametric bootstrap: resample counts from the two fitted curves, refit
/// the same family, and recompute the metric.
#[allow(clippy::too_many_arguments)]
pub fn parametric_bootstrap(
    series1: &TrialSeries,
    series2: &TrialSeries,
    fit1: &ParametricFit,
    fit2: &ParametricFit,
    spec: &MetricSpec,
    replicates: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<BootstrapResult> {
    check_replicates(replicates)?;
    if !(fit1.converged && fit2.converged) {
        return Err(Error::Precondition("bootstrap requires converged fits".into()));
    }
    let curve1 = fit1.curve()?;
    let curve2 = fit2.curve()?;
    let point = lp_metric(&curve1, &curve2, spec)?.value;
    let rates1 = fitted_rates(&curve1, series1)?;
    let rates2 = fitted_rates(&curve2, series2)?;
    let refit_opts = MleOptions {
        standard_errors: false,
        ..*opts
    };

    let outcomes: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let y1 = simulate_counts(&rates1, series1.n(), &mut rng).ok()?;
            let y2 = simulate_counts(&rates2, series2.n(), &mut rng).ok()?;
            let s1 = series1.with_counts(&y1).ok()?;
            let s2 = series2.with_counts(&y2).ok()?;
            let f1 = fit_parametric_mle(&s1, fit1.model_kind, &refit_opts).ok()?;
            let f2 = fit_parametric_mle(&s2, fit2.model_kind, &refit_opts).ok()?;
            if !(f1.converged && f2.converged) {
                return None;
            }
            lp_metric(&f1.curve().ok()?, &f2.curve().ok()?, spec)
                .ok()
                .map(|m| m.value)
        })
        .collect();
    summarize(outcomes, point, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonparametricBootstrapOptions {
    /// Re-run KS degree selection in every replicate instead of keeping the original degree.
    pub reselect_degree: bool,
    pub ks_threshold: f64,
}

impl Default for NonparametricBootstrapOptions {
    fn default() -> Self {
        Self {
            reselect_degree: false,
            ks_threshold: crate::fit::DEFAULT_KS_THRESHOLD,
        }
    }
}

fn refit_bernstein(
    series: &TrialSeries,
    original: &NonparametricFit,
    opts: &NonparametricBootstrapOptions,
) -> Result<ResponseCurve> {
    let c = &original.curve;
    let fit = if opts.reselect_degree {
        let sel = select_degree_ks(series, opts.ks_threshold, c.mode(), c.t_min(), c.t_max())?;
        sel.chosen_or_fallback()
            .map(|(f, _)| f.clone())
            .ok_or_else(|| Error::NonConvergence("no candidate degree could be fitted".into()))?
    } else {
        fit_bernstein_wls(series, c.degree(), c.mode(), c.t_min(), c.t_max())?
    };
    Ok(ResponseCurve::Bernstein(fit.curve))
}

/// Bootstrap for Bernstein fits: resample from the fitted curves and refit
/// with the original degree, constraint mode and window.
#[allow(clippy::too_many_arguments)]
pub fn nonparametric_bootstrap(
    series1: &TrialSeries,
    series2: &TrialSeries,
    fit1: &NonparametricFit,
    fit2: &NonparametricFit,
    spec: &MetricSpec,
    replicates: usize,
    seed: u64,
    opts: &NonparametricBootstrapOptions,
) -> Result<BootstrapResult> {
    check_replicates(replicates)?;
    let curve1 = ResponseCurve::Bernstein(fit1.curve.clone());
    let curve2 = ResponseCurve::Bernstein(fit2.curve.clone());
    let point = lp_metric(&curve1, &curve2, spec)?.value;
    let rates1 = fitted_rates(&curve1, series1)?;
    let rates2 = fitted_rates(&curve2, series2)?;

    let outcomes: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let y1 = simulate_counts(&rates1, series1.n(), &mut rng).ok()?;
            let y2 = simulate_counts(&rates2, series2.n(), &mut rng).ok()?;
            let c1 = refit_bernstein(&series1.with_counts(&y1).ok()?, fit1, opts).ok()?;
            let c2 = refit_bernstein(&series2.with_counts(&y2).ok()?, fit2, opts).ok()?;
            lp_metric(&c1, &c2, spec).ok().map(|m| m.value)
        })
        .collect();
    summarize(outcomes, point, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::ModelKind;
    use crate::metric::NormOrder;
    use crate::models::ConstraintMode;

    fn spec() -> MetricSpec {
        MetricSpec::new(NormOrder::Finite(1.0), 5.0, 20.0).unwrap()
    }

    #[test]
    fn quantile_conventions() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = percentile_ci(&v, 0.95).unwrap();
        assert!((lo - 3.475).abs() < 1e-12 && (hi - 97.525).abs() < 1e-12);
        assert!((lo - 3.0).abs() <= 0.5 && (hi - 98.0).abs() <= 0.5);
        assert_eq!(percentile_ci(&[2.5; 7], 0.9).unwrap(), (2.5, 2.5));
        let (a, b) = percentile_ci(&v, 0.0).unwrap();
        assert_eq!((a, b), (50.5, 50.5));
        assert_eq!(percentile_ci(&[], 0.95), Err(Error::EmptyInput));
        assert!(percentile_ci(&[1.0], 0.95).is_err());
    }

    #[test]
    fn parametric_rejects_small_b_and_unconverged_fits() {
        let s = TrialSeries::from_counts("a", 50, &[1.0, 2.0, 3.0, 4.0], &[5, 9, 14, 17]).unwrap();
        let fit = fit_parametric_mle(&s, ModelKind::ExpDecay, &MleOptions::default()).unwrap();
        assert!(matches!(
            parametric_bootstrap(&s, &s, &fit, &fit, &spec(), 50, 1, &MleOptions::default()),
            Err(Error::InsufficientReplicates { .. })
        ));
        let mut bad = fit.clone();
        bad.converged = false;
        assert!(matches!(
            parametric_bootstrap(&s, &s, &bad, &fit, &spec(), 200, 1, &MleOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn parametric_fails_when_every_replicate_is_degenerate() {
        // Fitted curves that are saturated at every observed time yield
        // all-n resamples, which cannot be refitted.
        let s = TrialSeries::from_counts("a", 30, &[5.0, 10.0, 15.0], &[30, 30, 29]).unwrap();
        let saturated = ParametricFit {
            model_kind: ModelKind::ExpDecay,
            alpha: 1.0,
            beta: 40.0,
            loglik: 0.0,
            converged: true,
            n_restarts_used: 1,
            std_errors: None,
        };
        let err = parametric_bootstrap(&s, &s, &saturated, &saturated, &spec(), 200, 3, &MleOptions::default());
        assert_eq!(err, Err(Error::TooManyFailures { failed: 200, total: 200 }));
    }

    #[test]
    fn parametric_is_deterministic() {
        let times: Vec<f64> = (0..16).map(|i| 2.0 * i as f64).collect();
        let c1: Vec<u32> = times.iter().map(|&t| (60.0 * (1.0 - (-0.2 * t).exp())).round() as u32).collect();
        let c2: Vec<u32> = times.iter().map(|&t| (90.0 * (1.0 - (-0.08 * t).exp())).round() as u32).collect();
        let s1 = TrialSeries::from_counts("1", 100, &times, &c1).unwrap();
        let s2 = TrialSeries::from_counts("2", 100, &times, &c2).unwrap();
        let opts = MleOptions { grid: 3, ..MleOptions::default() };
        let f1 = fit_parametric_mle(&s1, ModelKind::ExpDecay, &opts).unwrap();
        let f2 = fit_parametric_mle(&s2, ModelKind::ExpDecay, &opts).unwrap();
        let a = parametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 11, &opts).unwrap();
        let b = parametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 11, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replicate_values.len() + a.n_failed, 200);
        assert!(a.ci_lower <= a.median && a.median <= a.ci_upper);
        assert!(a.ci_lower < a.point_estimate && a.point_estimate < a.ci_upper);
        let c = parametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 12, &opts).unwrap();
        assert_ne!(a.replicate_values, c.replicate_values);
    }

    #[test]
    fn nonparametric_zero_curves_give_zero_metric() {
        let times: Vec<f64> = (0..10).map(|i| 3.0 * i as f64).collect();
        let s = TrialSeries::from_counts("z", 40, &times, &[0; 10]).unwrap();
        let fit = fit_bernstein_wls(&s, 3, ConstraintMode::Strict, 0.0, 27.0).unwrap();
        let mut zero = fit.clone();
        zero.curve = crate::models::BernsteinCurve::new(vec![0.0; 3], 0.0, 27.0, ConstraintMode::Strict).unwrap();
        let res = nonparametric_bootstrap(&s, &s, &zero, &zero, &spec(), 200, 5, &Default::default()).unwrap();
        assert!(res.replicate_values.iter().all(|&v| v == 0.0));
        assert_eq!(res.se, 0.0);
        assert_eq!(res.point_estimate, 0.0);
    }

    #[test]
    fn nonparametric_is_deterministic() {
        let times: Vec<f64> = (0..16).map(|i| 2.0 * i as f64).collect();
        let c1: Vec<u32> = times.iter().map(|&t| (60.0 * (1.0 - (-0.2 * t).exp())).round() as u32).collect();
        let c2: Vec<u32> = times.iter().map(|&t| (90.0 * (1.0 - (-0.08 * t).exp())).round() as u32).collect();
        let s1 = TrialSeries::from_counts("1", 100, &times, &c1).unwrap();
        let s2 = TrialSeries::from_counts("2", 100, &times, &c2).unwrap();
        let f1 = fit_bernstein_wls(&s1, 5, ConstraintMode::Strict, 0.0, 30.0).unwrap();
        let f2 = fit_bernstein_wls(&s2, 4, ConstraintMode::Strict, 0.0, 30.0).unwrap();
        let opts = NonparametricBootstrapOptions::default();
        let a = nonparametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 9, &opts).unwrap();
        let b = nonparametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 9, &opts).unwrap();
        assert_eq!(a.replicate_values, b.replicate_values);
        assert!(a.se > 0.0);
        let reselect = NonparametricBootstrapOptions { reselect_degree: true, ks_threshold: 0.2 };
        let c = nonparametric_bootstrap(&s1, &s2, &f1, &f2, &spec(), 200, 9, &reselect).unwrap();
        assert_eq!(c.replicate_values.len() + c.n_failed, 200);
    }
}
