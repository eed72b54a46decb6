//! Monte Carlo comparison of the true-parametric (TP), misspecified
//! parametric (MP) and nonparametric (NP) estimators of `L_1(5, 20)` on two
//! simulated exponential-decay arms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_parametric_mle, select_degree_ks, MleOptions, ModelKind, TrialSeries};
use crate::inference::sample_sd;
use crate::metric::{lp_metric, MetricSpec, NormOrder};
use crate::models::{ConstraintMode, ExpDecayParams, ResponseCurve};

/// RNG for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Independent `Binomial(n, rate_i)` draws.
pub fn simulate_counts<R: Rng + ?Sized>(rates: &[f64], n: u32, rng: &mut R) -> Result<Vec<u32>> {
    rates
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("rate {p} outside [0, 1]")));
            }
            let dist = Binomial::new(n as u64, p)
                .map_err(|e| Error::InvalidParameter(format!("binomial({n}, {p}): {e}")))?;
            Ok(dist.sample(rng) as u32)
        })
        .collect()
}

/// One simulated arm: `y_i ~ Binomial(n, curve(t_i))`.
pub fn simulate_trial(
    arm_id: &str,
    curve: &ResponseCurve,
    n: u32,
    times: &[f64],
    seed: u64,
) -> Result<TrialSeries> {
    let rates: Vec<f64> = times.iter().map(|&t| curve.eval(t)).collect::<Result<_>>()?;
    let counts = simulate_counts(&rates, n, &mut replicate_rng(seed, 0))?;
    TrialSeries::from_counts(arm_id, n, times, &counts)
}

/// `(estimate - truth) / truth`.
pub fn relative_bias(estimate: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((estimate - truth) / truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub truth1: ExpDecayParams,
    pub truth2: ExpDecayParams,
    pub horizon: f64,
    /// Sampling interval; 2 gives N = 16 points on [0, 30], 1 gives N = 31.
    pub spacing: f64,
    pub n: u32,
    pub reps: usize,
    pub metric_spec: MetricSpec,
    pub ks_threshold: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            truth1: ExpDecayParams { alpha: 0.6, beta: 0.2 },
            truth2: ExpDecayParams { alpha: 0.9, beta: 0.08 },
            horizon: 30.0,
            spacing: 2.0,
            n: 100,
            reps: 200,
            metric_spec: MetricSpec {
                p: NormOrder::Finite(1.0),
                a: 5.0,
                b: 20.0,
                margin_d: None,
            },
            ks_threshold: 0.5,
            seed: 42,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.truth1.validate()?;
        self.truth2.validate()?;
        self.metric_spec.validate()?;
        if self.spacing != 1.0 && self.spacing != 2.0 {
            return Err(Error::InvalidParameter(format!(
                "spacing must be 1 or 2, got {}",
                self.spacing
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if self.reps == 0 || self.n == 0 {
            return Err(Error::InvalidParameter("reps and n must be positive".into()));
        }
        if !(self.ks_threshold > 0.0 && self.ks_threshold < 1.0) {
            return Err(Error::InvalidParameter("ks_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Observation times `0, spacing, 2 spacing, ...` up to the horizon.
    pub fn times(&self) -> Vec<f64> {
        let steps = (self.horizon / self.spacing + 1e-9).floor() as usize;
        (0..=steps).map(|i| i as f64 * self.spacing).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "TP")]
    TrueParametric,
    #[serde(rename = "MP")]
    MisspecifiedParametric,
    #[serde(rename = "NP")]
    Nonparametric,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::TrueParametric,
        Estimator::MisspecifiedParametric,
        Estimator::Nonparametric,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::TrueParametric => "TP",
            Estimator::MisspecifiedParametric => "MP",
            Estimator::Nonparametric => "NP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub estimates: Vec<f64>,
    pub relative_bias: Vec<f64>,
    pub mean_rb: f64,
    /// Standard deviation of RB over repetitions divided by sqrt(reps).
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub n_points: usize,
    pub l0: f64,
    pub estimators: Vec<EstimatorSummary>,
    pub selected_m_arm1: Vec<usize>,
    pub selected_m_arm2: Vec<usize>,
    pub mean_m_arm1: f64,
    pub mc_se_m_arm1: f64,
    pub mean_m_arm2: f64,
    pub mc_se_m_arm2: f64,
    /// Arms where no degree reached the KS threshold and the best p-value was used.
    pub selection_fallbacks: usize,
    pub failed_reps: usize,
}

impl StudyResult {
    pub fn summary(&self, estimator: Estimator) -> &EstimatorSummary {
        self.estimators
            .iter()
            .find(|s| s.estimator == estimator)
            .expect("every estimator is summarized")
    }
}

struct RepOutcome {
    estimates: [f64; 3],
    m: [usize; 2],
    fallbacks: usize,
}

fn run_repetition(config: &StudyConfig, times: &[f64], index: u64) -> Result<RepOutcome> {
    let truth1 = ResponseCurve::ExpDecay(config.truth1);
    let truth2 = ResponseCurve::ExpDecay(config.truth2);
    let mut rng = replicate_rng(config.seed, index);
    let rates = |c: &ResponseCurve| times.iter().map(|&t| c.eval(t)).collect::<Result<Vec<_>>>();
    let y1 = simulate_counts(&rates(&truth1)?, config.n, &mut rng)?;
    let y2 = simulate_counts(&rates(&truth2)?, config.n, &mut rng)?;
    let s1 = TrialSeries::from_counts("treatment-1", config.n, times, &y1)?;
    let s2 = TrialSeries::from_counts("treatment-2", config.n, times, &y2)?;
    let spec = &config.metric_spec;

    let mle = MleOptions {
        standard_errors: false,
        ..MleOptions::default()
    };
    let parametric = |kind: ModelKind| -> Result<f64> {
        let f1 = fit_parametric_mle(&s1, kind, &mle)?;
        let f2 = fit_parametric_mle(&s2, kind, &mle)?;
        if !(f1.converged && f2.converged) {
            return Err(Error::NonConvergence(format!("{kind:?} fit unstable across restarts")));
        }
        Ok(lp_metric(&f1.curve()?, &f2.curve()?, spec)?.value)
    };
    let tp = parametric(ModelKind::ExpDecay)?;
    let mp = parametric(ModelKind::LogLogistic)?;

    let t_max = *times.last().expect("non-empty time grid");
    let mut fallbacks = 0;
    let mut np_curve = |s: &TrialSeries| -> Result<(ResponseCurve, usize)> {
        let sel = select_degree_ks(s, config.ks_threshold, ConstraintMode::Strict, 0.0, t_max)?;
        let (fit, fallback) = sel
            .chosen_or_fallback()
            .ok_or_else(|| Error::NonConvergence("no Bernstein degree could be fitted".into()))?;
        fallbacks += usize::from(fallback);
        Ok((ResponseCurve::Bernstein(fit.curve.clone()), fit.curve.degree()))
    };
    let (c1, m1) = np_curve(&s1)?;
    let (c2, m2) = np_curve(&s2)?;
    let np = lp_metric(&c1, &c2, spec)?.value;

    Ok(RepOutcome {
        estimates: [tp, mp, np],
        m: [m1, m2],
        fallbacks,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, sample_sd(values) / n.sqrt())
}

/// Runs the full Monte Carlo study described by `config`.
pub fn run_mc_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let times = config.times();
    let l0 = lp_metric(
        &ResponseCurve::ExpDecay(config.truth1),
        &ResponseCurve::ExpDecay(config.truth2),
        &config.metric_spec,
    )?
    .value;
    if l0 == 0.0 {
        return Err(Error::ZeroTruth);
    }

    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| run_repetition(config, &times, r))
        .collect();
    let failed_reps = outcomes.iter().filter(|o| o.is_err()).count();
    if failed_reps as f64 > 0.05 * config.reps as f64 {
        return Err(Error::TooManyFailures {
            failed: failed_reps,
            total: config.reps,
        });
    }
    let ok: Vec<RepOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();

    let estimators = Estimator::ALL
        .iter()
        .enumerate()
        .map(|(k, &estimator)| {
            let estimates: Vec<f64> = ok.iter().map(|o| o.estimates[k]).collect();
            let rb: Vec<f64> = estimates.iter().map(|&e| (e - l0) / l0).collect();
            let (mean_rb, mc_se) = mean_and_se(&rb);
            EstimatorSummary {
                estimator,
                estimates,
                relative_bias: rb,
                mean_rb,
                mc_se,
            }
        })
        .collect();

    let m1: Vec<usize> = ok.iter().map(|o| o.m[0]).collect();
    let m2: Vec<usize> = ok.iter().map(|o| o.m[1]).collect();
    let as_f64 = |v: &[usize]| v.iter().map(|&m| m as f64).collect::<Vec<_>>();
    let (mean_m_arm1, mc_se_m_arm1) = mean_and_se(&as_f64(&m1));
    let (mean_m_arm2, mc_se_m_arm2) = mean_and_se(&as_f64(&m2));

    Ok(StudyResult {
        config: config.clone(),
        n_points: times.len(),
        l0,
        estimators,
        selected_m_arm1: m1,
        selected_m_arm2: m2,
        mean_m_arm1,
        mc_se_m_arm1,
        mean_m_arm2,
        mc_se_m_arm2,
        selection_fallbacks: ok.iter().map(|o| o.fallbacks).sum(),
        failed_reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_truths() {
        let times: Vec<f64> = (0..10).map(f64::from).collect();
        let zero = simulate_trial("z", &ResponseCurve::constant(0.0).unwrap(), 50, &times, 1).unwrap();
        assert!(zero.counts().iter().all(|&y| y == 0));
        let one = simulate_trial("o", &ResponseCurve::constant(1.0).unwrap(), 50, &times, 1).unwrap();
        assert!(one.counts().iter().all(|&y| y == 50));
    }

    #[test]
    fn large_n_proportions_track_truth() {
        let curve = ResponseCurve::exp_decay(0.6, 0.2).unwrap();
        let times: Vec<f64> = (0..=30).map(f64::from).collect();
        let s = simulate_trial("x", &curve, 1_000_000, &times, 7).unwrap();
        for o in s.observations() {
            let p = o.y as f64 / 1e6;
            assert!((p - curve.eval(o.t).unwrap()).abs() < 0.002);
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let curve = ResponseCurve::exp_decay(0.9, 0.08).unwrap();
        let times: Vec<f64> = (0..16).map(|i| 2.0 * i as f64).collect();
        let a = simulate_trial("x", &curve, 100, &times, 3).unwrap();
        let b = simulate_trial("x", &curve, 100, &times, 3).unwrap();
        let c = simulate_trial("x", &curve, 100, &times, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn relative_bias_examples() {
        assert_eq!(relative_bias(0.890, 0.890).unwrap(), 0.0);
        assert!((relative_bias(1.068, 0.890).unwrap() - 0.2).abs() < 1e-12);
        assert!((relative_bias(0.801, 0.890).unwrap() + 0.1).abs() < 1e-12);
        assert_eq!(relative_bias(1.0, 0.0), Err(Error::ZeroTruth));
    }

    #[test]
    fn time_grids() {
        let mut c = StudyConfig::default();
        assert_eq!(c.times().len(), 16);
        c.spacing = 1.0;
        assert_eq!(c.times().len(), 31);
        c.spacing = 3.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_study_is_reproducible() {
        let config = StudyConfig {
            reps: 6,
            n: 100,
            seed: 5,
            ..StudyConfig::default()
        };
        let a = run_mc_study(&config).unwrap();
        let b = run_mc_study(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selected_m_arm1.len() + a.failed_reps, 6);
        assert!((a.l0 - 0.890).abs() < 2e-3);
        for s in &a.estimators {
            assert_eq!(s.estimates.len(), 6 - a.failed_reps);
        }
        for &m in a.selected_m_arm1.iter().chain(&a.selected_m_arm2) {
            assert!((2..=6).contains(&m));
        }
    }
}
