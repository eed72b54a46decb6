//! Response-rate curve families.
//!
//! Three families are supported: the exponential-decay curve
//! `alpha * (1 - exp(-beta t))`, the log-logistic curve
//! `1 / (1 + exp(-alpha - beta ln t))`, and a three-piece monotone Bernstein
//! curve written in increment form, `theta(t) = F_M(x)' gamma` with
//! `x = (t - t_min) / (t_max - t_min)` and `F_M(x; l)` the Beta(l, M-l+1) CDF.
//!
//! All curves map `[0, inf)` into `[0, 1]`. Evaluation tolerates round-off
//! excursions of up to [`CLAMP_TOLERANCE`] outside the unit interval and
//! reports anything larger as an invariant violation.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Round-off allowance when clamping evaluations into `[0, 1]`.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// Feasibility tolerance used when validating Bernstein coefficients.
pub const COEF_TOLERANCE: f64 = 1e-8;

fn clamp_unit(value: f64) -> Result<f64> {
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&value) {
        return Err(Error::InvariantViolation(format!(
            "response rate {value} outside [0, 1]"
        )));
    }
    Ok(value.clamp(0.0, 1.0))
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Exponential-decay parameters: asymptote `alpha` in (0, 1], rate `beta` > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpDecayParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ExpDecayParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let params = Self { alpha, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exp-decay alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exp-decay beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Log-logistic parameters: log-time location `alpha`, slope `beta` >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogisticParams {
    pub alpha: f64,
    pub beta: f64,
}

impl LogLogisticParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let params = Self { alpha, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "log-logistic alpha must be finite, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "log-logistic beta must be >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Which shape constraints a Bernstein coefficient vector obeys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// All increments non-negative, total at most one.
    Strict,
    /// The first `floor(M/3)` increments may be negative; partial sums stay in [0, 1].
    Relaxed,
    /// Strict constraints, fitted with a pseudo-observation `(t = 0, y = 0)` appended.
    OriginAugmented,
}

impl ConstraintMode {
    /// Number of leading increments whose sign is unconstrained.
    pub fn free_increments(self, degree: usize) -> usize {
        match self {
            ConstraintMode::Relaxed => degree / 3,
            ConstraintMode::Strict | ConstraintMode::OriginAugmented => 0,
        }
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ConstraintMode::Strict),
            "relaxed" => Ok(ConstraintMode::Relaxed),
            "origin" | "origin-augmented" => Ok(ConstraintMode::OriginAugmented),
            other => Err(Error::InvalidParameter(format!(
                "unknown constraint mode `{other}`"
            ))),
        }
    }
}

/// Three-piece Bernstein curve in increment (`gamma`) form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinCurve {
    gamma: Vec<f64>,
    t_min: f64,
    t_max: f64,
    mode: ConstraintMode,
}

impl BernsteinCurve {
    pub fn new(gamma: Vec<f64>, t_min: f64, t_max: f64, mode: ConstraintMode) -> Result<Self> {
        let curve = Self {
            gamma,
            t_min,
            t_max,
            mode,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Builds a curve from cumulative coefficients `eta_1..eta_M`.
    pub fn from_eta(eta: &[f64], t_min: f64, t_max: f64, mode: ConstraintMode) -> Result<Self> {
        Self::new(gamma_from_eta(eta), t_min, t_max, mode)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.gamma.len();
        if m == 0 {
            return Err(Error::InvalidParameter("Bernstein degree must be >= 1".into()));
        }
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min >= 0.0) {
            return Err(Error::InvalidParameter("time window must be finite and >= 0".into()));
        }
        if self.t_min >= self.t_max {
            return Err(Error::InvalidParameter(format!(
                "t_min ({}) must be below t_max ({})",
                self.t_min, self.t_max
            )));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Bernstein coefficient".into()));
        }
        let free = self.mode.free_increments(m);
        for (k, &g) in self.gamma.iter().enumerate().skip(free) {
            if g < -COEF_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "increment gamma_{} = {g} is negative",
                    k + 1
                )));
            }
        }
        for (k, eta) in eta_from_gamma(&self.gamma).into_iter().enumerate() {
            if !(-COEF_TOLERANCE..=1.0 + COEF_TOLERANCE).contains(&eta) {
                return Err(Error::InvalidParameter(format!(
                    "partial sum eta_{} = {eta} outside [0, 1]",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn eta(&self) -> Vec<f64> {
        eta_from_gamma(&self.gamma)
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    /// Position of `t` inside the fitting window, in [0, 1].
    pub fn window_fraction(&self, t: f64) -> f64 {
        ((t - self.t_min) / (self.t_max - self.t_min)).clamp(0.0, 1.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let value = if t <= self.t_min {
            0.0
        } else if t < self.t_max {
            let x = self.window_fraction(t);
            let m = self.degree();
            self.gamma
                .iter()
                .enumerate()
                .map(|(i, g)| g * basis_unchecked(x, i + 1, m))
                .sum()
        } else {
            let eta_m: f64 = self.gamma.iter().sum();
            let s = t - self.t_max;
            eta_m + (1.0 - eta_m) * s / (s + 1.0)
        };
        clamp_unit(value)
    }
}

/// A response-rate function on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ResponseCurve {
    ExpDecay(ExpDecayParams),
    LogLogistic(LogLogisticParams),
    Bernstein(BernsteinCurve),
    /// Flat rate, used for degenerate simulation truths.
    Constant { rate: f64 },
}

impl ResponseCurve {
    pub fn exp_decay(alpha: f64, beta: f64) -> Result<Self> {
        ExpDecayParams::new(alpha, beta).map(ResponseCurve::ExpDecay)
    }

    pub fn log_logistic(alpha: f64, beta: f64) -> Result<Self> {
        LogLogisticParams::new(alpha, beta).map(ResponseCurve::LogLogistic)
    }

    pub fn constant(rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!("constant rate {rate} outside [0, 1]")));
        }
        Ok(ResponseCurve::Constant { rate })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ResponseCurve::ExpDecay(p) => p.validate(),
            ResponseCurve::LogLogistic(p) => p.validate(),
            ResponseCurve::Bernstein(c) => c.validate(),
            ResponseCurve::Constant { rate } => {
                if (0.0..=1.0).contains(rate) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("constant rate {rate} outside [0, 1]")))
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            ResponseCurve::ExpDecay(p) => exp_decay_eval(p, t),
            ResponseCurve::LogLogistic(p) => log_logistic_eval(p, t),
            ResponseCurve::Bernstein(c) => c.eval(t),
            ResponseCurve::Constant { rate } => {
                check_time(t)?;
                Ok(*rate)
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ResponseCurve::ExpDecay(_) => "exp-decay",
            ResponseCurve::LogLogistic(_) => "log-logistic",
            ResponseCurve::Bernstein(_) => "bernstein",
            ResponseCurve::Constant { .. } => "constant",
        }
    }
}

pub fn exp_decay_eval(params: &ExpDecayParams, t: f64) -> Result<f64> {
    params.validate()?;
    check_time(t)?;
    // -expm1 keeps precision near t = 0.
    clamp_unit(-params.alpha * (-params.beta * t).exp_m1())
}

pub fn log_logistic_eval(params: &LogLogisticParams, t: f64) -> Result<f64> {
    params.validate()?;
    check_time(t)?;
    if params.beta == 0.0 {
        return clamp_unit(logistic(params.alpha));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    clamp_unit(logistic(params.alpha + params.beta * t.ln()))
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `F_M(x; l)`: the CDF of Beta(l, M - l + 1) at `x`, for `1 <= l <= M`.
pub fn bernstein_basis(x: f64, l: usize, m: usize) -> Result<f64> {
    if l == 0 || l > m {
        return Err(Error::IndexOutOfRange { index: l, degree: m });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("basis argument {x} outside [0, 1]")));
    }
    Ok(basis_unchecked(x, l, m))
}

fn basis_unchecked(x: f64, l: usize, m: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(l as f64, (m - l + 1) as f64, x)
    }
}

/// Row of regressors `(F_M(x;1), ..., F_M(x;M))`.
pub fn basis_row(x: f64, m: usize) -> Vec<f64> {
    let x = x.clamp(0.0, 1.0);
    (1..=m).map(|l| basis_unchecked(x, l, m)).collect()
}

pub fn bernstein_eval(curve: &BernsteinCurve, t: f64) -> Result<f64> {
    curve.eval(t)
}

/// Cumulative sums `eta_k = gamma_1 + ... + gamma_k`.
pub fn eta_from_gamma(gamma: &[f64]) -> Vec<f64> {
    gamma
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .collect()
}

/// Inverse of [`eta_from_gamma`], with `eta_0 = 0`.
pub fn gamma_from_eta(eta: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    eta.iter()
        .map(|&e| {
            let g = e - prev;
            prev = e;
            g
        })
        .collect()
}

/// `theta_2(t) - theta_1(t)`.
pub fn delta_eval(curve1: &ResponseCurve, curve2: &ResponseCurve, t: f64) -> Result<f64> {
    Ok(curve2.eval(t)? - curve1.eval(t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    // Standard Bernstein basis polynomial C(M,k) x^k (1-x)^(M-k).
    fn bernstein_poly(x: f64, k: usize, m: usize) -> f64 {
        binom(m, k) * x.powi(k as i32) * (1.0 - x).powi((m - k) as i32)
    }

    #[test]
    fn exp_decay_examples() {
        let p = ExpDecayParams::new(0.6, 0.2).unwrap();
        assert_eq!(exp_decay_eval(&p, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(exp_decay_eval(&p, 1e4).unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(exp_decay_eval(&p, 5.0).unwrap(), 0.379_272_335_3, epsilon = 1e-9);
        assert!(ExpDecayParams::new(1.2, 0.2).is_err());
        assert!(ExpDecayParams::new(0.5, 0.0).is_err());
        assert!(exp_decay_eval(&p, -1.0).is_err());
    }

    #[test]
    fn log_logistic_examples() {
        let p = LogLogisticParams::new(-0.5, 0.3).unwrap();
        assert_abs_diff_eq!(log_logistic_eval(&p, 1.0).unwrap(), 0.377_540_668_8, epsilon = 1e-9);
        let q = LogLogisticParams::new(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(log_logistic_eval(&q, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(log_logistic_eval(&q, 0.0).unwrap(), 0.0);
        let flat = LogLogisticParams::new(1.3, 0.0).unwrap();
        let c = 1.0 / (1.0 + (-1.3f64).exp());
        for t in [0.0, 0.5, 7.0, 1e6] {
            assert_abs_diff_eq!(log_logistic_eval(&flat, t).unwrap(), c, epsilon = 1e-15);
        }
        assert!(LogLogisticParams::new(0.0, -0.1).is_err());
    }

    #[test]
    fn basis_examples() {
        assert_eq!(bernstein_basis(1.0, 3, 7).unwrap(), 1.0);
        assert_eq!(bernstein_basis(0.0, 3, 7).unwrap(), 0.0);
        assert_abs_diff_eq!(bernstein_basis(0.5, 2, 2).unwrap(), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(bernstein_basis(0.5, 1, 2).unwrap(), 0.75, epsilon = 1e-14);
        assert_eq!(
            bernstein_basis(0.5, 0, 2),
            Err(Error::IndexOutOfRange { index: 0, degree: 2 })
        );
        assert!(bernstein_basis(0.5, 3, 2).is_err());
    }

    #[test]
    fn bernstein_eval_examples() {
        let c = BernsteinCurve::new(vec![0.0, 1.0], 0.0, 10.0, ConstraintMode::Strict).unwrap();
        assert_abs_diff_eq!(c.eval(10.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.eval(5.0).unwrap(), 0.25, epsilon = 1e-14);
        assert_eq!(c.eval(0.0).unwrap(), 0.0);

        let shifted =
            BernsteinCurve::new(vec![0.2, 0.3, 0.1], 2.0, 12.0, ConstraintMode::Strict).unwrap();
        assert_eq!(shifted.eval(2.0).unwrap(), 0.0);
        assert_eq!(shifted.eval(1.0).unwrap(), 0.0);
        // tail: eta_M + (1 - eta_M) s / (s + 1)
        assert_abs_diff_eq!(shifted.eval(13.0).unwrap(), 0.6 + 0.4 * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn bernstein_rejects_invalid_coefficients() {
        assert!(BernsteinCurve::new(vec![0.5, -0.1], 0.0, 1.0, ConstraintMode::Strict).is_err());
        assert!(BernsteinCurve::new(vec![0.7, 0.4], 0.0, 1.0, ConstraintMode::Strict).is_err());
        assert!(BernsteinCurve::new(vec![0.5], 3.0, 3.0, ConstraintMode::Strict).is_err());
        assert!(BernsteinCurve::new(vec![], 0.0, 1.0, ConstraintMode::Strict).is_err());
        // M = 6: the first two increments are free in relaxed mode.
        let relaxed = vec![0.5, -0.2, 0.1, 0.1, 0.0, 0.2];
        assert!(BernsteinCurve::new(relaxed.clone(), 0.0, 1.0, ConstraintMode::Relaxed).is_ok());
        assert!(BernsteinCurve::new(relaxed, 0.0, 1.0, ConstraintMode::Strict).is_err());
        // partial sum below zero
        let below = vec![-0.1, 0.2, 0.1, 0.1, 0.0, 0.2];
        assert!(BernsteinCurve::new(below, 0.0, 1.0, ConstraintMode::Relaxed).is_err());
        // constrained increment negative
        let tail_neg = vec![0.5, 0.0, -0.1, 0.1, 0.0, 0.2];
        assert!(BernsteinCurve::new(tail_neg, 0.0, 1.0, ConstraintMode::Relaxed).is_err());
    }

    #[test]
    fn eta_examples() {
        let eta = eta_from_gamma(&[0.1, 0.2, 0.3]);
        assert_abs_diff_eq!(eta[0], 0.1);
        assert_abs_diff_eq!(eta[1], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(eta[2], 0.6, epsilon = 1e-15);
        assert_eq!(eta_from_gamma(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(eta_from_gamma(&[1.0]), vec![1.0]);
    }

    #[test]
    fn delta_examples() {
        let c1 = ResponseCurve::exp_decay(0.6, 0.2).unwrap();
        let c2 = ResponseCurve::exp_decay(0.9, 0.08).unwrap();
        assert_eq!(delta_eval(&c1, &c1, 3.3).unwrap(), 0.0);
        let at20 = 0.9 * (1.0 - (-1.6f64).exp()) - 0.6 * (1.0 - (-4.0f64).exp());
        assert_abs_diff_eq!(delta_eval(&c1, &c2, 20.0).unwrap(), at20, epsilon = 1e-15);
        assert_abs_diff_eq!(delta_eval(&c1, &c2, 20.0).unwrap(), 0.129, epsilon = 5e-4);
        assert_abs_diff_eq!(delta_eval(&c1, &c2, 5.0).unwrap(), -0.083, epsilon = 5e-4);
    }

    #[test]
    fn bernstein_monotone_on_grid() {
        let c = BernsteinCurve::new(
            vec![0.05, 0.3, 0.0, 0.2, 0.1, 0.15],
            1.0,
            21.0,
            ConstraintMode::Strict,
        )
        .unwrap();
        let hi = c.t_max() + 10.0;
        let mut prev = -1.0;
        for i in 0..1000 {
            let t = c.t_min() + (hi - c.t_min()) * i as f64 / 999.0;
            let v = c.eval(t).unwrap();
            assert!(v >= prev - 1e-14, "decrease at t = {t}");
            prev = v;
        }
    }

    #[test]
    fn uniform_approximation_improves_with_degree() {
        let truth = ExpDecayParams::new(0.6, 0.2).unwrap();
        let (t_min, t_max) = (0.0, 30.0);
        let sup_error = |m: usize| {
            let eta: Vec<f64> = (1..=m)
                .map(|k| exp_decay_eval(&truth, t_min + k as f64 * (t_max - t_min) / m as f64).unwrap())
                .collect();
            let c = BernsteinCurve::from_eta(&eta, t_min, t_max, ConstraintMode::Strict).unwrap();
            (0..=600)
                .map(|i| {
                    let t = t_min + (t_max - t_min) * i as f64 / 600.0;
                    (c.eval(t).unwrap() - exp_decay_eval(&truth, t).unwrap()).abs()
                })
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&m| sup_error(m)).collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    fn strict_gamma(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, m + 1).prop_map(|raw| {
            let total: f64 = raw.iter().sum();
            raw[..raw.len() - 1].iter().map(|v| v / total).collect()
        })
    }

    proptest! {
        #[test]
        fn linear_form_matches_bernstein_sum(
            (m, gamma) in (1usize..24).prop_flat_map(|m| (Just(m), strict_gamma(m))),
            x in 0.0f64..=1.0,
        ) {
            let eta = eta_from_gamma(&gamma);
            let poly: f64 = (1..=m).map(|k| eta[k - 1] * bernstein_poly(x, k, m)).sum();
            let linear: f64 = basis_row(x, m).iter().zip(&gamma).map(|(f, g)| f * g).sum();
            prop_assert!((poly - linear).abs() < 1e-12, "poly {poly} linear {linear}");
        }

        #[test]
        fn eta_gamma_round_trip(gamma in prop::collection::vec(-1.0f64..1.0, 1..30)) {
            let back = gamma_from_eta(&eta_from_gamma(&gamma));
            for (a, b) in gamma.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn parametric_curves_stay_in_unit_interval_and_increase(
            a in 0.01f64..=1.0, b in 0.001f64..5.0,
            la in -10.0f64..10.0, lb in 0.001f64..5.0,
            t1 in 0.0f64..100.0, dt in 1e-3f64..50.0,
        ) {
            let e = ResponseCurve::exp_decay(a, b).unwrap();
            let l = ResponseCurve::log_logistic(la, lb).unwrap();
            for c in [&e, &l] {
                let v1 = c.eval(t1).unwrap();
                let v2 = c.eval(t1 + dt).unwrap();
                prop_assert!((0.0..=1.0).contains(&v1) && (0.0..=1.0).contains(&v2));
                prop_assert!(v1 <= v2);
            }
            // strictly increasing wherever the curve has not saturated numerically
            let ev1 = e.eval(t1).unwrap();
            let ev2 = e.eval(t1 + dt).unwrap();
            if ev2 < a * (1.0 - 1e-12) {
                prop_assert!(ev1 < ev2);
            }
        }

        #[test]
        fn bernstein_continuous_at_window_edges(
            gamma in strict_gamma(7),
            t_min in 0.0f64..5.0, width in 1.0f64..40.0,
        ) {
            let c = BernsteinCurve::new(gamma, t_min, t_min + width, ConstraintMode::Strict).unwrap();
            let eps = 1e-9;
            let at_max = (c.eval(c.t_max() - eps).unwrap() - c.eval(c.t_max() + eps).unwrap()).abs();
            let at_min = (c.eval(c.t_min() + eps).unwrap() - c.eval(c.t_min()).unwrap()).abs();
            prop_assert!(at_max < 1e-6 && at_min < 1e-6);
        }
    }
}
