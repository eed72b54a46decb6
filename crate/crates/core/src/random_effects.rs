//! Random-coefficients exponential-decay model across studies:
//! `(ln alpha_i, ln beta_i) ~ N(mu, Sigma)` and `y_ij ~ Binomial(n_ij, alpha_i (1 - e^{-beta_i t_ij}))`.

use nalgebra::{Matrix5, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::fit::series::binomial_kernel;
use crate::fit::{fit_parametric_mle, MleOptions, ModelKind, TrialSeries};
use crate::fit::ks::std_normal_cdf;
use crate::optim::{nelder_mead, numerical_hessian, NelderMeadOptions};
use crate::quadrature::GaussHermite;
use crate::simlab::{replicate_rng, simulate_counts};

/// Agreement required between the 64- and 128-node marginal expectations.
pub const MARGINAL_CHECK_TOL: f64 = 1e-6;
/// Above this `P(alpha > 1)` the fit carries a warning.
pub const ALPHA_ABOVE_ONE_WARN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomCoefParams {
    pub mu_a: f64,
    pub mu_b: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    /// Covariance of `ln alpha` and `ln beta`.
    pub sigma_ab: f64,
}

impl RandomCoefParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_a, self.mu_b, self.sigma_a, self.sigma_b, self.sigma_ab];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("random-coefficient parameters must be finite".into()));
        }
        if self.sigma_a <= 0.0 || self.sigma_b <= 0.0 {
            return Err(Error::InvalidParameter("sigma_a and sigma_b must be positive".into()));
        }
        if self.sigma_ab.abs() >= self.sigma_a * self.sigma_b {
            return Err(Error::InvalidParameter(
                "covariance matrix is not positive definite (|sigma_ab| >= sigma_a sigma_b)".into(),
            ));
        }
        Ok(())
    }

    pub fn correlation(&self) -> f64 {
        self.sigma_ab / (self.sigma_a * self.sigma_b)
    }

    /// `P(alpha > 1) = Phi(mu_a / sigma_a)`.
    pub fn prob_alpha_above_one(&self) -> f64 {
        std_normal_cdf(self.mu_a / self.sigma_a)
    }

    /// `E[alpha] = exp(mu_a + sigma_a^2 / 2)`.
    pub fn mean_alpha(&self) -> f64 {
        (self.mu_a + 0.5 * self.sigma_a * self.sigma_a).exp()
    }

    fn to_unconstrained(self) -> [f64; 5] {
        [
            self.mu_a,
            self.mu_b,
            self.sigma_a.ln(),
            self.sigma_b.ln(),
            self.correlation().atanh(),
        ]
    }

    fn from_unconstrained(v: &[f64]) -> Self {
        let sigma_a = v[2].exp();
        let sigma_b = v[3].exp();
        Self {
            mu_a: v[0],
            mu_b: v[1],
            sigma_a,
            sigma_b,
            sigma_ab: v[4].tanh() * sigma_a * sigma_b,
        }
    }
}

/// `E[alpha (1 - e^{-beta t})]` under the lognormal random-coefficient law.
///
/// The inner one-dimensional expectation over `ln beta` is evaluated with 64 and
/// 128 Gauss–Hermite nodes; disagreement above [`MARGINAL_CHECK_TOL`] is an error.
pub fn marginal_theta_expectation(params: &RandomCoefParams, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let p = params;
    let c = p.sigma_ab / (p.sigma_b * p.sigma_b);
    let cond_var = p.sigma_a * p.sigma_a - c * p.sigma_ab;
    let log_prefactor = p.mu_a - c * p.mu_b + 0.5 * cond_var;
    // E[exp(ln_alpha - t beta)] = prefactor * E_B[exp(c B - t e^B)]
    let inner = |nodes: usize| {
        GaussHermite::new(nodes).normal_expectation(p.mu_b, p.sigma_b, |b| {
            (log_prefactor + c * b - t * b.exp()).exp()
        })
    };
    let coarse = inner(64);
    let fine = inner(128);
    let discrepancy = (coarse - fine).abs();
    if discrepancy > MARGINAL_CHECK_TOL || !fine.is_finite() {
        return Err(Error::IntegrationNonconvergence {
            nodes: 64,
            doubled: 128,
            discrepancy,
        });
    }
    let mean_alpha = p.mean_alpha();
    Ok((mean_alpha - fine).clamp(0.0, mean_alpha))
}

/// Draws per-study coefficients and binomial counts; rates are capped at 1.
pub fn simulate_multi_study(
    params: &RandomCoefParams,
    n: u32,
    times: &[f64],
    studies: usize,
    seed: u64,
) -> Result<Vec<TrialSeries>> {
    params.validate()?;
    let rho = params.correlation();
    (0..studies)
        .map(|i| {
            let mut rng = replicate_rng(seed, i as u64);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let la = params.mu_a + params.sigma_a * z1;
            let lb = params.mu_b + params.sigma_b * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
            let (alpha, beta) = (la.exp(), lb.exp());
            let rates: Vec<f64> = times
                .iter()
                .map(|&t| (alpha * -(-beta * t).exp_m1()).min(1.0))
                .collect();
            let counts = simulate_counts(&rates, n, &mut rng)?;
            TrialSeries::from_counts(format!("study-{}", i + 1), n, times, &counts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct RandomCoefOptions {
    /// Gauss–Hermite nodes per dimension of the tensor rule.
    pub nodes: usize,
    /// Number of times the per-study quadrature grids are re-centred at the current estimate.
    pub passes: usize,
    pub simplex: NelderMeadOptions,
}

impl Default for RandomCoefOptions {
    fn default() -> Self {
        Self {
            nodes: 20,
            passes: 2,
            simplex: NelderMeadOptions {
                f_tol: 1e-12,
                x_tol: 1e-7,
                max_iter: 5000,
                initial_step: 0.3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCoefFit {
    pub params: RandomCoefParams,
    /// Standard errors of `(mu_a, mu_b, sigma_a, sigma_b, sigma_ab)`.
    pub std_errors: Option<[f64; 5]>,
    pub loglik: f64,
    pub converged: bool,
    pub n_studies: usize,
    pub prob_alpha_above_one: f64,
    pub warnings: Vec<String>,
}

/// Quadrature grid for one study: nodes in `(ln alpha, ln beta)`, the
/// conditional log-likelihood there, and the log quadrature weight.
struct StudyGrid {
    points: Vec<[f64; 2]>,
    log_terms: Vec<f64>,
}

fn study_loglik(series: &TrialSeries, la: f64, lb: f64) -> f64 {
    let (alpha, beta) = (la.exp(), lb.exp());
    let n = series.n() as f64;
    series
        .observations()
        .iter()
        .map(|o| {
            let theta = (alpha * -(-beta * o.t).exp_m1()).min(1.0);
            binomial_kernel(o.y as f64, n, theta)
        })
        .sum()
}

fn log_normal2(z: [f64; 2], p: &RandomCoefParams) -> f64 {
    let rho = p.correlation();
    let u = (z[0] - p.mu_a) / p.sigma_a;
    let v = (z[1] - p.mu_b) / p.sigma_b;
    let one_m = 1.0 - rho * rho;
    -(2.0 * std::f64::consts::PI).ln() - p.sigma_a.ln() - p.sigma_b.ln() - 0.5 * one_m.ln()
        - (u * u - 2.0 * rho * u * v + v * v) / (2.0 * one_m)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Builds a tensor Gauss–Hermite grid centred at the mode of the study's
/// conditional likelihood times the `guide` population density, scaled by the
/// curvature there.
fn build_grid(series: &TrialSeries, guide: &RandomCoefParams, rule: &GaussHermite) -> StudyGrid {
    let log_post = |z: &[f64]| study_loglik(series, z[0], z[1]) + log_normal2([z[0], z[1]], guide);
    let opts = NelderMeadOptions {
        initial_step: 0.2,
        ..NelderMeadOptions::default()
    };
    let mode = nelder_mead(|z| -log_post(z), &[guide.mu_a, guide.mu_b], &opts);
    let center = [mode.x[0], mode.x[1]];

    let h = numerical_hessian(|z| -log_post(z), &center, &[1e-3, 1e-3]);
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    // Cholesky factor of the inverse curvature; fall back to the population spread.
    let cov = if h[0][0] > 0.0 && det > 0.0 && det.is_finite() {
        [h[1][1] / det, -h[0][1] / det, h[0][0] / det]
    } else {
        [guide.sigma_a.powi(2), guide.sigma_ab, guide.sigma_b.powi(2)]
    };
    // Slight inflation guards against a proposal narrower than the integrand.
    let inflate = 1.44;
    let l11 = (inflate * cov[0]).sqrt();
    let l21 = inflate * cov[1] / l11;
    let l22 = (inflate * cov[2] - l21 * l21).max(1e-12).sqrt();
    let log_jacobian = (2.0 * l11 * l22).ln();

    let log_choose: f64 = series
        .observations()
        .iter()
        .map(|o| ln_binomial(series.n() as u64, o.y as u64))
        .sum();
    let s2 = std::f64::consts::SQRT_2;
    let mut points = Vec::with_capacity(rule.len() * rule.len());
    let mut log_terms = Vec::with_capacity(points.capacity());
    for (&x1, &w1) in rule.nodes.iter().zip(&rule.weights) {
        for (&x2, &w2) in rule.nodes.iter().zip(&rule.weights) {
            let z = [
                center[0] + s2 * l11 * x1,
                center[1] + s2 * (l21 * x1 + l22 * x2),
            ];
            let ll = study_loglik(series, z[0], z[1]) + log_choose;
            points.push(z);
            log_terms.push(w1.ln() + w2.ln() + x1 * x1 + x2 * x2 + log_jacobian + ll);
        }
    }
    StudyGrid { points, log_terms }
}

fn marginal_loglik(grids: &[StudyGrid], p: &RandomCoefParams) -> f64 {
    if p.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    grids
        .iter()
        .map(|g| {
            log_sum_exp(
                g.points
                    .iter()
                    .zip(&g.log_terms)
                    .map(|(&z, &lt)| lt + log_normal2(z, p)),
            )
        })
        .sum()
}

fn starting_values(studies: &[TrialSeries]) -> RandomCoefParams {
    let opts = MleOptions {
        standard_errors: false,
        ..MleOptions::default()
    };
    let logs: Vec<(f64, f64)> = studies
        .iter()
        .filter_map(|s| fit_parametric_mle(s, ModelKind::ExpDecay, &opts).ok())
        .map(|f| (f.alpha.ln(), f.beta.ln()))
        .collect();
    if logs.len() < 2 {
        return RandomCoefParams {
            mu_a: 0.5f64.ln(),
            mu_b: 0.1f64.ln(),
            sigma_a: 0.5,
            sigma_b: 0.5,
            sigma_ab: 0.0,
        };
    }
    let k = logs.len() as f64;
    let ma = logs.iter().map(|l| l.0).sum::<f64>() / k;
    let mb = logs.iter().map(|l| l.1).sum::<f64>() / k;
    let var = |f: &dyn Fn(&(f64, f64)) -> f64| logs.iter().map(f).sum::<f64>() / (k - 1.0);
    let sa = var(&|l| (l.0 - ma).powi(2)).sqrt().max(0.05);
    let sb = var(&|l| (l.1 - mb).powi(2)).sqrt().max(0.05);
    let rho = (var(&|l| (l.0 - ma) * (l.1 - mb)) / (sa * sb)).clamp(-0.9, 0.9);
    RandomCoefParams {
        mu_a: ma,
        mu_b: mb,
        sigma_a: sa,
        sigma_b: sb,
        sigma_ab: rho * sa * sb,
    }
}

fn natural_from_vec(v: &[f64]) -> RandomCoefParams {
    RandomCoefParams {
        mu_a: v[0],
        mu_b: v[1],
        sigma_a: v[2],
        sigma_b: v[3],
        sigma_ab: v[4],
    }
}

fn standard_errors(grids: &[StudyGrid], p: &RandomCoefParams) -> Option<[f64; 5]> {
    let x = [p.mu_a, p.mu_b, p.sigma_a, p.sigma_b, p.sigma_ab];
    let steps: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let scale = if i == 4 { p.sigma_a * p.sigma_b } else { v.abs() };
            1e-4 * scale.max(1e-2)
        })
        .collect();
    let h = numerical_hessian(|v| -marginal_loglik(grids, &natural_from_vec(v)), &x, &steps);
    if h.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let m = Matrix5::from_fn(|i, j| h[i][j]);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let inv = m.try_inverse()?;
    let mut se = [0.0; 5];
    for (i, s) in se.iter_mut().enumerate() {
        *s = inv[(i, i)].sqrt();
    }
    Some(se)
}

/// Direct maximum-likelihood fit of the random-coefficients model.
///
/// The marginal likelihood of each study is integrated with a tensor
/// Gauss–Hermite rule on the `(ln alpha, ln beta)` scale. Grids are centred
/// per study, first at a guide built from per-study fixed-effect fits and then
/// at the current estimate.
pub fn fit_random_coef_mle(studies: &[TrialSeries], opts: &RandomCoefOptions) -> Result<RandomCoefFit> {
    if studies.len() < 2 {
        return Err(Error::Precondition(format!(
            "random-coefficients fit needs at least 2 studies, got {}",
            studies.len()
        )));
    }
    if opts.nodes < 16 {
        return Err(Error::InvalidParameter("at least 16 quadrature nodes per dimension are required".into()));
    }
    for s in studies {
        s.require_len(3)?;
    }
    let rule = GaussHermite::new(opts.nodes);
    let mut guide = starting_values(studies);
    let mut converged = false;
    let mut loglik = f64::NEG_INFINITY;
    let mut grids = Vec::new();
    for _ in 0..opts.passes.max(1) {
        grids = studies.iter().map(|s| build_grid(s, &guide, &rule)).collect::<Vec<_>>();
        let objective = |v: &[f64]| -marginal_loglik(&grids, &RandomCoefParams::from_unconstrained(v));
        let first = nelder_mead(objective, &guide.to_unconstrained(), &opts.simplex);
        // Restart from the optimum to shake off a collapsed simplex.
        let second = nelder_mead(objective, &first.x, &opts.simplex);
        let best = if second.value <= first.value { second } else { first };
        if !best.value.is_finite() {
            return Err(Error::NonConvergence("marginal likelihood is not finite".into()));
        }
        converged = best.converged;
        loglik = -best.value;
        guide = RandomCoefParams::from_unconstrained(&best.x);
    }
    let params = guide;
    let std_errors = standard_errors(&grids, &params);

    let prob_alpha_above_one = params.prob_alpha_above_one();
    let mut warnings = Vec::new();
    if prob_alpha_above_one > ALPHA_ABOVE_ONE_WARN {
        warnings.push(format!(
            "P(alpha > 1) = {prob_alpha_above_one:.3} under the fitted law; rates are capped at 1"
        ));
    }
    if std_errors.is_none() {
        warnings.push("observed information is not positive definite; standard errors unavailable".into());
    }
    if !converged {
        warnings.push("simplex did not meet its tolerance".into());
    }
    Ok(RandomCoefFit {
        params,
        std_errors,
        loglik,
        converged,
        n_studies: studies.len(),
        prob_alpha_above_one,
        warnings,
    })
}
