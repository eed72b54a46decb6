//! Shape-constrained Bernstein fits by weighted least squares.
//!
//! With the normal approximation to the binomial, the Anscombe-corrected
//! proportions `p_i` are regressed on the Beta-CDF basis rows `F_M(x_i)` with
//! weights `n / (p_i (1 - p_i))`. The monotonicity and range conditions are
//! linear in the increments `gamma`, so each fit is a small convex QP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ks::ks_pvalue;
use super::qp::{kkt_residuals, solve_qp, KktResiduals};
use super::series::{anscombe_proportions, TrialSeries};
use crate::error::{Error, Result};
use crate::models::{basis_row, BernsteinCurve, ConstraintMode};

/// Fitted values are clipped to `[FIT_CLIP, 1 - FIT_CLIP]` when standardizing residuals.
pub const FIT_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonparametricFit {
    pub curve: BernsteinCurve,
    pub constraint_mode: ConstraintMode,
    /// Weighted residual sum of squares at the solution.
    pub objective: f64,
    /// KS p-value of the standardized residuals against N(0, 1).
    pub ks_pvalue: f64,
    pub fitted: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
    pub kkt: KktResiduals,
}

/// Constraint rows `R gamma >= b` for degree `m` under `mode`.
pub fn constraint_system(m: usize, mode: ConstraintMode) -> (DMatrix<f64>, DVector<f64>) {
    let free = mode.free_increments(m);
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let partial = |k: usize, sign: f64| -> Vec<f64> {
        (0..m).map(|i| if i <= k { sign } else { 0.0 }).collect()
    };
    for k in 0..free {
        rows.push((partial(k, 1.0), 0.0));
        rows.push((partial(k, -1.0), -1.0));
    }
    for k in free..m {
        let mut row = vec![0.0; m];
        row[k] = 1.0;
        rows.push((row, 0.0));
    }
    // eta_M <= 1
    rows.push((vec![-1.0; m], -1.0));

    let r = DMatrix::from_fn(rows.len(), m, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|row| row.1));
    (r, b)
}

/// `sqrt(n) (p - fit) / sqrt(fit (1 - fit))` with the fitted value clipped away from 0 and 1.
pub fn standardized_residuals(n: u32, observed: &[f64], fitted: &[f64]) -> Vec<f64> {
    let root_n = (n as f64).sqrt();
    observed
        .iter()
        .zip(fitted)
        .map(|(&p, &f)| {
            let c = f.clamp(FIT_CLIP, 1.0 - FIT_CLIP);
            root_n * (p - f) / (c * (1.0 - c)).sqrt()
        })
        .collect()
}

/// Default fitting window: `[0, max observed time]`.
pub fn default_window(series: &TrialSeries) -> Result<(f64, f64)> {
    let t_max = series
        .max_time()
        .ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    if t_max <= 0.0 {
        return Err(Error::InsufficientData(
            "all observations are at t = 0; no fitting window".into(),
        ));
    }
    Ok((0.0, t_max))
}

/// Fits a degree-`m` Bernstein curve to `series` under `mode`.
pub fn fit_bernstein_wls(
    series: &TrialSeries,
    m: usize,
    mode: ConstraintMode,
    t_min: f64,
    t_max: f64,
) -> Result<NonparametricFit> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("Bernstein degree must be >= 2, got {m}")));
    }
    series.require_len(3)?;
    if !(t_min >= 0.0 && t_min < t_max && t_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid window [{t_min}, {t_max}]")));
    }
    let augmented;
    let series = if mode == ConstraintMode::OriginAugmented {
        if t_min > 0.0 {
            return Err(Error::InvalidParameter(
                "origin augmentation requires t_min = 0".into(),
            ));
        }
        augmented = series.with_origin();
        &augmented
    } else {
        series
    };
    let times = series.times();
    let first = times[0];
    let last = *times.last().expect("non-empty");
    if !(t_min < first || t_min == 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_min = {t_min} must precede the first observation ({first}) or be 0"
        )));
    }
    if t_max < last {
        return Err(Error::InvalidParameter(format!(
            "t_max = {t_max} is before the last observation ({last})"
        )));
    }

    let p = anscombe_proportions(series);
    let n = series.n() as f64;
    let weights: Vec<f64> = p.iter().map(|&v| n / (v * (1.0 - v))).collect();
    let width = t_max - t_min;
    let design: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| basis_row((t - t_min) / width, m))
        .collect();

    // Normalizing by the total weight keeps the QP well scaled for large n.
    let w_total: f64 = weights.iter().sum();
    let mut h = DMatrix::zeros(m, m);
    let mut f = DVector::zeros(m);
    for ((row, &w), &y) in design.iter().zip(&weights).zip(&p) {
        let w = w / w_total;
        for i in 0..m {
            f[i] += 2.0 * w * row[i] * y;
            for j in 0..m {
                h[(i, j)] += 2.0 * w * row[i] * row[j];
            }
        }
    }
    let (r, b) = constraint_system(m, mode);
    let sol = solve_qp(&h, &f, &r, &b)?;
    let kkt = kkt_residuals(&h, &f, &r, &b, &sol);

    let mut gamma: Vec<f64> = sol.x.iter().copied().collect();
    // Snap round-off-level violations onto the feasible set.
    let free = mode.free_increments(m);
    for g in gamma.iter_mut().skip(free) {
        if *g < 0.0 && *g > -1e-10 {
            *g = 0.0;
        }
    }
    let total: f64 = gamma.iter().sum();
    if total > 1.0 && total < 1.0 + 1e-10 {
        let last = gamma.len() - 1;
        gamma[last] -= total - 1.0;
    }
    let curve = BernsteinCurve::new(gamma, t_min, t_max, mode)?;

    let fitted: Vec<f64> = times.iter().map(|&t| curve.eval(t)).collect::<Result<_>>()?;
    let objective = weights
        .iter()
        .zip(&p)
        .zip(&fitted)
        .map(|((w, y), f)| w * (y - f).powi(2))
        .sum();
    let standardized = standardized_residuals(series.n(), &p, &fitted);
    let ks = ks_pvalue(&standardized)?;
    Ok(NonparametricFit {
        curve,
        constraint_mode: mode,
        objective,
        ks_pvalue: ks,
        fitted,
        standardized_residuals: standardized,
        kkt,
    })
}
