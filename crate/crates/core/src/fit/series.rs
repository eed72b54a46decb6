use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ResponseCurve;

/// A single time point: responders `y` among the arm's `n` subjects at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub y: u32,
}

/// Responder counts over time for one treatment arm of fixed size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSeries {
    arm_id: String,
    n: u32,
    observations: Vec<Observation>,
}

impl TrialSeries {
    pub fn new(arm_id: impl Into<String>, n: u32, observations: Vec<Observation>) -> Result<Self> {
        let arm_id = arm_id.into();
        if n == 0 {
            return Err(Error::InvalidSeries(format!("arm `{arm_id}`: n must be positive")));
        }
        for (i, obs) in observations.iter().enumerate() {
            if !obs.t.is_finite() || obs.t < 0.0 {
                return Err(Error::InvalidSeries(format!(
                    "arm `{arm_id}`: time {} at position {i} must be finite and >= 0",
                    obs.t
                )));
            }
            if obs.y > n {
                return Err(Error::InvalidSeries(format!(
                    "arm `{arm_id}`: {} responders exceed arm size {n} at t = {}",
                    obs.y, obs.t
                )));
            }
            if i > 0 && obs.t <= observations[i - 1].t {
                return Err(Error::InvalidSeries(format!(
                    "arm `{arm_id}`: times must be strictly increasing (t = {} after {})",
                    obs.t,
                    observations[i - 1].t
                )));
            }
        }
        Ok(Self {
            arm_id,
            n,
            observations,
        })
    }

    /// Convenience constructor from parallel `times` and `counts` slices.
    pub fn from_counts(arm_id: impl Into<String>, n: u32, times: &[f64], counts: &[u32]) -> Result<Self> {
        if times.len() != counts.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} counts",
                times.len(),
                counts.len()
            )));
        }
        let obs = times
            .iter()
            .zip(counts)
            .map(|(&t, &y)| Observation { t, y })
            .collect();
        Self::new(arm_id, n, obs)
    }

    pub fn arm_id(&self) -> &str {
        &self.arm_id
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.t).collect()
    }

    pub fn counts(&self) -> Vec<u32> {
        self.observations.iter().map(|o| o.y).collect()
    }

    pub fn max_time(&self) -> Option<f64> {
        self.observations.last().map(|o| o.t)
    }

    /// Same arm with counts replaced, keeping times and `n`.
    pub fn with_counts(&self, counts: &[u32]) -> Result<Self> {
        Self::from_counts(self.arm_id.clone(), self.n, &self.times(), counts)
    }

    /// Prepends a `(t = 0, y = 0)` observation unless one at `t = 0` already exists.
    pub fn with_origin(&self) -> Self {
        let mut obs = self.observations.clone();
        if obs.first().is_none_or(|o| o.t > 0.0) {
            obs.insert(0, Observation { t: 0.0, y: 0 });
        }
        Self {
            arm_id: self.arm_id.clone(),
            n: self.n,
            observations: obs,
        }
    }

    pub(crate) fn require_len(&self, min: usize) -> Result<()> {
        if self.len() < min {
            return Err(Error::InsufficientData(format!(
                "arm `{}` has {} observations, need at least {min}",
                self.arm_id,
                self.len()
            )));
        }
        Ok(())
    }
}

/// Binomial log-likelihood kernel `sum y log(theta) + (n - y) log(1 - theta)`.
///
/// Returns `-inf` when the curve assigns zero probability to an observed count.
pub fn loglik(series: &TrialSeries, curve: &ResponseCurve) -> Result<f64> {
    let n = series.n() as f64;
    let mut total = 0.0;
    for obs in series.observations() {
        let theta = curve.eval(obs.t)?;
        total += binomial_kernel(obs.y as f64, n, theta);
    }
    Ok(total)
}

#[inline]
pub(crate) fn binomial_kernel(y: f64, n: f64, theta: f64) -> f64 {
    let mut term = 0.0;
    if y > 0.0 {
        if theta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        term += y * theta.ln();
    }
    if y < n {
        if theta >= 1.0 {
            return f64::NEG_INFINITY;
        }
        term += (n - y) * (-theta).ln_1p();
    }
    term
}

/// Empirical proportions `y / n`, with the Anscombe correction
/// `(y + 3/8) / (n + 3/4)` at `y = 0` and its mirror image at `y = n`.
pub fn anscombe_proportions(series: &TrialSeries) -> Vec<f64> {
    let n = series.n() as f64;
    series
        .observations()
        .iter()
        .map(|o| anscombe_rate(o.y, n))
        .collect()
}

pub(crate) fn anscombe_rate(y: u32, n: f64) -> f64 {
    let corrected = 0.375 / (n + 0.75);
    if y == 0 {
        corrected
    } else if y as f64 >= n {
        1.0 - corrected
    } else {
        y as f64 / n
    }
}
