//! Data-driven choice of the Bernstein degree.
//!
//! Each candidate degree `m = 2..=ceil(N / ln N)` is fitted and scored by the
//! KS p-value of its standardized residuals; the smallest degree whose
//! p-value reaches the threshold wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bernstein::{fit_bernstein_wls, NonparametricFit};
use super::series::TrialSeries;
use crate::error::{Error, Result};
use crate::models::ConstraintMode;

/// Default KS threshold for degree selection.
pub const DEFAULT_KS_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCandidate {
    pub m: usize,
    pub ks_pvalue: Option<f64>,
    /// Why the candidate could not be fitted, if it failed.
    pub failure: Option<String>,
    #[serde(skip)]
    pub fit: Option<NonparametricFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSelection {
    pub candidates: Vec<DegreeCandidate>,
    pub chosen_m: Option<usize>,
    pub alpha_threshold: f64,
}

impl DegreeSelection {
    /// Candidate with the highest p-value, preferring the larger degree on ties.
    pub fn best_pvalue_degree(&self) -> Option<usize> {
        self.candidates
            .iter()
            .filter_map(|c| c.ks_pvalue.map(|p| (c.m, p)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(m, _)| m)
    }

    pub fn fit_for(&self, m: usize) -> Option<&NonparametricFit> {
        self.candidates
            .iter()
            .find(|c| c.m == m)
            .and_then(|c| c.fit.as_ref())
    }

    /// Selected fit, or the best-p-value fit when no degree reaches the threshold.
    /// The flag is true when the fallback was used.
    pub fn chosen_or_fallback(&self) -> Option<(&NonparametricFit, bool)> {
        match self.chosen_m {
            Some(m) => self.fit_for(m).map(|f| (f, false)),
            None => self
                .best_pvalue_degree()
                .and_then(|m| self.fit_for(m))
                .map(|f| (f, true)),
        }
    }
}

/// Largest candidate degree, `ceil(N / ln N)`.
pub fn max_candidate_degree(n_points: usize) -> usize {
    let n = n_points as f64;
    (n / n.ln()).ceil() as usize
}

/// Smallest degree whose p-value reaches `threshold`.
pub fn choose_degree(candidates: &[(usize, Option<f64>)], threshold: f64) -> Option<usize> {
    candidates
        .iter()
        .filter(|(_, p)| p.is_some_and(|p| p >= threshold))
        .map(|(m, _)| *m)
        .min()
}

pub fn select_degree_ks(
    series: &TrialSeries,
    alpha_threshold: f64,
    mode: ConstraintMode,
    t_min: f64,
    t_max: f64,
) -> Result<DegreeSelection> {
    if !(alpha_threshold > 0.0 && alpha_threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "KS threshold must lie in (0, 1), got {alpha_threshold}"
        )));
    }
    series.require_len(4)?;
    let m_max = max_candidate_degree(series.len());
    let candidates: Vec<DegreeCandidate> = (2..=m_max)
        .into_par_iter()
        .map(|m| match fit_bernstein_wls(series, m, mode, t_min, t_max) {
            Ok(fit) => DegreeCandidate {
                m,
                ks_pvalue: Some(fit.ks_pvalue),
                failure: None,
                fit: Some(fit),
            },
            Err(e) => DegreeCandidate {
                m,
                ks_pvalue: None,
                failure: Some(e.to_string()),
                fit: None,
            },
        })
        .collect();
    let table: Vec<(usize, Option<f64>)> = candidates.iter().map(|c| (c.m, c.ks_pvalue)).collect();
    Ok(DegreeSelection {
        chosen_m: choose_degree(&table, alpha_threshold),
        candidates,
        alpha_threshold,
    })
}
