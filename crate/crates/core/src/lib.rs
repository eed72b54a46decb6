//! Functional comparison of response-rate curves from binomial time series.
//!
//! Two treatment arms are summarized by monotone response-rate curves
//! (parametric or Bernstein), compared through the `L_p` distance between
//! them on a time window, and the distance is given bootstrap uncertainty.

pub mod error;
pub mod fit;
pub mod inference;
pub mod metric;
pub mod models;
pub mod optim;
pub mod quadrature;
pub mod random_effects;
pub mod simlab;

pub use error::{Error, Result};
pub use fit::{
    fit_bernstein_wls, fit_parametric_mle, select_degree_ks, DegreeSelection, MleOptions, ModelKind,
    NonparametricFit, Observation, ParametricFit, TrialSeries,
};
pub use inference::{
    nonparametric_bootstrap, parametric_bootstrap, BootstrapResult, NonparametricBootstrapOptions,
};
pub use metric::{lp_metric, noninferiority_decision, MetricResult, MetricSpec, NonInferiorityDecision, NormOrder};
pub use models::{BernsteinCurve, ConstraintMode, ExpDecayParams, LogLogisticParams, ResponseCurve};
pub use random_effects::{
    fit_random_coef_mle, marginal_theta_expectation, RandomCoefFit, RandomCoefOptions, RandomCoefParams,
};
pub use simlab::{run_mc_study, simulate_trial, StudyConfig, StudyResult};

pub use nalgebra;
