//! Estimation of response curves from observed binomial series.

pub mod bernstein;
pub mod ks;
pub mod mle;
pub mod qp;
pub mod select;
pub mod series;

pub use bernstein::{constraint_system, default_window, fit_bernstein_wls, standardized_residuals, NonparametricFit};
pub use ks::{kolmogorov_survival, ks_pvalue, ks_statistic};
pub use mle::{fit_parametric_mle, MleOptions, ModelKind, ParametricFit};
pub use qp::{kkt_residuals, qp_objective, solve_qp, KktResiduals, QpSolution};
pub use select::{
    choose_degree, max_candidate_degree, select_degree_ks, DegreeCandidate, DegreeSelection,
    DEFAULT_KS_THRESHOLD,
};
pub use series::{anscombe_proportions, loglik, Observation, TrialSeries};
