//! Transformation discriminant analysis for combining diagnostic biomarkers.
//!
//! The central object is a multivariate Gaussian-copula transformation model:
//! each biomarker is mapped by a learned monotone function onto the probit
//! scale, where the joint distribution per disease class is multivariate
//! normal with a correlation matrix parameterized through standardized
//! Cholesky factors of the precision matrix. The fitted model yields the
//! log-likelihood-ratio composite score, whose class-conditional law is a
//! generalized chi-square distribution, giving model-based ROC curves and
//! AUCs without resampling.
//!
//! Modules:
//! - [`bernstein`], [`corr`]: monotone Bernstein transformations and the
//!   correlation parameterization.
//! - [`gchisq`]: CDF/quantile of weighted sums of noncentral chi-squares.
//! - [`model`]: the six model variants, likelihood and maximum-likelihood fit.
//! - [`score`], [`roc`]: composite scoring and ROC/AUC machinery.
//! - [`inference`]: parametric-bootstrap confidence intervals.
//! - [`assess`]: Rosenblatt-transform goodness-of-fit diagnostics.
//! - [`simgen`]: scenario generators, baseline classifiers and evaluation
//!   harnesses.
//! - [`subset_opt`]: resource-constrained biomarker selection.

pub mod assess;
pub mod bernstein;
pub mod corr;
pub mod data;
pub mod error;
pub mod gchisq;
pub mod inference;
pub mod model;
pub mod norm;
pub mod optim;
pub mod quad;
pub mod roc;
pub mod score;
pub mod simgen;
pub mod subset_opt;

// TEMP pub use assess::{rosenblatt, RosenblattReport};
pub use bernstein::{
    bernstein_basis, inverse_reparam, monotone_reparam, transform_eval, BernsteinBasis,
    MonotoneCoeffs,
};
pub use corr::{corr_from_lambda, lambda_from_corr, CorrelationParam};
pub use data::CaseControlData;
pub use error::TdaError;
pub use gchisq::{gchisq_cdf, gchisq_quantile, GChiSqParams};
// TEMP pub use inference::{parametric_bootstrap, simulate_from_model, BootStatistic, BootstrapResult};
pub use model::{
    fit, log_likelihood, marginal_cdf, CorrelationScope, FitOptions, FittedTda, MarginalFamily,
    ModelSpec,
};
// TEMP pub use roc::{empirical_auc, empirical_roc, model_auc, model_roc, RocCurve};
// TEMP pub use score::{log_lr, quadratic_form, score_distribution, score_law, LogLrForm, ScoreLaw};
// TEMP pub use simgen::{generate, holdout_eval, true_optimal_auc, HoldoutResult, Scenario};
// TEMP pub use subset_opt::{optimize_subset, ResourceProblem};
