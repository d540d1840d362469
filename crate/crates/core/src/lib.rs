//! Bayesian causal mediation analysis.
//!
//! Outcome and mediator regressions are fitted by MCMC; natural direct and
//! indirect, controlled direct and total effects are then computed for every
//! posterior draw by Monte Carlo standardization over a bootstrap of the
//! confounder distribution. A latent binary confounder extension supports
//! sensitivity analysis for unmeasured confounding, and two independent
//! reference estimators (closed-form product of coefficients and a
//! quasi-Bayesian simulation) are provided for validation.
//!
//! Identification relies on the usual sequential ignorability conditions:
//! no unmeasured exposure–outcome, mediator–outcome or exposure–mediator
//! confounding given the measured confounders, and no mediator–outcome
//! confounder affected by the exposure.

pub mod data;
pub mod error;
pub mod gformula;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod sensitivity;

pub use error::{Error, ErrorCategory, Result};
