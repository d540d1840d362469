//! Parametric outcome and mediator models, priors and log-posteriors.

pub mod likelihood;
pub mod params;
pub mod posterior;
pub mod prior;
pub mod spec;

pub use likelihood::{log_likelihood_mediator, log_likelihood_outcome, sigmoid, softplus};
pub use params::{ParamLayout, ParameterVector, GAMMA_NAMES};
pub use posterior::{log_posterior_and_gradient, log_prior, FixedSigmas, Posterior};
pub use prior::{default_priors, HalfNormal, Mvn, PriorOverrides, PriorSpec, ScaleMatrix};
pub use spec::{Distribution, Link, ModelSpec};
