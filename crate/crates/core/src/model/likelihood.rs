//! Bernoulli-logit and Gaussian-identity log-likelihoods.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, DesignMatrices};
use crate::error::{Error, Result};
use crate::model::params::ParameterVector;
use crate::model::spec::{Distribution, ModelSpec};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// log(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse logit.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn bernoulli_logit_lp(y: f64, eta: f64) -> f64 {
    y * eta - softplus(eta)
}

/// Log-likelihood of one regression block plus its derivatives.
pub(crate) struct BlockEval {
    pub value: f64,
    /// d value / d eta_i.
    pub deta: DVector<f64>,
    /// d value / d log sigma (continuous models only).
    pub dlog_sigma: f64,
}

pub(crate) fn eval_block(
    dist: Distribution,
    response: &[f64],
    x: &DMatrix<f64>,
    coef: &[f64],
    sigma: f64,
) -> BlockEval {
    let eta = x * DVector::from_column_slice(coef);
    let mut deta = DVector::zeros(response.len());
    let mut value = 0.0;
    let mut dlog_sigma = 0.0;
    match dist {
        Distribution::Binary => {
            for (i, (&y, &e)) in response.iter().zip(eta.iter()).enumerate() {
                value += bernoulli_logit_lp(y, e);
                deta[i] = y - sigmoid(e);
            }
        }
        Distribution::Continuous => {
            let inv_var = 1.0 / (sigma * sigma);
            let ln_sigma = sigma.ln();
            for (i, (&y, &e)) in response.iter().zip(eta.iter()).enumerate() {
                let r = y - e;
                let r2 = r * r * inv_var;
                value += -LN_SQRT_2PI - ln_sigma - 0.5 * r2;
                deta[i] = r * inv_var;
                dlog_sigma += r2 - 1.0;
            }
        }
    }
    BlockEval {
        value,
        deta,
        dlog_sigma,
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!(
            "{what} log-likelihood is not finite"
        )))
    }
}

/// Outcome-model log-likelihood with linear predictor `X_y · alpha`.
pub fn log_likelihood_outcome(
    theta: &ParameterVector,
    design: &DesignMatrices,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<f64> {
    theta.check(design, spec)?;
    let sigma = theta.sigma_y.unwrap_or(1.0);
    if sigma <= 0.0 {
        return Err(Error::Numeric("sigma_y must be positive".into()));
    }
    let ev = eval_block(
        spec.dist_y,
        data.outcome(),
        &design.x_y,
        &theta.alpha,
        sigma,
    );
    finite(ev.value, "outcome")
}

/// Mediator-model log-likelihood with linear predictor `X_m · beta`.
pub fn log_likelihood_mediator(
    theta: &ParameterVector,
    design: &DesignMatrices,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<f64> {
    theta.check(design, spec)?;
    let sigma = theta.sigma_m.unwrap_or(1.0);
    if sigma <= 0.0 {
        return Err(Error::Numeric("sigma_m must be positive".into()));
    }
    let ev = eval_block(
        spec.dist_m,
        data.mediator(),
        &design.x_m,
        &theta.beta,
        sigma,
    );
    finite(ev.value, "mediator")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, ColumnRoles};
    use std::f64::consts::PI;

    fn dataset(y: Vec<f64>, a: Vec<f64>, m: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(
            ColumnRoles::new("y", "a", "m", &[]),
            y,
            a,
            m,
            DMatrix::zeros(n, 0),
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_give_half_probabilities() {
        let d = dataset(
            vec![1.0, 0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0, 1.0],
        );
        let x = build_design(&d);
        let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Binary);
        let theta = ParameterVector::zeros(2, &spec);
        let expect = 5.0 * 0.5_f64.ln();
        assert!((log_likelihood_outcome(&theta, &x, &d, &spec).unwrap() - expect).abs() < 1e-14);
        assert!((log_likelihood_mediator(&theta, &x, &d, &spec).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn saturated_logit_does_not_overflow() {
        assert!((bernoulli_logit_lp(1.0, 50.0)).abs() < 1e-15);
        assert!((bernoulli_logit_lp(0.0, -50.0)).abs() < 1e-15);
        assert!((bernoulli_logit_lp(0.0, 800.0) + 800.0).abs() < 1e-9);
        assert!(softplus(1000.0).is_finite());
    }

    #[test]
    fn standard_normal_mediator_at_zero() {
        let d = dataset(vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]);
        let x = build_design(&d);
        let spec = ModelSpec::canonical(Distribution::Continuous, Distribution::Continuous);
        let theta = ParameterVector::zeros(2, &spec);
        let expect = 2.0 * (-0.5 * (2.0 * PI).ln());
        assert!((log_likelihood_mediator(&theta, &x, &d, &spec).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        for x in [-700.0, -30.0, -1.0, 0.0, 2.0, 40.0, 700.0] {
            let s = sigmoid(x);
            assert!((0.0..=1.0).contains(&s));
            assert!((s + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
