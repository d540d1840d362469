//! Likelihood with a binary latent confounder summed out per subject.

use nalgebra::DVector;

use crate::data::{Dataset, DesignMatrices};
use crate::error::{Error, Result};
use crate::model::likelihood::LN_SQRT_2PI;
use crate::model::{sigmoid, softplus, Distribution, ModelSpec, ParameterVector};

/// Log-density, d/d eta and d/d log sigma of one observation.
#[inline]
fn row_terms(dist: Distribution, y: f64, eta: f64, sigma: f64) -> (f64, f64, f64) {
    match dist {
        Distribution::Binary => (y * eta - softplus(eta), y - sigmoid(eta), 0.0),
        Distribution::Continuous => {
            let r = y - eta;
            let inv_var = 1.0 / (sigma * sigma);
            let r2 = r * r * inv_var;
            (-LN_SQRT_2PI - sigma.ln() - 0.5 * r2, r * inv_var, r2 - 1.0)
        }
    }
}

#[inline]
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Marginal log-likelihood and its derivatives with respect to the linear
/// predictors, log SDs and bias parameters.
pub(crate) struct MarginalEval {
    pub value: f64,
    pub deta_y: DVector<f64>,
    pub deta_m: DVector<f64>,
    pub dlog_sigma_y: f64,
    pub dlog_sigma_m: f64,
    /// d/d (gamma_0, gamma_A, beta_U, alpha_U).
    pub dgamma: [f64; 4],
    /// Posterior P(U_i = 1 | data, parameters).
    pub weights: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn marginal_eval(
    spec: &ModelSpec,
    data: &Dataset,
    eta_y: &DVector<f64>,
    eta_m: &DVector<f64>,
    sigma_y: f64,
    sigma_m: f64,
    gamma: [f64; 4],
) -> MarginalEval {
    let [g0, ga, beta_u, alpha_u] = gamma;
    let n = data.n();
    let mut out = MarginalEval {
        value: 0.0,
        deta_y: DVector::zeros(n),
        deta_m: DVector::zeros(n),
        dlog_sigma_y: 0.0,
        dlog_sigma_m: 0.0,
        dgamma: [0.0; 4],
        weights: vec![0.0; n],
    };
    let (y, m, a) = (data.outcome(), data.mediator(), data.treat());
    for i in 0..n {
        let lin = g0 + ga * a[i];
        let (ly0, dy0, sy0) = row_terms(spec.dist_y, y[i], eta_y[i], sigma_y);
        let (ly1, dy1, sy1) = row_terms(spec.dist_y, y[i], eta_y[i] + alpha_u, sigma_y);
        let (lm0, dm0, sm0) = row_terms(spec.dist_m, m[i], eta_m[i], sigma_m);
        let (lm1, dm1, sm1) = row_terms(spec.dist_m, m[i], eta_m[i] + beta_u, sigma_m);
        let t0 = -softplus(lin) + ly0 + lm0;
        let t1 = -softplus(-lin) + ly1 + lm1;
        let li = log_sum_exp(t0, t1);
        let w = (t1 - li).exp();
        let pi = sigmoid(lin);
        out.value += li;
        out.weights[i] = w;
        out.deta_y[i] = (1.0 - w) * dy0 + w * dy1;
        out.deta_m[i] = (1.0 - w) * dm0 + w * dm1;
        out.dlog_sigma_y += (1.0 - w) * sy0 + w * sy1;
        out.dlog_sigma_m += (1.0 - w) * sm0 + w * sm1;
        out.dgamma[0] += w - pi;
        out.dgamma[1] += (w - pi) * a[i];
        out.dgamma[2] += w * dm1;
        out.dgamma[3] += w * dy1;
    }
    out
}

fn linear_predictors(
    theta: &ParameterVector,
    design: &DesignMatrices,
) -> (DVector<f64>, DVector<f64>) {
    (
        &design.x_y * DVector::from_column_slice(&theta.alpha),
        &design.x_m * DVector::from_column_slice(&theta.beta),
    )
}

/// Observed-data log-likelihood of the extended model, with each subject's
/// latent confounder summed over {0, 1}.
pub fn marginal_log_likelihood(
    theta: &ParameterVector,
    gamma: [f64; 4],
    design: &DesignMatrices,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<f64> {
    theta.check(design, spec)?;
    let (ey, em) = linear_predictors(theta, design);
    let v = marginal_eval(
        spec,
        data,
        &ey,
        &em,
        theta.sigma_y.unwrap_or(1.0),
        theta.sigma_m.unwrap_or(1.0),
        gamma,
    )
    .value;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(
            "extended log-likelihood is not finite".into(),
        ))
    }
}

/// Per-subject posterior probabilities that the latent confounder is 1.
pub fn membership_probabilities(
    theta: &ParameterVector,
    gamma: [f64; 4],
    design: &DesignMatrices,
    data: &Dataset,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    theta.check(design, spec)?;
    let (ey, em) = linear_predictors(theta, design);
    Ok(marginal_eval(
        spec,
        data,
        &ey,
        &em,
        theta.sigma_y.unwrap_or(1.0),
        theta.sigma_m.unwrap_or(1.0),
        gamma,
    )
    .weights)
}
