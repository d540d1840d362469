//! Joint log-posterior of the outcome and mediator models on the sampler's
//! unconstrained scale (residual SDs enter as log σ with Jacobian term).

use nalgebra::DVector;

use crate::data::{Dataset, DesignMatrices};
use crate::error::Result;
use crate::model::likelihood::eval_block;
use crate::model::params::{ParamLayout, ParameterVector};
use crate::model::prior::{CompiledPriors, PriorSpec};
use crate::model::spec::ModelSpec;
use crate::sampler::LogDensity;

/// Natural-scale log prior: MVN on both coefficient vectors, half-normal on
/// each residual SD present. Non-positive SDs give −∞.
pub fn log_prior(theta: &ParameterVector, priors: &PriorSpec) -> Result<f64> {
    let c = priors.compile()?;
    Ok(log_prior_compiled(theta, &c))
}

pub(crate) fn log_prior_compiled(theta: &ParameterVector, c: &CompiledPriors) -> f64 {
    let mut lp = c.alpha.log_density(&theta.alpha) + c.beta.log_density(&theta.beta);
    if let Some(s) = theta.sigma_y {
        lp += c.sd_y.log_density(s);
    }
    if let Some(s) = theta.sigma_m {
        lp += c.sd_m.log_density(s);
    }
    lp
}

/// Residual SDs held at known values instead of being sampled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FixedSigmas {
    pub y: Option<f64>,
    pub m: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    pub(crate) data: &'a Dataset,
    pub(crate) design: &'a DesignMatrices,
    pub(crate) spec: ModelSpec,
    pub(crate) priors: CompiledPriors,
    pub(crate) layout: ParamLayout,
    pub(crate) fixed: FixedSigmas,
    names: Vec<String>,
}

impl<'a> Posterior<'a> {
    pub fn new(
        data: &'a Dataset,
        design: &'a DesignMatrices,
        spec: ModelSpec,
        priors: &PriorSpec,
    ) -> Result<Self> {
        Self::with_fixed_sigmas(data, design, spec, priors, FixedSigmas::default())
    }

    pub fn with_fixed_sigmas(
        data: &'a Dataset,
        design: &'a DesignMatrices,
        spec: ModelSpec,
        priors: &PriorSpec,
        fixed: FixedSigmas,
    ) -> Result<Self> {
        Self::build(data, design, spec, priors, fixed, false)
    }

    pub(crate) fn build(
        data: &'a Dataset,
        design: &'a DesignMatrices,
        spec: ModelSpec,
        priors: &PriorSpec,
        fixed: FixedSigmas,
        gamma: bool,
    ) -> Result<Self> {
        let p = design.p();
        priors.validate(p)?;
        data.check_binary(spec.outcome_binary(), spec.mediator_binary())?;
        let layout = ParamLayout::new(p, &spec, fixed.y.is_none(), fixed.m.is_none(), gamma);
        let names = layout.names(design);
        Ok(Self {
            data,
            design,
            spec,
            priors: priors.compile()?,
            layout,
            fixed,
            names,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn fixed_sigmas(&self) -> FixedSigmas {
        self.fixed
    }

    pub fn unpack(&self, constrained: &[f64]) -> ParameterVector {
        self.layout
            .unpack(constrained, &self.spec, self.fixed.y, self.fixed.m)
    }

    pub(crate) fn sigma_y(&self, x: &[f64]) -> f64 {
        self.layout
            .log_sigma_y
            .map(|i| x[i].exp())
            .or(self.fixed.y)
            .unwrap_or(1.0)
    }

    pub(crate) fn sigma_m(&self, x: &[f64]) -> f64 {
        self.layout
            .log_sigma_m
            .map(|i| x[i].exp())
            .or(self.fixed.m)
            .unwrap_or(1.0)
    }

    /// Prior terms (with log-σ Jacobians) for the base parameters.
    pub(crate) fn prior_terms(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let mut lp = self
            .priors
            .alpha
            .log_density_acc(&x[l.alpha_range()], &mut grad[l.alpha_range()]);
        lp += self
            .priors
            .beta
            .log_density_acc(&x[l.beta_range()], &mut grad[l.beta_range()]);
        for (idx, hn) in [
            (l.log_sigma_y, self.priors.sd_y),
            (l.log_sigma_m, self.priors.sd_m),
        ] {
            if let Some(i) = idx {
                let s = x[i].exp();
                lp += hn.log_density(s) + x[i];
                grad[i] += hn.dlog_dsigma(s) * s + 1.0;
            }
        }
        lp
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let l = &self.layout;
        let mut lp = self.prior_terms(x, grad);

        let ev_y = eval_block(
            self.spec.dist_y,
            self.data.outcome(),
            &self.design.x_y,
            &x[l.alpha_range()],
            self.sigma_y(x),
        );
        let ga: DVector<f64> = self.design.x_y.tr_mul(&ev_y.deta);
        for (g, v) in grad[l.alpha_range()].iter_mut().zip(ga.iter()) {
            *g += v;
        }
        if let Some(i) = l.log_sigma_y {
            grad[i] += ev_y.dlog_sigma;
        }

        let ev_m = eval_block(
            self.spec.dist_m,
            self.data.mediator(),
            &self.design.x_m,
            &x[l.beta_range()],
            self.sigma_m(x),
        );
        let gb: DVector<f64> = self.design.x_m.tr_mul(&ev_m.deta);
        for (g, v) in grad[l.beta_range()].iter_mut().zip(gb.iter()) {
            *g += v;
        }
        if let Some(i) = l.log_sigma_m {
            grad[i] += ev_m.dlog_sigma;
        }

        lp += ev_y.value + ev_m.value;
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, grad)
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn constrain(&self, x: &[f64], out: &mut Vec<f64>) {
        self.layout.constrain(x, out);
    }
}

/// Log-posterior and its gradient on the unconstrained scale at `theta`.
/// Returns `(−∞, gradient)` when the density is not finite.
pub fn log_posterior_and_gradient(
    theta: &ParameterVector,
    design: &DesignMatrices,
    data: &Dataset,
    spec: &ModelSpec,
    priors: &PriorSpec,
) -> Result<(f64, Vec<f64>)> {
    theta.check(design, spec)?;
    let post = Posterior::new(data, design, *spec, priors)?;
    if theta.sigma_y.is_some_and(|s| s <= 0.0) || theta.sigma_m.is_some_and(|s| s <= 0.0) {
        return Ok((f64::NEG_INFINITY, vec![0.0; post.dim()]));
    }
    let x = post.layout.pack(theta, None);
    let mut grad = vec![0.0; x.len()];
    let lp = post.eval(&x, &mut grad);
    Ok((lp, grad))
}
