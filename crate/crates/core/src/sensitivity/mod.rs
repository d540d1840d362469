//! Sensitivity analysis for unmeasured confounding.
//!
//! A binary latent confounder `U` enters both models:
//!
//! * `logit P(U = 1 | A) = γ₀ + γ_A·A`
//! * mediator predictor gains `β_U·U`, outcome predictor gains `α_U·U`
//!
//! The bias parameters `γ = (γ₀, γ_A, β_U, α_U)` get an informative prior
//! whose width encodes how large a departure from no unmeasured confounding
//! is entertained. `U` is summed out per subject so the sampler sees a smooth
//! density. A zero prior scale collapses the model to the base model exactly.

mod marginal;
mod sweep;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ConfounderResample, Dataset, DesignMatrices};
use crate::error::{Error, Result};
use crate::gformula::{
    draw_inputs, effect_draw_with, DrawDecoder, EffectDraw, EffectOptions, LatentShifts,
    Standardization,
};
use crate::model::{
    sigmoid, FixedSigmas, ModelSpec, Mvn, ParameterVector, Posterior, PriorSpec, ScaleMatrix,
};
use crate::rng::{stream_rng, Stream};
use crate::sampler::{LogDensity, PosteriorDraws};

pub use marginal::{marginal_log_likelihood, membership_probabilities};
pub use sweep::{delta_sweep, SweepResult, SweepRow};

/// Shape of the bias-parameter prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasPriorShape {
    /// `MVN(location_gamma, scale_gamma)`.
    #[default]
    Normal,
    /// Independent `Uniform(μ_k − δ_k, μ_k + δ_k)` with `δ_k` the diagonal
    /// of `scale_gamma`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySpec {
    #[serde(default = "zero_location")]
    pub location_gamma: Vec<f64>,
    /// 4×4 matrix, or a scalar `δ` meaning `δ·I₄`.
    #[serde(default = "unit_scale")]
    pub scale_gamma: ScaleMatrix,
    #[serde(default)]
    pub delta_grid: Vec<f64>,
    #[serde(default)]
    pub prior_shape: BiasPriorShape,
    /// Draw γ from its prior for each posterior draw of the base model
    /// instead of updating it with the likelihood.
    #[serde(default)]
    pub prior_only: bool,
}

fn zero_location() -> Vec<f64> {
    vec![0.0; 4]
}

fn unit_scale() -> ScaleMatrix {
    ScaleMatrix::Scalar(1.0)
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        Self {
            location_gamma: zero_location(),
            scale_gamma: unit_scale(),
            delta_grid: Vec::new(),
            prior_shape: BiasPriorShape::Normal,
            prior_only: false,
        }
    }
}

impl SensitivitySpec {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            scale_gamma: ScaleMatrix::Scalar(delta),
            ..Self::default()
        }
    }

    /// Copy with `scale_gamma = δ·I₄`.
    pub fn at_delta(&self, delta: f64) -> Self {
        Self {
            scale_gamma: ScaleMatrix::Scalar(delta),
            ..self.clone()
        }
    }

    pub fn scale_matrix(&self) -> Result<DMatrix<f64>> {
        self.scale_gamma
            .to_matrix(4)
            .map_err(|e| Error::Config(format!("scale_gamma: {e}")))
    }

    /// True when the prior is a point mass (all-zero scale).
    pub fn is_degenerate(&self) -> Result<bool> {
        Ok(self.scale_matrix()?.iter().all(|v| *v == 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.location_gamma.len() != 4 || self.location_gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "location_gamma must hold 4 finite values".into(),
            ));
        }
        if let Some(d) = self
            .delta_grid
            .iter()
            .find(|d| !(d.is_finite() && **d >= 0.0))
        {
            return Err(Error::Config(format!(
                "delta grid values must be finite and nonnegative, got {d}"
            )));
        }
        self.compile().map(|_| ())
    }

    pub(crate) fn compile(&self) -> Result<Option<BiasPrior>> {
        if self.location_gamma.len() != 4 {
            return Err(Error::Config("location_gamma must have length 4".into()));
        }
        let s = self.scale_matrix()?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("scale_gamma has non-finite entries".into()));
        }
        if s.iter().all(|v| *v == 0.0) {
            return Ok(None);
        }
        let loc = [
            self.location_gamma[0],
            self.location_gamma[1],
            self.location_gamma[2],
            self.location_gamma[3],
        ];
        match self.prior_shape {
            BiasPriorShape::Normal => Ok(Some(BiasPrior::Normal(
                Mvn::new(loc.to_vec(), s)
                    .map_err(|e| Error::Config(format!("scale_gamma: {e}")))?,
            ))),
            BiasPriorShape::Uniform => {
                let half = [s[(0, 0)], s[(1, 1)], s[(2, 2)], s[(3, 3)]];
                let off_diag = (0..4).any(|i| (0..4).any(|j| i != j && s[(i, j)] != 0.0));
                if off_diag || half.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::Config(
                        "a uniform bias prior needs a diagonal scale_gamma with positive entries"
                            .into(),
                    ));
                }
                Ok(Some(BiasPrior::Uniform { center: loc, half }))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum BiasPrior {
    Normal(Mvn),
    Uniform { center: [f64; 4], half: [f64; 4] },
}

impl BiasPrior {
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        match self {
            BiasPrior::Normal(mvn) => {
                let z = DVector::from_fn(4, |_, _| StandardNormal.sample(rng));
                let g = mvn.mean() + mvn.chol_lower() * z;
                [g[0], g[1], g[2], g[3]]
            }
            BiasPrior::Uniform { center, half } => {
                std::array::from_fn(|k| center[k] + half[k] * (2.0 * rng.random::<f64>() - 1.0))
            }
        }
    }
}

/// Draws γ from the prior of `sens` (the location when the prior is degenerate).
pub fn draw_bias_from_prior<R: Rng + ?Sized>(
    sens: &SensitivitySpec,
    rng: &mut R,
) -> Result<[f64; 4]> {
    Ok(match sens.compile()? {
        Some(p) => p.sample(rng),
        None => std::array::from_fn(|k| sens.location_gamma[k]),
    })
}

/// Joint posterior of the base parameters and γ with `U` marginalized.
#[derive(Debug, Clone)]
pub struct SensitivityPosterior<'a> {
    base: Posterior<'a>,
    prior: BiasPrior,
}

/// `log(1 − tanh² v)` without overflow.
fn log_sech2(v: f64) -> f64 {
    let a = v.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

impl SensitivityPosterior<'_> {
    fn gamma_slot(&self) -> usize {
        self.base
            .layout
            .gamma
            .expect("extended layout carries gamma")
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let b = &self.base;
        let l = &b.layout;
        let g = self.gamma_slot();
        let mut lp = b.prior_terms(x, grad);
        let mut gamma = [0.0; 4];
        let mut chain = [1.0; 4];
        match &self.prior {
            BiasPrior::Normal(mvn) => {
                lp += mvn.log_density_acc(&x[g..g + 4], &mut grad[g..g + 4]);
                gamma.copy_from_slice(&x[g..g + 4]);
            }
            BiasPrior::Uniform { center, half } => {
                for k in 0..4 {
                    let v = x[g + k];
                    let t = v.tanh();
                    gamma[k] = center[k] + half[k] * t;
                    chain[k] = half[k] * (1.0 - t * t);
                    lp += log_sech2(v) - (2.0f64).ln();
                    grad[g + k] += -2.0 * t;
                }
            }
        }
        let eta_y = &b.design.x_y * DVector::from_column_slice(&x[l.alpha_range()]);
        let eta_m = &b.design.x_m * DVector::from_column_slice(&x[l.beta_range()]);
        let me = marginal::marginal_eval(
            &b.spec,
            b.data,
            &eta_y,
            &eta_m,
            b.sigma_y(x),
            b.sigma_m(x),
            gamma,
        );
        let ga = b.design.x_y.tr_mul(&me.deta_y);
        for (gr, v) in grad[l.alpha_range()].iter_mut().zip(ga.iter()) {
            *gr += v;
        }
        let gb = b.design.x_m.tr_mul(&me.deta_m);
        for (gr, v) in grad[l.beta_range()].iter_mut().zip(gb.iter()) {
            *gr += v;
        }
        if let Some(i) = l.log_sigma_y {
            grad[i] += me.dlog_sigma_y;
        }
        if let Some(i) = l.log_sigma_m {
            grad[i] += me.dlog_sigma_m;
        }
        for k in 0..4 {
            grad[g + k] += me.dgamma[k] * chain[k];
        }
        lp += me.value;
        if lp.is_finite() && grad.iter().all(|v| v.is_finite()) {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }

    fn constrain(&self, x: &[f64], out: &mut Vec<f64>) {
        self.base.layout.constrain(x, out);
        if let BiasPrior::Uniform { center, half } = &self.prior {
            let g = self.gamma_slot();
            for k in 0..4 {
                out[g + k] = center[k] + half[k] * x[g + k].tanh();
            }
        }
    }
}

/// The extended model, or the base model when the bias prior is a point
/// mass at zero.
#[derive(Debug, Clone)]
pub enum SensitivityModel<'a> {
    Reduced(Posterior<'a>),
    Extended(SensitivityPosterior<'a>),
}

impl SensitivityModel<'_> {
    pub fn is_reduced(&self) -> bool {
        matches!(self, SensitivityModel::Reduced(_))
    }

    fn base(&self) -> &Posterior<'_> {
        match self {
            SensitivityModel::Reduced(p) => p,
            SensitivityModel::Extended(s) => &s.base,
        }
    }

    pub fn decoder(&self) -> DrawDecoder {
        let b = self.base();
        DrawDecoder {
            layout: b.layout.clone(),
            spec: b.spec,
            fixed_sigma_y: b.fixed.y,
            fixed_sigma_m: b.fixed.m,
        }
    }
}

impl LogDensity for SensitivityModel<'_> {
    fn dim(&self) -> usize {
        self.base().layout.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            SensitivityModel::Reduced(p) => p.log_density_grad(x, grad),
            SensitivityModel::Extended(s) => s.eval(x, grad),
        }
    }

    fn param_names(&self) -> Vec<String> {
        self.base().param_names()
    }

    fn constrain(&self, x: &[f64], out: &mut Vec<f64>) {
        match self {
            SensitivityModel::Reduced(p) => p.constrain(x, out),
            SensitivityModel::Extended(s) => s.constrain(x, out),
        }
    }
}

/// Builds the sampling target for one bias prior. A zero `scale_gamma` gives
/// [`SensitivityModel::Reduced`], which is the base posterior itself.
pub fn build_sensitivity_model<'a>(
    data: &'a Dataset,
    design: &'a DesignMatrices,
    spec: ModelSpec,
    priors: &PriorSpec,
    sens: &SensitivitySpec,
    fixed: FixedSigmas,
) -> Result<SensitivityModel<'a>> {
    sens.validate()?;
    match sens.compile()? {
        None => Ok(SensitivityModel::Reduced(Posterior::with_fixed_sigmas(
            data, design, spec, priors, fixed,
        )?)),
        Some(prior) => Ok(SensitivityModel::Extended(SensitivityPosterior {
            base: Posterior::build(data, design, spec, priors, fixed, true)?,
            prior,
        })),
    }
}

/// Effects for one draw of (θ, γ). Each counterfactual arm `a` gets its own
/// latent draw `U(a) ~ Bernoulli(logit⁻¹(γ₀ + γ_A·a))`, taken from
/// `latent_rng`; `M(a')` carries `β_U·U(a')` and `Y(a, ·)` carries `α_U·U(a)`.
/// All other randomness comes from `rng` in the same order as
/// [`crate::gformula::effect_draw`], so γ = 0 reproduces it exactly.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_effect_draw<R: Rng + ?Sized, L: Rng + ?Sized>(
    theta: &ParameterVector,
    gamma: [f64; 4],
    resample: &ConfounderResample,
    data: &Dataset,
    spec: &ModelSpec,
    rng: &mut R,
    latent_rng: &mut L,
    opts: &EffectOptions,
) -> EffectDraw {
    let z = resample.resolve(data);
    let n = z.nrows();
    let [g0, ga, beta_u, alpha_u] = gamma;
    let mut u = [vec![0.0; n], vec![0.0; n]];
    for (a, ua) in u.iter_mut().enumerate() {
        let pi = sigmoid(g0 + ga * a as f64);
        for v in ua.iter_mut() {
            *v = (latent_rng.random::<f64>() < pi) as u8 as f64;
        }
    }
    let shifts = LatentShifts {
        mediator: [
            u[0].iter().map(|v| beta_u * v).collect(),
            u[1].iter().map(|v| beta_u * v).collect(),
        ],
        outcome: [
            u[0].iter().map(|v| alpha_u * v).collect(),
            u[1].iter().map(|v| alpha_u * v).collect(),
        ],
    };
    effect_draw_with(theta, &z, spec, rng, opts, Some(&shifts))
}

/// Sensitivity effect draws for every posterior draw, with `gammas[b]`
/// paired to draw `b`.
pub fn compute_sensitivity_effects(
    draws: &PosteriorDraws,
    decoder: &DrawDecoder,
    gammas: &[[f64; 4]],
    data: &Dataset,
    seed: u64,
    opts: &EffectOptions,
) -> Result<Vec<EffectDraw>> {
    if gammas.len() != draws.n_draws() {
        return Err(Error::Dimension(format!(
            "{} bias draws for {} posterior draws",
            gammas.len(),
            draws.n_draws()
        )));
    }
    Ok((0..draws.n_draws())
        .into_par_iter()
        .map(|b| {
            let theta = decoder.theta(draws.flat(b));
            let (resample, mut rng) = draw_inputs(data, seed, b, Standardization::Bootstrap);
            let mut latent = stream_rng(seed, Stream::Latent, b as u64);
            sensitivity_effect_draw(
                &theta,
                gammas[b],
                &resample,
                data,
                &decoder.spec,
                &mut rng,
                &mut latent,
                opts,
            )
        })
        .collect())
}

/// Posterior draws of the extended model with their bias parameters.
/// Latent memberships are derived on demand.
#[derive(Debug, Clone)]
pub struct SensitivityDraws {
    pub draws: PosteriorDraws,
    pub decoder: DrawDecoder,
    pub gamma: Vec<[f64; 4]>,
}

impl SensitivityDraws {
    /// P(U_i = 1 | data) for every subject at draw `b`.
    pub fn membership(
        &self,
        b: usize,
        design: &DesignMatrices,
        data: &Dataset,
    ) -> Result<Vec<f64>> {
        let theta = self.decoder.theta(self.draws.flat(b));
        membership_probabilities(&theta, self.gamma[b], design, data, &self.decoder.spec)
    }

    /// A draw of every subject's latent confounder at draw `b`.
    pub fn sample_latent<R: Rng + ?Sized>(
        &self,
        b: usize,
        design: &DesignMatrices,
        data: &Dataset,
        rng: &mut R,
    ) -> Result<Vec<u8>> {
        Ok(self
            .membership(b, design, data)?
            .into_iter()
            .map(|w| (rng.random::<f64>() < w) as u8)
            .collect())
    }
}
