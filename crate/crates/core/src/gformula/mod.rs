//! Bayesian g-formula: for each posterior draw, resample the confounder
//! distribution, simulate potential mediators and nested potential outcomes,
//! and contrast their means.
//!
//! Potential-outcome means are indexed `p[a][a']` = mean of `Y(a, M(a'))`.
//! Effects use the orientation
//!
//! * NDE(a) = E[Y(1, M(a)) − Y(0, M(a))]
//! * NIE(a) = E[Y(a, M(1)) − Y(a, M(0))]
//! * TE = E[Y(1, M(1)) − Y(0, M(0))]
//!
//! so that TE = NDE(0) + NIE(1) = NDE(1) + NIE(0).

mod scale;
mod summary;

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap_confounders, ConfounderResample, Dataset};
use crate::error::Result;
use crate::model::{sigmoid, Distribution, ModelSpec, ParamLayout, ParameterVector};
use crate::rng::{stream_rng, Stream};
use crate::sampler::PosteriorDraws;

pub use scale::{transform_scale, EffectScale};
pub use summary::{
    quantile, summarize, summarize_chains, EffectRow, EffectSummary, CDE_ROW, EFFECT_ROWS,
};

/// One posterior draw of every causal effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectDraw {
    pub scale: EffectScale,
    pub nde_control: f64,
    pub nde_treated: f64,
    pub nie_control: f64,
    pub nie_treated: f64,
    pub te: f64,
    pub ade_avg: f64,
    pub acme_avg: f64,
    /// `p[a][a']`: mean of `Y(a, M(a'))`.
    pub p: [[f64; 2]; 2],
    pub cde: Option<f64>,
    /// Means of `Y(0, m)` and `Y(1, m)` at the fixed mediator value.
    pub cde_p: Option<[f64; 2]>,
}

/// Rounds every value onto the multiples of one power of two fine enough to
/// keep ~50 significant bits for the largest magnitude. Sums and differences
/// of grid values are then exact, so the decomposition identities hold
/// bit-for-bit.
fn snap_to_common_grid<const N: usize>(values: [f64; N]) -> [f64; N] {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return values;
    }
    let exp = max.log2().ceil() as i32;
    let quantum = 2f64.powi(exp - 50);
    values.map(|v| (v / quantum).round() * quantum)
}

impl EffectDraw {
    /// Difference-scale effects from potential-outcome means.
    pub fn from_means(p: [[f64; 2]; 2], cde_p: Option<[f64; 2]>) -> Self {
        let [p00, p01, p10, p11] = snap_to_common_grid([p[0][0], p[0][1], p[1][0], p[1][1]]);
        let nde_control = p10 - p00;
        let nde_treated = p11 - p01;
        let nie_control = p01 - p00;
        let nie_treated = p11 - p10;
        let cde_p = cde_p.map(snap_to_common_grid);
        Self {
            scale: EffectScale::Difference,
            nde_control,
            nde_treated,
            nie_control,
            nie_treated,
            te: p11 - p00,
            ade_avg: (nde_control + nde_treated) / 2.0,
            acme_avg: (nie_control + nie_treated) / 2.0,
            p: [[p00, p01], [p10, p11]],
            cde: cde_p.map(|[c0, c1]| c1 - c0),
            cde_p,
        }
    }

    /// Values in [`EFFECT_ROWS`] order.
    pub fn rows(&self) -> [f64; 7] {
        [
            self.nde_control,
            self.nde_treated,
            self.nie_control,
            self.nie_treated,
            self.te,
            self.ade_avg,
            self.acme_avg,
        ]
    }
}

/// Per-subject confounder parts of both linear predictors.
pub(crate) struct BaseLinear {
    pub mediator: Vec<f64>,
    pub outcome: Vec<f64>,
}

pub(crate) fn base_linear(theta: &ParameterVector, z: &DMatrix<f64>) -> BaseLinear {
    let q = z.ncols();
    let part = |coef: &[f64]| -> Vec<f64> {
        (0..z.nrows())
            .map(|i| {
                let mut s = coef[0];
                for k in 0..q {
                    s += coef[1 + k] * z[(i, k)];
                }
                s
            })
            .collect()
    };
    BaseLinear {
        mediator: part(&theta.beta),
        outcome: part(&theta.alpha),
    }
}

pub(crate) fn draw_mediators<R: Rng + ?Sized>(
    theta: &ParameterVector,
    spec: &ModelSpec,
    base: &[f64],
    a: f64,
    shift: Option<&[f64]>,
    rng: &mut R,
) -> Vec<f64> {
    let beta_a = theta.beta_treat();
    let sigma = theta.sigma_m.unwrap_or(1.0);
    base.iter()
        .enumerate()
        .map(|(i, b)| {
            let eta = b + beta_a * a + shift.map_or(0.0, |s| s[i]);
            match spec.dist_m {
                Distribution::Continuous => {
                    let z: f64 = StandardNormal.sample(rng);
                    eta + sigma * z
                }
                Distribution::Binary => (rng.random::<f64>() < sigmoid(eta)) as u8 as f64,
            }
        })
        .collect()
}

pub(crate) fn draw_outcomes<R: Rng + ?Sized>(
    theta: &ParameterVector,
    spec: &ModelSpec,
    base: &[f64],
    a: f64,
    m: &[f64],
    shift: Option<&[f64]>,
    expectation: bool,
    rng: &mut R,
) -> Vec<f64> {
    let alpha_a = theta.alpha_treat();
    let alpha_m = theta.alpha_mediator();
    let sigma = theta.sigma_y.unwrap_or(1.0);
    base.iter()
        .zip(m)
        .enumerate()
        .map(|(i, (b, mi))| {
            let eta = b + alpha_a * a + alpha_m * mi + shift.map_or(0.0, |s| s[i]);
            match (spec.dist_y, expectation) {
                (Distribution::Continuous, true) => eta,
                (Distribution::Continuous, false) => {
                    let z: f64 = StandardNormal.sample(rng);
                    eta + sigma * z
                }
                (Distribution::Binary, true) => sigmoid(eta),
                (Distribution::Binary, false) => (rng.random::<f64>() < sigmoid(eta)) as u8 as f64,
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Simulates `M(a)` for each row of `z` (the resolved confounder resample).
pub fn simulate_potential_mediator<R: Rng + ?Sized>(
    theta: &ParameterVector,
    z: &DMatrix<f64>,
    a: u8,
    spec: &ModelSpec,
    rng: &mut R,
) -> Vec<f64> {
    let base = base_linear(theta, z);
    draw_mediators(theta, spec, &base.mediator, a as f64, None, rng)
}

/// Simulates `Y(a, m)` for each row of `z` using the outcome coefficients.
pub fn simulate_potential_outcome<R: Rng + ?Sized>(
    theta: &ParameterVector,
    z: &DMatrix<f64>,
    a: u8,
    m: &[f64],
    spec: &ModelSpec,
    rng: &mut R,
) -> Vec<f64> {
    let base = base_linear(theta, z);
    draw_outcomes(theta, spec, &base.outcome, a as f64, m, None, false, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectOptions {
    /// Use outcome probabilities/means instead of Bernoulli/normal draws.
    pub expectation_scale: bool,
    /// Mediator value for the controlled direct effect.
    pub cde_m: Option<f64>,
}

impl Default for EffectOptions {
    fn default() -> Self {
        Self {
            expectation_scale: false,
            cde_m: None,
        }
    }
}

/// Latent-confounder shifts added to the linear predictors of one draw:
/// `mediator[a'][i]` enters `M(a')`, `outcome[a][i]` enters `Y(a, ·)`.
pub(crate) struct LatentShifts {
    pub mediator: [Vec<f64>; 2],
    pub outcome: [Vec<f64>; 2],
}

pub(crate) fn effect_draw_with<R: Rng + ?Sized>(
    theta: &ParameterVector,
    z: &DMatrix<f64>,
    spec: &ModelSpec,
    rng: &mut R,
    opts: &EffectOptions,
    latent: Option<&LatentShifts>,
) -> EffectDraw {
    let base = base_linear(theta, z);
    let m_shift = |a: usize| latent.map(|l| l.mediator[a].as_slice());
    let y_shift = |a: usize| latent.map(|l| l.outcome[a].as_slice());
    let m0 = draw_mediators(theta, spec, &base.mediator, 0.0, m_shift(0), rng);
    let m1 = draw_mediators(theta, spec, &base.mediator, 1.0, m_shift(1), rng);
    let mut p = [[0.0; 2]; 2];
    for a in 0..2 {
        for (ap, m) in [&m0, &m1].into_iter().enumerate() {
            let y = draw_outcomes(
                theta,
                spec,
                &base.outcome,
                a as f64,
                m,
                y_shift(a),
                opts.expectation_scale,
                rng,
            );
            p[a][ap] = mean(&y);
        }
    }
    let cde_p = opts.cde_m.map(|cm| {
        let fixed = vec![cm; z.nrows()];
        let mut c = [0.0; 2];
        for (a, slot) in c.iter_mut().enumerate() {
            let y = draw_outcomes(
                theta,
                spec,
                &base.outcome,
                a as f64,
                &fixed,
                y_shift(a),
                opts.expectation_scale,
                rng,
            );
            *slot = mean(&y);
        }
        c
    });
    EffectDraw::from_means(p, cde_p)
}

/// Effects for one parameter draw and one confounder resample.
///
/// `M(0)` and `M(1)` are simulated once and shared by the four outcome
/// vectors; the controlled direct effect (if requested) is simulated last
/// with the mediator fixed at `cde_m`.
pub fn effect_draw<R: Rng + ?Sized>(
    theta: &ParameterVector,
    resample: &ConfounderResample,
    data: &Dataset,
    spec: &ModelSpec,
    rng: &mut R,
    opts: &EffectOptions,
) -> EffectDraw {
    let z = resample.resolve(data);
    effect_draw_with(theta, &z, spec, rng, opts, None)
}

/// Maps stored draw rows back to model parameters.
#[derive(Debug, Clone)]
pub struct DrawDecoder {
    pub layout: ParamLayout,
    pub spec: ModelSpec,
    pub fixed_sigma_y: Option<f64>,
    pub fixed_sigma_m: Option<f64>,
}

impl DrawDecoder {
    pub fn theta(&self, row: &[f64]) -> ParameterVector {
        self.layout
            .unpack(row, &self.spec, self.fixed_sigma_y, self.fixed_sigma_m)
    }

    pub fn gamma(&self, row: &[f64]) -> Option<[f64; 4]> {
        self.layout.gamma(row)
    }
}

/// How confounders are resampled for each posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Standardization {
    /// A fresh bootstrap of subjects per draw.
    #[default]
    Bootstrap,
    /// The observed sample as is.
    Observed,
}

/// Confounder resample and effect-simulation generator for draw `b`.
pub fn draw_inputs(
    data: &Dataset,
    seed: u64,
    b: usize,
    standardization: Standardization,
) -> (ConfounderResample, crate::rng::Rng) {
    let resample = match standardization {
        Standardization::Bootstrap => {
            let mut rng = stream_rng(seed, Stream::Bootstrap, b as u64);
            bootstrap_confounders(data, b as u64, &mut rng)
        }
        Standardization::Observed => ConfounderResample {
            iteration: b as u64,
            ..ConfounderResample::identity(data.n())
        },
    };
    (resample, stream_rng(seed, Stream::Effect, b as u64))
}

/// Effect draws for every posterior draw, in chain-major order. Draw `b`
/// uses generators derived from `(seed, b)` only.
pub fn compute_effects(
    draws: &PosteriorDraws,
    decoder: &DrawDecoder,
    data: &Dataset,
    seed: u64,
    opts: &EffectOptions,
) -> Vec<EffectDraw> {
    (0..draws.n_draws())
        .into_par_iter()
        .map(|b| {
            let theta = decoder.theta(draws.flat(b));
            let (resample, mut rng) = draw_inputs(data, seed, b, Standardization::Bootstrap);
            effect_draw(&theta, &resample, data, &decoder.spec, &mut rng, opts)
        })
        .collect()
}

/// Long-format export: one row per draw and effect.
pub fn write_effects_csv<W: Write>(effects: &[EffectDraw], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["b", "effect", "value", "scale"])?;
    for (b, e) in effects.iter().enumerate() {
        let b = b.to_string();
        let scale = e.scale.code();
        for (name, v) in EFFECT_ROWS.iter().zip(e.rows()) {
            wtr.write_record([b.as_str(), name, &v.to_string(), scale])?;
        }
        if let Some(c) = e.cde {
            wtr.write_record([b.as_str(), CDE_ROW, &c.to_string(), scale])?;
        }
    }
    wtr.flush().map_err(|e| crate::Error::Csv(e.into()))?;
    Ok(())
}
