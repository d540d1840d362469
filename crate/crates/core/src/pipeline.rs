//! End-to-end analyses: posterior sampling, effect draws, summaries and
//! convergence checks.

use serde::{Deserialize, Serialize};

use crate::data::{build_design, Dataset};
use crate::error::{Error, Result};
use crate::gformula::{
    compute_effects, quantile, summarize_chains, transform_scale, DrawDecoder, EffectDraw,
    EffectOptions, EffectScale, EffectSummary,
};
use crate::model::{default_priors, FixedSigmas, ModelSpec, Posterior, PriorSpec};
use crate::rng::{stream_rng, Stream};
use crate::sampler::diagnostics::{ess_chains, split_rhat_chains, ESS_WARN, RHAT_WARN};
use crate::sampler::{run_chains, Init, PosteriorDraws, SamplerConfig};
use crate::sensitivity::{build_sensitivity_model, compute_sensitivity_effects, SensitivitySpec};

/// Everything an analysis needs besides the data.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub spec: ModelSpec,
    /// `None` selects the default priors for the design.
    pub priors: Option<PriorSpec>,
    pub sampler: SamplerConfig,
    pub effects: EffectOptions,
    pub scale: EffectScale,
    pub level: f64,
    pub fixed_sigmas: FixedSigmas,
    pub init: Init,
}

impl AnalysisConfig {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            spec,
            priors: None,
            sampler: SamplerConfig::default(),
            effects: EffectOptions::default(),
            scale: EffectScale::Difference,
            level: 0.95,
            fixed_sigmas: FixedSigmas::default(),
            init: Init::default(),
        }
    }

    pub fn resolve_priors(&self, p: usize) -> Result<PriorSpec> {
        match &self.priors {
            Some(pr) => Ok(pr.clone()),
            None => default_priors(p, &self.spec),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "credible level {} is not in (0, 1)",
                self.level
            )));
        }
        if self.scale.is_ratio() && !self.spec.outcome_binary() {
            return Err(Error::Config(format!(
                "the {} scale needs a binary outcome",
                self.scale
            )));
        }
        if self.effects.cde_m.is_some_and(|m| !m.is_finite()) {
            return Err(Error::Config("cde_m must be finite".into()));
        }
        Ok(())
    }
}

/// Posterior summary of one model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub draws: PosteriorDraws,
    pub decoder: DrawDecoder,
    /// Effect draws on the configured scale, chain-major.
    pub effects: Vec<EffectDraw>,
    pub summary: EffectSummary,
    pub coefficients: Vec<CoefficientRow>,
    /// Bias parameters paired with each draw (sensitivity runs only).
    pub gamma: Option<Vec<[f64; 4]>>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn max_rhat(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|c| c.rhat)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|c| c.ess)
            .fold(f64::INFINITY, f64::min)
    }
}

fn coefficient_rows(draws: &PosteriorDraws, level: f64) -> Vec<CoefficientRow> {
    let tail = (1.0 - level) / 2.0;
    (0..draws.dim())
        .map(|p| {
            let chains = draws.param_chains(p);
            let mut all = draws.pooled(p);
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let sd =
                (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            all.sort_by(f64::total_cmp);
            CoefficientRow {
                parameter: draws.param_names[p].clone(),
                mean,
                sd,
                lower: quantile(&all, tail),
                upper: quantile(&all, 1.0 - tail),
                rhat: if draws.chains * draws.samples >= 4 {
                    split_rhat_chains(&chains)
                } else {
                    f64::NAN
                },
                ess: ess_chains(&chains).value,
            }
        })
        .collect()
}

fn convergence_warnings(rows: &[CoefficientRow]) -> Vec<String> {
    let mut w = Vec::new();
    for r in rows {
        if !(r.rhat < RHAT_WARN) && !r.rhat.is_nan() {
            w.push(format!(
                "{}: R-hat {:.3} is not below {RHAT_WARN}",
                r.parameter, r.rhat
            ));
        }
        if r.ess < ESS_WARN {
            w.push(format!(
                "{}: effective sample size {:.0} is below {ESS_WARN}",
                r.parameter, r.ess
            ));
        }
    }
    w
}

fn finish(
    draws: PosteriorDraws,
    decoder: DrawDecoder,
    effects: Vec<EffectDraw>,
    gamma: Option<Vec<[f64; 4]>>,
    cfg: &AnalysisConfig,
) -> Result<FitResult> {
    let effects = effects
        .iter()
        .map(|e| transform_scale(e, cfg.scale))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_chains(&effects, draws.chains, cfg.level)?;
    let coefficients = coefficient_rows(&draws, cfg.level);
    let mut warnings = draws.warnings.clone();
    warnings.extend(convergence_warnings(&coefficients));
    Ok(FitResult {
        draws,
        decoder,
        effects,
        summary,
        coefficients,
        gamma,
        warnings,
    })
}

/// Fits both models and computes all causal effects.
pub fn fit(data: &Dataset, cfg: &AnalysisConfig) -> Result<FitResult> {
    cfg.validate()?;
    let design = build_design(data);
    let priors = cfg.resolve_priors(design.p())?;
    let post = Posterior::with_fixed_sigmas(data, &design, cfg.spec, &priors, cfg.fixed_sigmas)?;
    let draws = run_chains(&post, &cfg.init, &cfg.sampler)?;
    let decoder = DrawDecoder {
        layout: post.layout().clone(),
        spec: cfg.spec,
        fixed_sigma_y: cfg.fixed_sigmas.y,
        fixed_sigma_m: cfg.fixed_sigmas.m,
    };
    let effects = compute_effects(&draws, &decoder, data, cfg.sampler.seed, &cfg.effects);
    finish(draws, decoder, effects, None, cfg)
}

/// Fits the latent-confounder model for one bias prior. A degenerate prior
/// runs exactly [`fit`].
pub fn fit_sensitivity(
    data: &Dataset,
    cfg: &AnalysisConfig,
    sens: &SensitivitySpec,
) -> Result<FitResult> {
    cfg.validate()?;
    sens.validate()?;
    if sens.is_degenerate()? && sens.location_gamma.iter().all(|v| *v == 0.0) {
        return fit(data, cfg);
    }
    let design = build_design(data);
    let priors = cfg.resolve_priors(design.p())?;
    let seed = cfg.sampler.seed;
    if sens.prior_only || sens.is_degenerate()? {
        let post =
            Posterior::with_fixed_sigmas(data, &design, cfg.spec, &priors, cfg.fixed_sigmas)?;
        let draws = run_chains(&post, &cfg.init, &cfg.sampler)?;
        let decoder = DrawDecoder {
            layout: post.layout().clone(),
            spec: cfg.spec,
            fixed_sigma_y: cfg.fixed_sigmas.y,
            fixed_sigma_m: cfg.fixed_sigmas.m,
        };
        let gammas = (0..draws.n_draws())
            .map(|b| {
                crate::sensitivity::draw_bias_from_prior(
                    sens,
                    &mut stream_rng(seed, Stream::BiasPrior, b as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let effects =
            compute_sensitivity_effects(&draws, &decoder, &gammas, data, seed, &cfg.effects)?;
        return finish(draws, decoder, effects, Some(gammas), cfg);
    }
    let model = build_sensitivity_model(data, &design, cfg.spec, &priors, sens, cfg.fixed_sigmas)?;
    let draws = run_chains(&model, &cfg.init, &cfg.sampler)?;
    let decoder = model.decoder();
    let gammas: Vec<[f64; 4]> = draws
        .iter()
        .map(|row| decoder.gamma(row).unwrap_or([0.0; 4]))
        .collect();
    let effects = compute_sensitivity_effects(&draws, &decoder, &gammas, data, seed, &cfg.effects)?;
    finish(draws, decoder, effects, Some(gammas), cfg)
}
