//! Run configuration shared by the command-line flags and the JSON config
//! file. Both use the same kebab-case keys; flags override file values.

use std::path::{Path, PathBuf};

use causalmed::data::{build_design, load_csv, ColumnRoles, Dataset};
use causalmed::gformula::{EffectOptions, EffectScale};
use causalmed::model::{default_priors, Distribution, Link, ModelSpec, PriorOverrides};
use causalmed::oracle::OracleMethod;
use causalmed::pipeline::AnalysisConfig;
use causalmed::sampler::SamplerConfig;
use causalmed::sensitivity::SensitivitySpec;
use causalmed::{Error, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT: &str = "causalmed-out";
pub const DEFAULT_NSIM: usize = 2000;

/// Parses inline JSON, or reads JSON from a file when the argument does not
/// start with `{` or `[`.
fn json_arg<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    let t = s.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        serde_json::from_str(t).map_err(|e| e.to_string())
    } else {
        let text = std::fs::read_to_string(s).map_err(|e| format!("{s}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("{s}: {e}"))
    }
}

fn priors_arg(s: &str) -> std::result::Result<PriorOverrides, String> {
    json_arg(s)
}

fn sensitivity_arg(s: &str) -> std::result::Result<SensitivitySpec, String> {
    json_arg(s)
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Input CSV with a header row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mediator: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treat: Option<String>,
    /// Comma-separated confounder columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// binary or continuous (default continuous).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist_y: Option<Distribution>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist_m: Option<Distribution>,
    /// logit or identity (default: canonical for the distribution).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_y: Option<Link>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_m: Option<Link>,
    /// Treatment code for the control arm (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_value: Option<String>,
    /// Treatment code for the treated arm (default 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treat_value: Option<String>,
    /// Prior overrides as inline JSON or a JSON file path.
    #[arg(long, value_parser = priors_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorOverrides>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accept: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_treedepth: Option<usize>,
    /// Effect scale: rd (difference), rr (risk ratio) or or (odds ratio).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<EffectScale>,
    /// Credible level (default 0.95).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Mediator value for the controlled direct effect.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cde_m: Option<f64>,
    /// Average outcome probabilities instead of simulating outcomes. The
    /// quasi-Bayes oracle always does.
    #[arg(long)]
    pub expectation_scale: bool,
    /// Center and scale confounder columns before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Bias-prior scale for a single sensitivity fit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Comma-separated bias-prior scales for a sweep.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    /// Bias-prior specification as inline JSON or a JSON file path.
    #[arg(long, value_parser = sensitivity_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivitySpec>,
    /// Oracle method: quasi_bayes or closed_form.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<OracleMethod>,
    /// Number of quasi-Bayesian simulations.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nsim: Option<usize>,
    /// Sandwich covariance for the quasi-Bayesian sampling distribution.
    #[arg(long)]
    pub robust_se: bool,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker-thread cap. Results do not depend on it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($opt:ident),*; $($flag:ident),*) => {
        RunConfig {
            $($opt: $top.$opt.or($base.$opt),)*
            $($flag: $top.$flag || $base.$flag,)*
            covariates: if $top.covariates.is_empty() { $base.covariates } else { $top.covariates },
        }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top;
            data, outcome, mediator, treat, dist_y, dist_m, link_y, link_m, control_value,
            treat_value, priors, chains, warmup, samples, seed, target_accept, max_treedepth,
            scale, level, cde_m, delta, delta_grid, sensitivity, method, nsim, out, threads;
            expectation_scale, standardize, robust_se)
    }

    fn required<'a>(v: &'a Option<String>, key: &str) -> Result<&'a str> {
        v.as_deref()
            .ok_or_else(|| Error::Config(format!("--{key} is required")))
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let dist_y = self.dist_y.unwrap_or(Distribution::Continuous);
        let dist_m = self.dist_m.unwrap_or(Distribution::Continuous);
        ModelSpec::new(
            dist_y,
            dist_m,
            self.link_y.unwrap_or(dist_y.canonical_link()),
            self.link_m.unwrap_or(dist_m.canonical_link()),
        )
    }

    pub fn roles(&self) -> Result<ColumnRoles> {
        let covs: Vec<&str> = self.covariates.iter().map(|s| s.as_str()).collect();
        Ok(ColumnRoles::new(
            Self::required(&self.outcome, "outcome")?,
            Self::required(&self.treat, "treat")?,
            Self::required(&self.mediator, "mediator")?,
            &covs,
        ))
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let path = self
            .data
            .as_deref()
            .ok_or_else(|| Error::Config("--data is required".into()))?;
        let roles = self.roles()?;
        let data = load_csv(
            path,
            &roles,
            self.control_value.as_deref().unwrap_or("0"),
            self.treat_value.as_deref().unwrap_or("1"),
        )?;
        let spec = self.spec()?;
        data.check_binary(spec.outcome_binary(), spec.mediator_binary())?;
        Ok(if self.standardize {
            data.standardize_confounders()
        } else {
            data
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn level(&self) -> f64 {
        self.level.unwrap_or(0.95)
    }

    pub fn effect_options(&self) -> EffectOptions {
        EffectOptions {
            expectation_scale: self.expectation_scale,
            cde_m: self.cde_m,
        }
    }

    /// Engine configuration for `data`. `seed` is the resolved run seed.
    pub fn analysis(&self, data: &Dataset, seed: u64) -> Result<AnalysisConfig> {
        let spec = self.spec()?;
        let defaults = SamplerConfig::default();
        let priors = match &self.priors {
            Some(o) => Some(default_priors(build_design(data).p(), &spec)?.apply(o)?),
            None => None,
        };
        let cfg = AnalysisConfig {
            priors,
            sampler: SamplerConfig {
                chains: self.chains.unwrap_or(defaults.chains),
                warmup: self.warmup.unwrap_or(defaults.warmup),
                samples: self.samples.unwrap_or(defaults.samples),
                seed,
                target_accept: self.target_accept.unwrap_or(defaults.target_accept),
                max_step_doublings: self.max_treedepth.unwrap_or(defaults.max_step_doublings),
                ..defaults
            },
            effects: self.effect_options(),
            scale: self.scale.unwrap_or(EffectScale::Difference),
            level: self.level(),
            ..AnalysisConfig::new(spec)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy with defaults filled in and the resolved seed, for echoing into
    /// artifacts.
    pub fn resolved(&self, seed: u64) -> RunConfig {
        let d = SamplerConfig::default();
        let spec = self.spec().ok();
        RunConfig {
            dist_y: spec.map(|s| s.dist_y),
            dist_m: spec.map(|s| s.dist_m),
            link_y: spec.map(|s| s.link_y),
            link_m: spec.map(|s| s.link_m),
            control_value: Some(self.control_value.clone().unwrap_or_else(|| "0".into())),
            treat_value: Some(self.treat_value.clone().unwrap_or_else(|| "1".into())),
            chains: Some(self.chains.unwrap_or(d.chains)),
            warmup: Some(self.warmup.unwrap_or(d.warmup)),
            samples: Some(self.samples.unwrap_or(d.samples)),
            seed: Some(seed),
            target_accept: Some(self.target_accept.unwrap_or(d.target_accept)),
            max_treedepth: Some(self.max_treedepth.unwrap_or(d.max_step_doublings)),
            scale: Some(self.scale.unwrap_or(EffectScale::Difference)),
            level: Some(self.level()),
            ..self.clone()
        }
    }

    /// The echo embedded in reproducible artifacts. Output location and
    /// thread count are left out because they do not affect results.
    pub fn echo(&self, seed: u64) -> RunConfig {
        RunConfig {
            out: None,
            threads: None,
            ..self.resolved(seed)
        }
    }
}
