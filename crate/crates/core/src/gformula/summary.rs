use serde::{Deserialize, Serialize};

use super::{EffectDraw, EffectScale};
use crate::error::{Error, Result};
use crate::sampler::diagnostics::ess_chains;

/// Report row labels, in [`EffectDraw::rows`] order.
pub const EFFECT_ROWS: [&str; 7] = [
    "ADE (control)",
    "ADE (treated)",
    "ACME (control)",
    "ACME (treated)",
    "Total effect",
    "ADE (average)",
    "ACME (average)",
];

pub const CDE_ROW: &str = "CDE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub effect: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Posterior probability that the effect is beyond the null value
    /// (above 0 for differences, above 1 for ratios).
    pub prob_positive: f64,
    /// Monte Carlo standard error of `mean`.
    pub mcse: f64,
    /// The interval excludes the null value.
    pub excludes_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub scale: EffectScale,
    pub level: f64,
    pub rows: Vec<EffectRow>,
}

impl EffectSummary {
    pub fn row(&self, effect: &str) -> Option<&EffectRow> {
        self.rows.iter().find(|r| r.effect == effect)
    }
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n − 1)·prob`). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize_values(name: &str, chains: &[Vec<f64>], level: f64, scale: EffectScale) -> EffectRow {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lower = quantile(&sorted, tail);
    let upper = quantile(&sorted, 1.0 - tail);
    let null = scale.null_value();
    let prob_positive = all.iter().filter(|v| **v > null).count() as f64 / n;
    let ess = ess_chains(chains).value;
    EffectRow {
        effect: name.to_string(),
        mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
        sd,
        lower,
        upper,
        prob_positive,
        mcse: if sd > 0.0 { sd / ess.sqrt() } else { 0.0 },
        excludes_null: lower > null || upper < null,
    }
}

/// Summary of draws grouped into `chains` equal consecutive blocks; the
/// grouping only affects the Monte Carlo standard errors.
pub fn summarize_chains(draws: &[EffectDraw], chains: usize, level: f64) -> Result<EffectSummary> {
    if draws.len() < 2 {
        return Err(Error::Config(format!(
            "at least 2 effect draws are needed, got {}",
            draws.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "credible level {level} is not in (0, 1)"
        )));
    }
    let chains = chains.max(1);
    if draws.len() % chains != 0 {
        return Err(Error::Dimension(format!(
            "{} draws do not split into {chains} chains",
            draws.len()
        )));
    }
    let scale = draws[0].scale;
    if draws.iter().any(|d| d.scale != scale) {
        return Err(Error::Config("effect draws mix scales".into()));
    }
    let per = draws.len() / chains;
    let split = |f: &dyn Fn(&EffectDraw) -> f64| -> Vec<Vec<f64>> {
        draws
            .chunks(per)
            .map(|c| c.iter().map(f).collect())
            .collect()
    };
    let mut rows: Vec<EffectRow> = EFFECT_ROWS
        .iter()
        .enumerate()
        .map(|(k, name)| summarize_values(name, &split(&|d| d.rows()[k]), level, scale))
        .collect();
    if draws.iter().all(|d| d.cde.is_some()) {
        rows.push(summarize_values(
            CDE_ROW,
            &split(&|d| d.cde.unwrap_or(f64::NAN)),
            level,
            scale,
        ));
    }
    Ok(EffectSummary { scale, level, rows })
}

/// Summary of draws treated as one sequence.
pub fn summarize(draws: &[EffectDraw], level: f64) -> Result<EffectSummary> {
    summarize_chains(draws, 1, level)
}
