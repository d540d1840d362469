//! JSON summary documents and the text tables derived from them.

use std::fmt::Write as _;

use causalmed::gformula::{EffectRow, EffectScale, EffectSummary};
use causalmed::oracle::OracleMethod;
use causalmed::pipeline::{CoefficientRow, FitResult};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// `summary.json` for `fit` and single-δ `sens`.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub scale: EffectScale,
    pub level: f64,
    pub outcome_model: Vec<CoefficientRow>,
    pub mediator_model: Vec<CoefficientRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub auxiliary: Vec<CoefficientRow>,
    pub effects: Vec<EffectRow>,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn new(command: &str, seed: u64, config: RunConfig, fit: &FitResult) -> Self {
        let pick = |prefix: &str| -> Vec<CoefficientRow> {
            fit.coefficients
                .iter()
                .filter(|c| c.parameter.starts_with(prefix))
                .cloned()
                .collect()
        };
        Self {
            command: command.into(),
            seed,
            config,
            scale: fit.summary.scale,
            level: fit.summary.level,
            outcome_model: pick("alpha_"),
            mediator_model: pick("beta_"),
            auxiliary: fit
                .coefficients
                .iter()
                .filter(|c| !c.parameter.starts_with("alpha_") && !c.parameter.starts_with("beta_"))
                .cloned()
                .collect(),
            effects: fit.summary.rows.clone(),
            warnings: fit.warnings.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let (lo, hi) = interval_labels(self.level);
        let header = format!(
            "{:<28}{:>9}{:>9}{:>9}{:>9}{:>8}{:>8}",
            "", "mean", "sd", lo, hi, "R-hat", "ESS"
        );
        for (title, rows, prefix) in [
            ("Outcome model", &self.outcome_model, "alpha_"),
            ("Mediator model", &self.mediator_model, "beta_"),
            ("Other parameters", &self.auxiliary, ""),
        ] {
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(s, "{title}");
            let _ = writeln!(s, "{header}");
            for r in rows {
                let name = r.parameter.strip_prefix(prefix).unwrap_or(&r.parameter);
                let _ = writeln!(
                    s,
                    "  {:<26}{}{}{}{}{:>8}{:>8}",
                    name,
                    num(r.mean),
                    num(r.sd),
                    num(r.lower),
                    num(r.upper),
                    fixed(r.rhat, 3),
                    fixed(r.ess, 0),
                );
            }
            s.push('\n');
        }
        s.push_str(&effect_table(self.scale, self.level, &self.effects));
        s
    }
}

/// `summary.json` for `oracle`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub command: String,
    pub method: OracleMethod,
    pub seed: u64,
    pub config: RunConfig,
    pub scale: EffectScale,
    pub level: f64,
    pub effects: Vec<EffectRow>,
}

impl OracleSummary {
    pub fn render(&self) -> String {
        format!(
            "Oracle: {}\n{}",
            self.method,
            effect_table(self.scale, self.level, &self.effects)
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effects: Option<Vec<EffectRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `summary.json` for a δ sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub scale: EffectScale,
    pub level: f64,
    pub sweep: Vec<SweepEntry>,
}

impl SweepSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.sweep {
            let _ = writeln!(s, "delta = {}", e.delta);
            match (&e.effects, &e.error) {
                (Some(rows), _) => s.push_str(&effect_table(self.scale, self.level, rows)),
                (None, Some(err)) => {
                    let _ = writeln!(s, "  failed: {err}");
                }
                (None, None) => {}
            }
            s.push('\n');
        }
        s
    }
}

pub fn sweep_entries(summaries: &[(f64, causalmed::Result<EffectSummary>)]) -> Vec<SweepEntry> {
    summaries
        .iter()
        .map(|(delta, r)| match r {
            Ok(s) => SweepEntry {
                delta: *delta,
                effects: Some(s.rows.clone()),
                error: None,
            },
            Err(e) => SweepEntry {
                delta: *delta,
                effects: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

fn interval_labels(level: f64) -> (String, String) {
    let tail = (1.0 - level) / 2.0 * 100.0;
    (
        format!("{}%", trim(tail)),
        format!("{}%", trim(100.0 - tail)),
    )
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn num(v: f64) -> String {
    format!("{:>9}", fixed(v, 3))
}

fn fixed(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "-".into()
    }
}

/// Effect rows with a `*` on intervals that exclude the null value.
pub fn effect_table(scale: EffectScale, level: f64, rows: &[EffectRow]) -> String {
    let mut s = String::new();
    let (lo, hi) = interval_labels(level);
    let scale_name = match scale {
        EffectScale::Difference => "difference",
        EffectScale::RiskRatio => "risk ratio",
        EffectScale::OddsRatio => "odds ratio",
    };
    let _ = writeln!(
        s,
        "Effects ({scale_name} scale, {}% credible interval)",
        trim(level * 100.0)
    );
    let _ = writeln!(
        s,
        "{:<28}{:>9}{:>9}{:>9}{:>9}{:>8}",
        "",
        "mean",
        "sd",
        lo,
        hi,
        format!("P(>{})", scale.null_value())
    );
    for r in rows {
        let _ = writeln!(
            s,
            "  {:<26}{}{}{}{}{:>8} {}",
            r.effect,
            num(r.mean),
            num(r.sd),
            num(r.lower),
            num(r.upper),
            fixed(r.prob_positive, 3),
            if r.excludes_null { "*" } else { "" },
        );
    }
    s
}

/// Effect rows read back from any `summary.json`. Non-finite numbers are
/// written as `null`.
#[derive(Debug, Clone, Deserialize)]
pub struct StoredRow {
    pub effect: String,
    pub mean: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub mcse: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StoredSummary {
    pub command: String,
    #[serde(default)]
    pub method: Option<OracleMethod>,
    pub scale: EffectScale,
    pub effects: Vec<StoredRow>,
}

/// One effect from both sources.
#[derive(Debug, Clone, Serialize)]
pub struct ComparedRow {
    pub effect: String,
    pub engine_mean: f64,
    pub engine_lower: f64,
    pub engine_upper: f64,
    pub oracle_mean: f64,
    pub oracle_lower: f64,
    pub oracle_upper: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub exceeds: bool,
}

/// Absolute agreement floor for point estimates.
pub const COMPARE_FLOOR: f64 = 0.02;

/// Joins rows by effect name. The tolerance is
/// `max(COMPARE_FLOOR, 3·sqrt(mcse_engine² + mcse_oracle²))`.
pub fn compare(
    engine: &StoredSummary,
    oracle: &StoredSummary,
) -> causalmed::Result<Vec<ComparedRow>> {
    if engine.scale != oracle.scale {
        return Err(causalmed::Error::Config(format!(
            "summaries use different scales ({} and {})",
            engine.scale, oracle.scale
        )));
    }
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let rows = engine
        .effects
        .iter()
        .filter_map(|e| {
            let o = oracle.effects.iter().find(|o| o.effect == e.effect)?;
            let difference = nan(e.mean) - nan(o.mean);
            let se = (e.mcse.unwrap_or(0.0).powi(2) + o.mcse.unwrap_or(0.0).powi(2)).sqrt();
            let tolerance = COMPARE_FLOOR.max(3.0 * se);
            Some(ComparedRow {
                effect: e.effect.clone(),
                engine_mean: nan(e.mean),
                engine_lower: nan(e.lower),
                engine_upper: nan(e.upper),
                oracle_mean: nan(o.mean),
                oracle_lower: nan(o.lower),
                oracle_upper: nan(o.upper),
                difference,
                tolerance,
                exceeds: !(difference.abs() <= tolerance),
            })
        })
        .collect::<Vec<_>>();
    if rows.is_empty() {
        return Err(causalmed::Error::Config(
            "the summaries share no effect rows".into(),
        ));
    }
    Ok(rows)
}

pub fn compare_table(rows: &[ComparedRow], left: &str, right: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18}{:>30}{:>30}{:>9}{:>9}",
        "", left, right, "diff", "tol"
    );
    let cell =
        |m: f64, l: f64, u: f64| format!("{} [{}, {}]", fixed(m, 3), fixed(l, 3), fixed(u, 3));
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18}{:>30}{:>30}{}{} {}",
            r.effect,
            cell(r.engine_mean, r.engine_lower, r.engine_upper),
            cell(r.oracle_mean, r.oracle_lower, r.oracle_upper),
            num(r.difference),
            num(r.tolerance),
            if r.exceeds { "!" } else { "" },
        );
    }
    s
}
