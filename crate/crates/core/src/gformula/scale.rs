use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EffectDraw;
use crate::error::{Error, Result};

/// Scale on which effects are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum EffectScale {
    #[default]
    #[serde(rename = "rd", alias = "difference")]
    Difference,
    #[serde(rename = "rr", alias = "risk_ratio")]
    RiskRatio,
    #[serde(rename = "or", alias = "odds_ratio")]
    OddsRatio,
}

impl EffectScale {
    pub fn code(self) -> &'static str {
        match self {
            EffectScale::Difference => "rd",
            EffectScale::RiskRatio => "rr",
            EffectScale::OddsRatio => "or",
        }
    }

    /// Value of an effect under no effect: 0 for differences, 1 for ratios.
    pub fn null_value(self) -> f64 {
        match self {
            EffectScale::Difference => 0.0,
            _ => 1.0,
        }
    }

    pub fn is_ratio(self) -> bool {
        self != EffectScale::Difference
    }
}

impl fmt::Display for EffectScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for EffectScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rd" | "difference" => Ok(EffectScale::Difference),
            "rr" | "risk_ratio" => Ok(EffectScale::RiskRatio),
            "or" | "odds_ratio" => Ok(EffectScale::OddsRatio),
            other => Err(Error::Config(format!(
                "unknown scale '{other}' (expected rd, rr or or)"
            ))),
        }
    }
}

const P_NAMES: [[&str; 2]; 2] = [["p00", "p01"], ["p10", "p11"]];

/// Re-expresses a draw on `scale` from its stored potential-outcome means.
///
/// Ratio scales contrast the same pairs as the difference scale; the
/// averaged rows are geometric means of the control and treated ratios.
pub fn transform_scale(draw: &EffectDraw, scale: EffectScale) -> Result<EffectDraw> {
    if scale == EffectScale::Difference {
        return Ok(EffectDraw::from_means(draw.p, draw.cde_p));
    }
    let name = if scale == EffectScale::RiskRatio {
        "risk-ratio"
    } else {
        "odds-ratio"
    };
    let f = |v: f64, label: &'static str| -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::DegenerateProbability {
                name: label,
                value: v,
                scale: name,
            });
        }
        Ok(match scale {
            EffectScale::OddsRatio => v / (1.0 - v),
            _ => v,
        })
    };
    let mut t = [[0.0; 2]; 2];
    for a in 0..2 {
        for ap in 0..2 {
            t[a][ap] = f(draw.p[a][ap], P_NAMES[a][ap])?;
        }
    }
    let nde_control = t[1][0] / t[0][0];
    let nde_treated = t[1][1] / t[0][1];
    let nie_control = t[0][1] / t[0][0];
    let nie_treated = t[1][1] / t[1][0];
    let cde = match draw.cde_p {
        Some([c0, c1]) => Some(f(c1, "cde p1")? / f(c0, "cde p0")?),
        None => None,
    };
    Ok(EffectDraw {
        scale,
        nde_control,
        nde_treated,
        nie_control,
        nie_treated,
        te: t[1][1] / t[0][0],
        ade_avg: (nde_control * nde_treated).sqrt(),
        acme_avg: (nie_control * nie_treated).sqrt(),
        p: draw.p,
        cde,
        cde_p: draw.cde_p,
    })
}
