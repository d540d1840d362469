//! Multivariate-normal coefficient priors and half-normal residual-SD priors.
//!
//! Scale matrices are covariance matrices.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::spec::ModelSpec;

pub const DEFAULT_SCALE: f64 = 2.5;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A covariance given either as a full matrix or as `c`, meaning `c·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleMatrix {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

impl ScaleMatrix {
    pub fn to_matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        match self {
            ScaleMatrix::Scalar(c) => Ok(DMatrix::identity(dim, dim) * *c),
            ScaleMatrix::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Dimension(format!(
                        "scale matrix must be {dim}x{dim}"
                    )));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        ScaleMatrix::Full(rows_of(m))
    }
}

/// Prior hyperparameters. `location_m`/`scale_m` have dimension P (mediator
/// model columns), `location_y`/`scale_y` dimension P+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub location_y: Vec<f64>,
    pub scale_y: Vec<Vec<f64>>,
    pub location_m: Vec<f64>,
    pub scale_m: Vec<Vec<f64>>,
    pub scale_sd_y: f64,
    pub scale_sd_m: f64,
}

/// Partial prior configuration; absent keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_y: Option<ScaleMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_m: Option<ScaleMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_sd_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_sd_m: Option<f64>,
}

fn diag_rows(dim: usize, c: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { c } else { 0.0 }).collect())
        .collect()
}

/// Zero locations, 2.5·I scales and 2.5 residual-SD scales.
pub fn default_priors(p: usize, _spec: &ModelSpec) -> Result<PriorSpec> {
    if p < 2 {
        return Err(Error::Config(format!(
            "mediator model needs at least 2 columns (intercept and treatment), got {p}"
        )));
    }
    Ok(PriorSpec {
        location_y: vec![0.0; p + 1],
        scale_y: diag_rows(p + 1, DEFAULT_SCALE),
        location_m: vec![0.0; p],
        scale_m: diag_rows(p, DEFAULT_SCALE),
        scale_sd_y: DEFAULT_SCALE,
        scale_sd_m: DEFAULT_SCALE,
    })
}

impl PriorSpec {
    pub fn p(&self) -> usize {
        self.location_m.len()
    }

    pub fn apply(mut self, o: &PriorOverrides) -> Result<PriorSpec> {
        let p = self.p();
        if let Some(v) = &o.location_y {
            self.location_y = v.clone();
        }
        if let Some(s) = &o.scale_y {
            self.scale_y = rows_of(&s.to_matrix(p + 1)?);
        }
        if let Some(v) = &o.location_m {
            self.location_m = v.clone();
        }
        if let Some(s) = &o.scale_m {
            self.scale_m = rows_of(&s.to_matrix(p)?);
        }
        if let Some(v) = o.scale_sd_y {
            self.scale_sd_y = v;
        }
        if let Some(v) = o.scale_sd_m {
            self.scale_sd_m = v;
        }
        self.validate(p)?;
        Ok(self)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.location_m.len() != p || self.location_y.len() != p + 1 {
            return Err(Error::Dimension(format!(
                "prior locations must have lengths {p} (mediator) and {} (outcome), got {} and {}",
                p + 1,
                self.location_m.len(),
                self.location_y.len()
            )));
        }
        for (name, v) in [
            ("scale_sd_y", self.scale_sd_y),
            ("scale_sd_m", self.scale_sd_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.compile()?;
        Ok(())
    }

    pub fn compile(&self) -> Result<CompiledPriors> {
        let p = self.p();
        Ok(CompiledPriors {
            alpha: Mvn::new(
                self.location_y.clone(),
                ScaleMatrix::Full(self.scale_y.clone()).to_matrix(p + 1)?,
            )
            .map_err(|e| Error::Config(format!("scale_y: {e}")))?,
            beta: Mvn::new(
                self.location_m.clone(),
                ScaleMatrix::Full(self.scale_m.clone()).to_matrix(p)?,
            )
            .map_err(|e| Error::Config(format!("scale_m: {e}")))?,
            sd_y: HalfNormal::new(self.scale_sd_y),
            sd_m: HalfNormal::new(self.scale_sd_m),
        })
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Multivariate normal with precomputed precision and normalizer.
#[derive(Debug, Clone)]
pub struct Mvn {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_norm: f64,
}

impl Mvn {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::Dimension(format!("covariance must be {k}x{k}")));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-10 * cov.amax().max(1.0) {
            return Err(Error::Config("covariance is not symmetric".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Config("covariance is not positive definite".into()))?;
        let log_det: f64 = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        Ok(Self {
            mean: DVector::from_vec(mean),
            precision: chol.inverse(),
            chol_lower: chol.l(),
            log_norm: -0.5 * k as f64 * (2.0 * PI).ln() - 0.5 * log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    /// Log-density at `x`; adds the gradient into `grad`.
    pub fn log_density_acc(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m));
        let pd = &self.precision * &d;
        for (g, v) in grad.iter_mut().zip(pd.iter()) {
            *g -= v;
        }
        self.log_norm - 0.5 * d.dot(&pd)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; x.len()];
        self.log_density_acc(x, &mut scratch)
    }
}

/// Half-normal on (0, ∞) with location zero and the given scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfNormal {
    pub scale: f64,
}

impl HalfNormal {
    pub fn new(scale: f64) -> Self {
        Self { scale }
    }

    pub fn log_density(&self, sigma: f64) -> f64 {
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        LN_2 - LN_SQRT_2PI - self.scale.ln() - 0.5 * (sigma / self.scale).powi(2)
    }

    /// d/dσ of the log-density.
    pub fn dlog_dsigma(&self, sigma: f64) -> f64 {
        -sigma / (self.scale * self.scale)
    }
}

#[derive(Debug, Clone)]
pub struct CompiledPriors {
    pub alpha: Mvn,
    pub beta: Mvn,
    pub sd_y: HalfNormal,
    pub sd_m: HalfNormal,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{Distribution, ModelSpec};

    fn spec() -> ModelSpec {
        ModelSpec::canonical(Distribution::Binary, Distribution::Continuous)
    }

    #[test]
    fn defaults_have_documented_shape() {
        let pr = default_priors(5, &spec()).unwrap();
        assert_eq!(pr.scale_m.len(), 5);
        assert_eq!(pr.scale_y.len(), 6);
        for (i, row) in pr.scale_y.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 2.5 } else { 0.0 });
            }
        }
        assert!(pr
            .location_m
            .iter()
            .chain(&pr.location_y)
            .all(|v| *v == 0.0));
        assert_eq!(pr.scale_sd_y, 2.5);
        assert_eq!(pr.scale_sd_m, 2.5);
    }

    #[test]
    fn defaults_without_confounders() {
        let pr = default_priors(2, &spec()).unwrap();
        assert_eq!(pr.location_m.len(), 2);
        assert_eq!(pr.location_y.len(), 3);
        assert!(default_priors(1, &spec()).is_err());
    }

    #[test]
    fn scalar_overrides_expand_to_identity_multiples() {
        let o: PriorOverrides =
            serde_json::from_str(r#"{"scale_m": 10, "scale_y": 10, "location_m": [0,0,0,0,0]}"#)
                .unwrap();
        let pr = default_priors(5, &spec()).unwrap().apply(&o).unwrap();
        assert_eq!(pr.scale_m[4][4], 10.0);
        assert_eq!(pr.scale_y[5][5], 10.0);
        assert_eq!(pr.scale_y[0][1], 0.0);
    }

    #[test]
    fn rejects_wrong_dimensions_and_non_spd() {
        let o = PriorOverrides {
            location_y: Some(vec![0.0; 3]),
            ..Default::default()
        };
        assert!(default_priors(5, &spec()).unwrap().apply(&o).is_err());
        let o = PriorOverrides {
            scale_m: Some(ScaleMatrix::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]])),
            ..Default::default()
        };
        assert!(default_priors(2, &spec()).unwrap().apply(&o).is_err());
    }

    #[test]
    fn mvn_mode_value_is_closed_form() {
        // at the mean: -k/2 log(2π) - 1/2 log|Σ|, Σ = s I
        let k = 4;
        let s = 3.0;
        let mvn = Mvn::new(vec![1.0; k], DMatrix::identity(k, k) * s).unwrap();
        let expect = -0.5 * k as f64 * (2.0 * PI).ln() - 0.5 * k as f64 * s.ln();
        assert!((mvn.log_density(&[1.0; 4]) - expect).abs() < 1e-13);
    }

    #[test]
    fn half_normal_support() {
        let h = HalfNormal::new(2.5);
        assert_eq!(h.log_density(-1.0), f64::NEG_INFINITY);
        assert_eq!(h.log_density(0.0), f64::NEG_INFINITY);
        // density integrates to one: 2 φ(0)/s at σ→0
        let at0 = (2.0 / (2.0 * PI).sqrt() / 2.5_f64).ln();
        assert!((h.log_density(1e-12) - at0).abs() < 1e-12);
    }
}
