use crate::data::DesignMatrices;
use crate::error::{Error, Result};
use crate::model::spec::{Distribution, ModelSpec};

/// Bias parameters of the latent-confounder extension, in storage order.
pub const GAMMA_NAMES: [&str; 4] = ["gamma_0", "gamma_A", "beta_U", "alpha_U"];

/// Model parameters on their natural scale.
///
/// `alpha` follows the outcome design columns (intercept, confounders,
/// treatment, mediator); `beta` follows the mediator design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma_y: Option<f64>,
    pub sigma_m: Option<f64>,
}

impl ParameterVector {
    pub fn zeros(p: usize, spec: &ModelSpec) -> Self {
        Self {
            alpha: vec![0.0; p + 1],
            beta: vec![0.0; p],
            sigma_y: (spec.dist_y == Distribution::Continuous).then_some(1.0),
            sigma_m: (spec.dist_m == Distribution::Continuous).then_some(1.0),
        }
    }

    pub fn check(&self, design: &DesignMatrices, spec: &ModelSpec) -> Result<()> {
        if self.alpha.len() != design.x_y.ncols() || self.beta.len() != design.x_m.ncols() {
            return Err(Error::Dimension(format!(
                "alpha has {} entries (design {}), beta has {} (design {})",
                self.alpha.len(),
                design.x_y.ncols(),
                self.beta.len(),
                design.x_m.ncols()
            )));
        }
        let want_y = spec.dist_y == Distribution::Continuous;
        let want_m = spec.dist_m == Distribution::Continuous;
        if self.sigma_y.is_some() != want_y || self.sigma_m.is_some() != want_m {
            return Err(Error::Dimension(
                "residual SDs must be present exactly for continuous models".into(),
            ));
        }
        Ok(())
    }

    pub fn alpha_treat(&self) -> f64 {
        self.alpha[self.alpha.len() - 2]
    }

    pub fn alpha_mediator(&self) -> f64 {
        self.alpha[self.alpha.len() - 1]
    }

    pub fn beta_treat(&self) -> f64 {
        self.beta[self.beta.len() - 1]
    }
}

/// Position of each parameter block in the flat unconstrained vector
/// `[alpha, beta, log sigma_y?, log sigma_m?, gamma?]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub p: usize,
    pub log_sigma_y: Option<usize>,
    pub log_sigma_m: Option<usize>,
    pub gamma: Option<usize>,
    pub dim: usize,
}

impl ParamLayout {
    /// `sample_sigma_*` false means the SD is held fixed and not part of the vector.
    pub fn new(
        p: usize,
        spec: &ModelSpec,
        sample_sigma_y: bool,
        sample_sigma_m: bool,
        gamma: bool,
    ) -> Self {
        let mut next = 2 * p + 1;
        let mut take = |flag: bool, width: usize| {
            flag.then(|| {
                let at = next;
                next += width;
                at
            })
        };
        let log_sigma_y = take(spec.dist_y == Distribution::Continuous && sample_sigma_y, 1);
        let log_sigma_m = take(spec.dist_m == Distribution::Continuous && sample_sigma_m, 1);
        let gamma = take(gamma, 4);
        Self {
            p,
            log_sigma_y,
            log_sigma_m,
            gamma,
            dim: next,
        }
    }

    pub fn alpha_range(&self) -> std::ops::Range<usize> {
        0..self.p + 1
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        self.p + 1..2 * self.p + 1
    }

    /// Names of the constrained parameters, in vector order.
    pub fn names(&self, design: &DesignMatrices) -> Vec<String> {
        let mut names: Vec<String> = design
            .outcome_columns
            .iter()
            .map(|c| format!("alpha_{c}"))
            .chain(design.mediator_columns.iter().map(|c| format!("beta_{c}")))
            .collect();
        if self.log_sigma_y.is_some() {
            names.push("sigma_y".into());
        }
        if self.log_sigma_m.is_some() {
            names.push("sigma_m".into());
        }
        if self.gamma.is_some() {
            names.extend(GAMMA_NAMES.iter().map(|s| s.to_string()));
        }
        names
    }

    /// Maps unconstrained coordinates to the natural scale (exp on log SDs).
    pub fn constrain(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        for idx in [self.log_sigma_y, self.log_sigma_m].into_iter().flatten() {
            out[idx] = x[idx].exp();
        }
    }

    /// Rebuilds a [`ParameterVector`] from a constrained draw. Fixed SDs are
    /// filled from `fixed_sigma_*`.
    pub fn unpack(
        &self,
        constrained: &[f64],
        spec: &ModelSpec,
        fixed_sigma_y: Option<f64>,
        fixed_sigma_m: Option<f64>,
    ) -> ParameterVector {
        let sigma = |idx: Option<usize>, fixed: Option<f64>, dist: Distribution| {
            (dist == Distribution::Continuous)
                .then(|| idx.map(|i| constrained[i]).or(fixed).unwrap_or(1.0))
        };
        ParameterVector {
            alpha: constrained[self.alpha_range()].to_vec(),
            beta: constrained[self.beta_range()].to_vec(),
            sigma_y: sigma(self.log_sigma_y, fixed_sigma_y, spec.dist_y),
            sigma_m: sigma(self.log_sigma_m, fixed_sigma_m, spec.dist_m),
        }
    }

    /// Bias parameters (gamma_0, gamma_A, beta_U, alpha_U) of a constrained draw.
    pub fn gamma(&self, constrained: &[f64]) -> Option<[f64; 4]> {
        self.gamma.map(|g| {
            [
                constrained[g],
                constrained[g + 1],
                constrained[g + 2],
                constrained[g + 3],
            ]
        })
    }

    /// Unconstrained vector for a parameter set.
    pub fn pack(&self, theta: &ParameterVector, gamma: Option<[f64; 4]>) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        x[self.alpha_range()].copy_from_slice(&theta.alpha);
        x[self.beta_range()].copy_from_slice(&theta.beta);
        if let (Some(i), Some(s)) = (self.log_sigma_y, theta.sigma_y) {
            x[i] = s.ln();
        }
        if let (Some(i), Some(s)) = (self.log_sigma_m, theta.sigma_m) {
            x[i] = s.ln();
        }
        if let (Some(g), Some(v)) = (self.gamma, gamma) {
            x[g..g + 4].copy_from_slice(&v);
        }
        x
    }
}
