//! Reference estimators used to cross-check the Bayesian engine: the
//! product-of-coefficients solution for linear models and a quasi-Bayesian
//! simulation estimator built on maximum-likelihood fits.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{build_design, Dataset};
use crate::error::{Error, Result};
use crate::gformula::{
    draw_inputs, effect_draw, summarize, transform_scale, EffectOptions, EffectRow, EffectScale,
    EffectSummary, Standardization, EFFECT_ROWS,
};
use crate::model::{sigmoid, Distribution, ModelSpec, ParameterVector};
use crate::rng::{stream_rng, Stream};

pub const IRLS_TOL: f64 = 1e-10;
pub const IRLS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    QuasiBayes,
    ClosedForm,
}

impl std::str::FromStr for OracleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quasi_bayes" | "quasi-bayes" => Ok(OracleMethod::QuasiBayes),
            "closed_form" | "closed-form" => Ok(OracleMethod::ClosedForm),
            other => Err(Error::Config(format!(
                "unknown oracle method '{other}' (expected quasi_bayes or closed_form)"
            ))),
        }
    }
}

impl std::fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OracleMethod::QuasiBayes => "quasi_bayes",
            OracleMethod::ClosedForm => "closed_form",
        })
    }
}

impl OracleMethod {
    /// Rejects methods that cannot handle `spec`.
    pub fn check(self, spec: &ModelSpec) -> Result<()> {
        if self == OracleMethod::ClosedForm
            && (spec.dist_y != Distribution::Continuous || spec.dist_m != Distribution::Continuous)
        {
            return Err(Error::Config(
                "closed_form needs a continuous outcome and a continuous mediator".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    #[serde(flatten)]
    pub summary: EffectSummary,
}

/// A regression fit with its coefficient covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Residual SD (linear fits only).
    pub sigma: Option<f64>,
    pub iterations: usize,
}

struct Qr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn thin_qr(x: &DMatrix<f64>, what: &str) -> Result<Qr> {
    let (n, k) = x.shape();
    if n < k {
        return Err(Error::Singular(format!(
            "{what}: {n} rows for {k} coefficients"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if let Some(j) = (0..k).find(|&j| !(r[(j, j)].abs() > 1e-10 * scale.max(1e-300))) {
        return Err(Error::Singular(format!(
            "{what}: column {j} is linearly dependent on the others"
        )));
    }
    Ok(Qr { q: qr.q(), r })
}

fn r_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    let k = r.nrows();
    r.solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("nonsingular triangle")
}

fn sandwich(x: &DMatrix<f64>, bread: &DMatrix<f64>, score: &[f64]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut meat = DMatrix::zeros(k, k);
    for (i, s) in score.iter().enumerate() {
        let row = x.row(i).transpose();
        meat += &row * row.transpose() * (s * s);
    }
    bread * meat * bread
}

/// Least squares by QR. `robust` swaps the classical covariance for the
/// HC0 sandwich.
pub fn ols(x: &DMatrix<f64>, y: &[f64], robust: bool) -> Result<RegressionFit> {
    let Qr { q, r } = thin_qr(x, "least squares")?;
    let yv = DVector::from_column_slice(y);
    let coef = r
        .solve_upper_triangular(&(q.transpose() * &yv))
        .expect("nonsingular triangle");
    let resid = &yv - x * &coef;
    let (n, k) = x.shape();
    let df = (n - k).max(1) as f64;
    let s2 = resid.norm_squared() / df;
    let rinv = r_inverse(&r);
    let xtx_inv = &rinv * rinv.transpose();
    let cov = if robust {
        sandwich(x, &xtx_inv, resid.as_slice())
    } else {
        &xtx_inv * s2
    };
    Ok(RegressionFit {
        coef,
        cov,
        sigma: Some(s2.sqrt()),
        iterations: 1,
    })
}

/// Logistic regression by iteratively reweighted least squares.
pub fn logistic_irls(x: &DMatrix<f64>, y: &[f64], robust: bool) -> Result<RegressionFit> {
    let (n, k) = x.shape();
    let mut beta = DVector::zeros(k);
    let mut last_step = f64::INFINITY;
    for it in 1..=IRLS_MAX_ITER {
        let eta = x * &beta;
        let mut xw = x.clone();
        let mut zw = DVector::zeros(n);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-300);
            let sw = w.sqrt();
            xw.row_mut(i).scale_mut(sw);
            zw[i] = sw * (eta[i] + (y[i] - mu) / w);
        }
        // weights collapsing after the first step signal separation
        let Qr { q, r } = match thin_qr(&xw, "logistic regression") {
            Ok(qr) => qr,
            Err(_) if it > 1 => break,
            Err(e) => return Err(e),
        };
        let next = r
            .solve_upper_triangular(&(q.transpose() * &zw))
            .expect("nonsingular triangle");
        last_step = (&next - &beta).amax();
        let scale = 1.0 + next.amax();
        beta = next;
        if !beta.iter().all(|b| b.is_finite()) {
            break;
        }
        if last_step <= IRLS_TOL * scale {
            let rinv = r_inverse(&r);
            let info_inv = &rinv * rinv.transpose();
            let cov = if robust {
                let eta = x * &beta;
                let score: Vec<f64> = (0..n).map(|i| y[i] - sigmoid(eta[i])).collect();
                sandwich(x, &info_inv, &score)
            } else {
                info_inv
            };
            return Ok(RegressionFit {
                coef: beta,
                cov,
                sigma: None,
                iterations: it,
            });
        }
    }
    Err(Error::FitFailed(format!(
        "logistic regression: no convergence after {IRLS_MAX_ITER} iterations \
         (last max coefficient change {last_step:.3e}, max |coefficient| {:.3e}); \
         the outcome may be separated by the predictors",
        beta.amax()
    )))
}

fn fit_block(
    dist: Distribution,
    x: &DMatrix<f64>,
    y: &[f64],
    robust: bool,
) -> Result<RegressionFit> {
    match dist {
        Distribution::Continuous => ols(x, y, robust),
        Distribution::Binary => logistic_irls(x, y, robust),
    }
}

fn normal_row(name: &str, est: f64, se: f64, level: f64) -> EffectRow {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0);
    let lower = est - z * se;
    let upper = est + z * se;
    let prob_positive = if se > 0.0 {
        Normal::new(est, se).expect("positive sd").sf(0.0)
    } else {
        (est > 0.0) as u8 as f64
    };
    EffectRow {
        effect: name.to_string(),
        mean: est,
        sd: se,
        lower,
        upper,
        prob_positive,
        mcse: 0.0,
        excludes_null: lower > 0.0 || upper < 0.0,
    }
}

/// Product-of-coefficients estimates for linear outcome and mediator models
/// with delta-method standard errors and normal intervals.
pub fn closed_form_linear(data: &Dataset, level: f64) -> Result<OracleResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "credible level {level} is not in (0, 1)"
        )));
    }
    let design = build_design(data);
    let med = ols(&design.x_m, data.mediator(), false)?;
    let out = ols(&design.x_y, data.outcome(), false)?;
    let ka = design.x_y.ncols() - 2;
    let km = design.x_y.ncols() - 1;
    let kb = design.x_m.ncols() - 1;
    let (alpha_a, alpha_m, beta_a) = (out.coef[ka], out.coef[km], med.coef[kb]);
    let var_aa = out.cov[(ka, ka)];
    let var_am = out.cov[(km, km)];
    let cov_a_m = out.cov[(ka, km)];
    let var_ba = med.cov[(kb, kb)];
    let nie = beta_a * alpha_m;
    let var_nie = alpha_m * alpha_m * var_ba + beta_a * beta_a * var_am;
    let te = alpha_a + nie;
    let var_te = var_aa + var_nie + 2.0 * beta_a * cov_a_m;
    let values = [
        (alpha_a, var_aa),
        (alpha_a, var_aa),
        (nie, var_nie),
        (nie, var_nie),
        (te, var_te),
        (alpha_a, var_aa),
        (nie, var_nie),
    ];
    let rows = EFFECT_ROWS
        .iter()
        .zip(values)
        .map(|(name, (est, var))| normal_row(name, est, var.max(0.0).sqrt(), level))
        .collect();
    Ok(OracleResult {
        method: OracleMethod::ClosedForm,
        summary: EffectSummary {
            scale: EffectScale::Difference,
            level,
            rows,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiBayesOptions {
    pub nsim: usize,
    pub seed: u64,
    pub level: f64,
    pub scale: EffectScale,
    /// Defaults to expected outcomes with simulated mediators, the usual
    /// quasi-Bayesian convention.
    pub effects: EffectOptions,
    /// Sandwich covariance for the sampling distribution.
    pub robust_se: bool,
    /// Use the point estimates for every simulation.
    pub zero_variance: bool,
}

impl Default for QuasiBayesOptions {
    fn default() -> Self {
        Self {
            nsim: 2000,
            seed: 0,
            level: 0.95,
            scale: EffectScale::Difference,
            effects: EffectOptions {
                expectation_scale: true,
                cde_m: None,
            },
            robust_se: false,
            zero_variance: false,
        }
    }
}

/// Maximum-likelihood fits of both models.
pub fn mle_fits(
    data: &Dataset,
    spec: &ModelSpec,
    robust: bool,
) -> Result<(RegressionFit, RegressionFit)> {
    data.check_binary(spec.outcome_binary(), spec.mediator_binary())?;
    let design = build_design(data);
    let out = fit_block(spec.dist_y, &design.x_y, data.outcome(), robust)?;
    let med = fit_block(spec.dist_m, &design.x_m, data.mediator(), robust)?;
    Ok((out, med))
}

fn mvn_sampler(fit: &RegressionFit, zero: bool) -> Result<Option<DMatrix<f64>>> {
    if zero {
        return Ok(None);
    }
    let sym = (&fit.cov + fit.cov.transpose()) * 0.5;
    match sym.clone().cholesky() {
        Some(c) => Ok(Some(c.l())),
        None => {
            // tiny negative eigenvalues from round-off
            let eig = sym.symmetric_eigen();
            if eig.eigenvalues.min() < -1e-8 * eig.eigenvalues.amax() {
                return Err(Error::Numeric(
                    "coefficient covariance is not positive semidefinite".into(),
                ));
            }
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
            Ok(Some(&eig.eigenvectors * d))
        }
    }
}

fn perturb<R: rand::Rng + ?Sized>(
    coef: &DVector<f64>,
    l: &Option<DMatrix<f64>>,
    rng: &mut R,
) -> Vec<f64> {
    match l {
        None => coef.iter().copied().collect(),
        Some(l) => {
            let z = DVector::from_fn(coef.len(), |_, _| StandardNormal.sample(rng));
            (coef + l * z).iter().copied().collect()
        }
    }
}

/// Simulates parameters from the asymptotic normal distribution of the
/// maximum-likelihood estimates and pushes each through the g-formula over
/// the observed confounders. Residual SDs are held at their estimates.
pub fn quasi_bayes(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &QuasiBayesOptions,
) -> Result<OracleResult> {
    if opts.nsim == 0 {
        return Err(Error::Config("nsim must be at least 1".into()));
    }
    if opts.scale.is_ratio() && !spec.outcome_binary() {
        return Err(Error::Config(format!(
            "the {} scale needs a binary outcome",
            opts.scale
        )));
    }
    let (out, med) = mle_fits(data, spec, opts.robust_se)?;
    let lo = mvn_sampler(&out, opts.zero_variance)?;
    let lm = mvn_sampler(&med, opts.zero_variance)?;
    let draws = (0..opts.nsim)
        .into_par_iter()
        .map(|b| {
            let mut prng = stream_rng(opts.seed, Stream::Oracle, b as u64);
            let theta = ParameterVector {
                alpha: perturb(&out.coef, &lo, &mut prng),
                beta: perturb(&med.coef, &lm, &mut prng),
                sigma_y: out.sigma,
                sigma_m: med.sigma,
            };
            let (resample, mut rng) = draw_inputs(data, opts.seed, b, Standardization::Observed);
            let e = effect_draw(&theta, &resample, data, spec, &mut rng, &opts.effects);
            transform_scale(&e, opts.scale)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = if draws.len() == 1 {
        let d = &draws[0];
        let mut vals: Vec<(String, f64)> = EFFECT_ROWS
            .iter()
            .map(|s| s.to_string())
            .zip(d.rows())
            .collect();
        if let Some(c) = d.cde {
            vals.push((crate::gformula::CDE_ROW.to_string(), c));
        }
        EffectSummary {
            scale: opts.scale,
            level: opts.level,
            rows: vals
                .into_iter()
                .map(|(name, v)| EffectRow {
                    effect: name,
                    mean: v,
                    sd: 0.0,
                    lower: v,
                    upper: v,
                    prob_positive: (v > opts.scale.null_value()) as u8 as f64,
                    mcse: 0.0,
                    excludes_null: v != opts.scale.null_value(),
                })
                .collect(),
        }
    } else {
        summarize(&draws, opts.level)?
    };
    Ok(OracleResult {
        method: OracleMethod::QuasiBayes,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_linear_fit_is_exact() {
        let x = DMatrix::from_fn(20, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64 * 0.37 - 2.0,
            _ => ((i * 7) % 5) as f64,
        });
        let truth = DVector::from_vec(vec![0.5, -1.25, 2.0]);
        let y = &x * &truth;
        let fit = ols(&x, y.as_slice(), false).unwrap();
        assert!((fit.coef - truth).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_design_is_singular() {
        let x = DMatrix::from_fn(10, 3, |i, j| {
            if j == 2 {
                2.0 * i as f64
            } else if j == 1 {
                i as f64
            } else {
                1.0
            }
        });
        let y = vec![1.0; 10];
        assert!(matches!(ols(&x, &y, false), Err(Error::Singular(_))));
    }

    #[test]
    fn separated_logistic_fit_fails() {
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<f64> = (0..10).map(|i| (i >= 5) as u8 as f64).collect();
        let r = logistic_irls(&x, &y, false);
        assert!(matches!(r, Err(Error::FitFailed(_))), "{r:?}");
    }

    #[test]
    fn logistic_fit_solves_score_equations() {
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 4.0 });
        let y = [0., 0., 1., 0., 0., 1., 0., 1., 1., 0., 1., 1.];
        let fit = logistic_irls(&x, &y, false).unwrap();
        let eta = &x * &fit.coef;
        for j in 0..2 {
            let s: f64 = (0..12).map(|i| x[(i, j)] * (y[i] - sigmoid(eta[i]))).sum();
            assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_only_for_linear_models() {
        let s = ModelSpec::canonical(Distribution::Binary, Distribution::Continuous);
        assert!(OracleMethod::ClosedForm.check(&s).is_err());
        assert!(OracleMethod::QuasiBayes.check(&s).is_ok());
    }
}
