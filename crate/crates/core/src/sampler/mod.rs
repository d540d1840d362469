//! Multi-chain gradient-based posterior sampling.
//!
//! The kernel is the multinomial No-U-Turn sampler with the generalized
//! turning criterion, step size tuned by dual averaging during warmup and an
//! optional windowed diagonal mass matrix. Each chain owns a generator seeded
//! from `(seed, chain index)`, so draws are identical whether chains run
//! serially or on a thread pool.

mod adapt;
pub mod diagnostics;
mod draws;
mod nuts;

use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng, Stream};

pub use diagnostics::{effective_sample_size, split_rhat, Ess};
pub use draws::PosteriorDraws;

/// A differentiable log-density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log-density at `x` (up to a constant), writing its gradient into
    /// `grad`. Non-finite values mean "outside the support".
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }

    /// Maps an unconstrained point to the stored (natural-scale) parameters.
    fn constrain(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Maximum tree depth; trajectories have at most 2^depth leapfrog steps.
    pub max_step_doublings: usize,
    /// Adapt a diagonal mass matrix during warmup.
    #[serde(default)]
    pub adapt_mass: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 4000,
            samples: 4000,
            seed: 0,
            target_accept: 0.8,
            max_step_doublings: 10,
            adapt_mass: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup == 0 || self.samples == 0 {
            return Err(Error::Config(
                "chains, warmup and samples must all be at least 1".into(),
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_step_doublings == 0 {
            return Err(Error::Config(
                "max_step_doublings must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Starting-point policy for each chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Independent N(0, sd²) draws per coordinate, retried until finite.
    Jitter { sd: f64 },
    /// The same point for every chain.
    Fixed(Vec<f64>),
}

impl Default for Init {
    fn default() -> Self {
        Init::Jitter { sd: 0.1 }
    }
}

const INIT_ATTEMPTS: usize = 100;
/// Post-warmup divergence share above which a warning is recorded.
pub const DIVERGENCE_WARN_FRACTION: f64 = 0.10;

fn initial_point<T: LogDensity + ?Sized>(
    target: &T,
    init: &Init,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    let finite = |x: &[f64], grad: &mut [f64]| {
        target.log_density_grad(x, grad).is_finite() && grad.iter().all(|g| g.is_finite())
    };
    match init {
        Init::Fixed(x) => {
            if x.len() != dim {
                return Err(Error::Dimension(format!(
                    "initial point has {} coordinates, target has {dim}",
                    x.len()
                )));
            }
            if finite(x, &mut grad) {
                Ok(x.clone())
            } else {
                Err(Error::Initialization { attempts: 1 })
            }
        }
        Init::Jitter { sd } => {
            let normal = Normal::new(0.0, *sd).map_err(|e| Error::Config(e.to_string()))?;
            for _ in 0..INIT_ATTEMPTS {
                let x: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
                if finite(&x, &mut grad) {
                    return Ok(x);
                }
            }
            Err(Error::Initialization {
                attempts: INIT_ATTEMPTS,
            })
        }
    }
}

pub(crate) struct ChainOutput {
    pub values: Vec<f64>,
    pub accept_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    init: &Init,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = stream_rng(config.seed, Stream::Chain, chain as u64);
    let x0 = initial_point(target, init, &mut rng)?;
    let mut kernel = nuts::Nuts::new(target, x0, config.max_step_doublings);
    let mut adapter = adapt::Adapter::new(target.dim(), config, kernel.initial_step_size(&mut rng));
    kernel.set_step_size(adapter.step_size());

    for it in 0..config.warmup {
        let stats = kernel.transition(&mut rng);
        if let Some(change) = adapter.observe(it, kernel.position(), stats.accept_stat) {
            if let Some(inv_mass) = change.inv_mass {
                kernel.set_inv_mass(inv_mass);
                let eps = kernel.initial_step_size(&mut rng);
                adapter.restart(eps);
            }
        }
        kernel.set_step_size(adapter.step_size());
    }
    kernel.set_step_size(adapter.final_step_size());

    let dim = target.dim();
    let mut values = Vec::with_capacity(config.samples * dim);
    let mut buf = Vec::with_capacity(dim);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    for _ in 0..config.samples {
        let stats = kernel.transition(&mut rng);
        accept_sum += stats.accept_stat;
        divergences += stats.diverging as usize;
        target.constrain(kernel.position(), &mut buf);
        values.extend_from_slice(&buf);
    }
    Ok(ChainOutput {
        values,
        accept_rate: accept_sum / config.samples as f64,
        divergences,
        step_size: kernel.step_size(),
    })
}

/// Runs `config.chains` independent chains on the current rayon pool.
pub fn run_chains<T: LogDensity + ?Sized>(
    target: &T,
    init: &Init,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, init, config, c))
        .collect::<Result<_>>()?;
    Ok(PosteriorDraws::from_chains(
        target.param_names(),
        config.samples,
        outputs,
    ))
}
