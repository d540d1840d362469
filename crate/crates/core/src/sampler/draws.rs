use std::io::Write;

use super::{ChainOutput, DIVERGENCE_WARN_FRACTION};
use crate::error::{Error, Result};

/// Post-warmup draws on the natural parameter scale, chain-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub chains: usize,
    pub samples: usize,
    pub param_names: Vec<String>,
    /// `values[(chain * samples + s) * dim + p]`.
    values: Vec<f64>,
    pub accept_rate: Vec<f64>,
    pub divergence_count: Vec<usize>,
    pub step_size: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub(crate) fn from_chains(
        param_names: Vec<String>,
        samples: usize,
        outputs: Vec<ChainOutput>,
    ) -> Self {
        let chains = outputs.len();
        let mut values = Vec::with_capacity(chains * samples * param_names.len());
        let mut accept_rate = Vec::with_capacity(chains);
        let mut divergence_count = Vec::with_capacity(chains);
        let mut step_size = Vec::with_capacity(chains);
        let mut warnings = Vec::new();
        for (c, out) in outputs.into_iter().enumerate() {
            values.extend(out.values);
            accept_rate.push(out.accept_rate);
            step_size.push(out.step_size);
            if out.divergences as f64 > DIVERGENCE_WARN_FRACTION * samples as f64 {
                warnings.push(format!(
                    "chain {c}: {} of {samples} post-warmup transitions diverged",
                    out.divergences
                ));
            }
            divergence_count.push(out.divergences);
        }
        Self {
            chains,
            samples,
            param_names,
            values,
            accept_rate,
            divergence_count,
            step_size,
            warnings,
        }
    }

    /// Builds draws from explicit per-chain matrices (`chains[c][s][p]`).
    pub fn from_values(param_names: Vec<String>, chains: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dim = param_names.len();
        let samples = chains.first().map_or(0, |c| c.len());
        if chains
            .iter()
            .any(|c| c.len() != samples || c.iter().any(|d| d.len() != dim))
        {
            return Err(Error::Dimension("ragged draw array".into()));
        }
        Ok(Self {
            chains: chains.len(),
            samples,
            param_names,
            values: chains.iter().flatten().flatten().copied().collect(),
            accept_rate: vec![f64::NAN; chains.len()],
            divergence_count: vec![0; chains.len()],
            step_size: vec![f64::NAN; chains.len()],
            warnings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains * self.samples
    }

    pub fn draw(&self, chain: usize, sample: usize) -> &[f64] {
        let d = self.dim();
        let at = (chain * self.samples + sample) * d;
        &self.values[at..at + d]
    }

    /// Draw by flat chain-major index.
    pub fn flat(&self, b: usize) -> &[f64] {
        let d = self.dim();
        &self.values[b * d..(b + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim().max(1))
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// One parameter's draws split by chain.
    pub fn param_chains(&self, p: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| (0..self.samples).map(|s| self.draw(c, s)[p]).collect())
            .collect()
    }

    /// One parameter's draws pooled over chains.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.iter().map(|d| d[p]).collect()
    }

    pub fn total_divergences(&self) -> usize {
        self.divergence_count.iter().sum()
    }

    /// One row per draw: parameter columns, then `chain` and `iteration`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = self.param_names.clone();
        header.push("chain".into());
        header.push("iteration".into());
        wtr.write_record(&header)?;
        for c in 0..self.chains {
            for s in 0..self.samples {
                let mut rec: Vec<String> = self.draw(c, s).iter().map(|v| v.to_string()).collect();
                rec.push(c.to_string());
                rec.push(s.to_string());
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}
