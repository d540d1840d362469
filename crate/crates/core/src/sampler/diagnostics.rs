//! Convergence diagnostics: split R-hat and autocorrelation-based ESS.
//!
//! R-hat < 1.01 and ESS > 400 are the report-level thresholds.

use super::PosteriorDraws;

pub const RHAT_WARN: f64 = 1.01;
pub const ESS_WARN: f64 = 400.0;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split R-hat of one parameter: each chain is halved (a middle draw of an
/// odd-length chain is dropped) and the between/within variance ratio of the
/// halves is returned. Zero within-half variance gives `+∞`.
pub fn split_rhat_chains(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if n < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[c.len() - n..]])
        .collect();
    let m = halves.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let b = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, &mu)| sample_var(h, mu))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return f64::INFINITY;
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (var_plus / w).sqrt()
}

pub fn split_rhat(draws: &PosteriorDraws) -> Vec<f64> {
    (0..draws.dim())
        .map(|p| split_rhat_chains(&draws.param_chains(p)))
        .collect()
}

/// Effective sample size of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// The raw estimate exceeded chains × samples (or the parameter was
    /// constant) and was capped.
    pub capped: bool,
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag)
        .map(|i| (x[i] - m) * (x[i + lag] - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence truncation.
pub fn ess_chains(chains: &[Vec<f64>]) -> Ess {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let m = chains.len();
    let total = (m * n) as f64;
    if n < 4 {
        return Ess {
            value: total,
            capped: true,
        };
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov0: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| autocov(c, mu, 0))
        .collect();
    let mean_var = mean(&acov0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let g = mean(&means);
        var_plus += means.iter().map(|x| (x - g).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 0.0) || !(mean_var > 0.0) {
        return Ess {
            value: total,
            capped: true,
        };
    }
    let rho_at = |lag: usize| -> f64 {
        let acov_t = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (mean_var - acov_t) / var_plus
    };

    let mut rho = vec![0.0; n + 1];
    rho[0] = 1.0;
    let mut t = 0usize;
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    // initial positive sequence over paired lags
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        rho[t + 1] = rho_odd;
        t += 2;
        rho_even = rho_at(t);
        rho_odd = rho_at(t + 1);
        if rho_even + rho_odd >= 0.0 {
            rho[t] = rho_even;
            rho[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t] = rho_even;
    }
    // monotone: pair sums must not increase
    let mut k = 1;
    while k + 2 <= max_t {
        let prev = rho[k - 1] + rho[k];
        if rho[k + 1] + rho[k + 2] > prev {
            rho[k + 1] = prev / 2.0;
            rho[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t]).max(1.0 / total.log10());
    let raw = total / tau;
    if raw > total {
        Ess {
            value: total,
            capped: true,
        }
    } else {
        Ess {
            value: raw,
            capped: false,
        }
    }
}

pub fn effective_sample_size(draws: &PosteriorDraws) -> Vec<Ess> {
    (0..draws.dim())
        .map(|p| ess_chains(&draws.param_chains(p)))
        .collect()
}

/// Monte Carlo standard error of a posterior mean.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    if all.len() < 2 {
        return 0.0;
    }
    let sd = sample_var(&all, mean(&all)).sqrt();
    sd / ess_chains(chains).value.sqrt()
}
