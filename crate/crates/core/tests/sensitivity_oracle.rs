mod common;

use causalmed::data::{build_design, ColumnRoles, ConfounderResample, Dataset};
use causalmed::gformula::{draw_inputs, effect_draw, EffectOptions, Standardization};
use causalmed::model::{
    log_likelihood_mediator, log_likelihood_outcome, Distribution, ModelSpec, ParameterVector,
};
use causalmed::rng::{stream_rng, Stream};
use causalmed::sensitivity::{
    marginal_log_likelihood, membership_probabilities, sensitivity_effect_draw,
};
use common::{mean, normal, sd};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn density(dist: Distribution, y: f64, eta: f64, sigma: f64) -> f64 {
    match dist {
        Distribution::Binary => {
            let p = logistic(eta);
            if y == 1.0 {
                p
            } else {
                1.0 - p
            }
        }
        Distribution::Continuous => {
            let z = (y - eta) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
    }
}

fn random_instance(
    rng: &mut ChaCha20Rng,
    n: usize,
    spec: ModelSpec,
) -> (Dataset, ParameterVector, [f64; 4]) {
    let draw = |rng: &mut ChaCha20Rng, dist: Distribution| match dist {
        Distribution::Binary => (rng.random::<f64>() < 0.5) as u8 as f64,
        Distribution::Continuous => normal(rng) * 1.5,
    };
    let y: Vec<f64> = (0..n).map(|_| draw(rng, spec.dist_y)).collect();
    let m: Vec<f64> = (0..n).map(|_| draw(rng, spec.dist_m)).collect();
    let a: Vec<f64> = (0..n)
        .map(|_| (rng.random::<f64>() < 0.5) as u8 as f64)
        .collect();
    let z = DMatrix::from_fn(n, 1, |_, _| normal(rng));
    let data = Dataset::new(ColumnRoles::new("y", "a", "m", &["z"]), y, a, m, z).unwrap();
    let theta = ParameterVector {
        alpha: (0..4).map(|_| normal(rng)).collect(),
        beta: (0..3).map(|_| normal(rng)).collect(),
        sigma_y: (spec.dist_y == Distribution::Continuous).then(|| 0.5 + rng.random::<f64>()),
        sigma_m: (spec.dist_m == Distribution::Continuous).then(|| 0.5 + rng.random::<f64>()),
    };
    let gamma = [
        normal(rng),
        normal(rng),
        2.0 * normal(rng),
        2.0 * normal(rng),
    ];
    (data, theta, gamma)
}

/// Log of the sum over all 2^n latent configurations.
fn enumerated_log_likelihood(
    data: &Dataset,
    theta: &ParameterVector,
    gamma: [f64; 4],
    spec: &ModelSpec,
) -> f64 {
    let n = data.n();
    let z = data.confounders();
    let mut terms = Vec::with_capacity(1 << n);
    for cfg in 0..(1u32 << n) {
        let mut log_w = 0.0;
        for i in 0..n {
            let u = ((cfg >> i) & 1) as f64;
            let a = data.treat()[i];
            let pu = logistic(gamma[0] + gamma[1] * a);
            let eta_m =
                theta.beta[0] + theta.beta[1] * z[(i, 0)] + theta.beta[2] * a + gamma[2] * u;
            let eta_y = theta.alpha[0]
                + theta.alpha[1] * z[(i, 0)]
                + theta.alpha[2] * a
                + theta.alpha[3] * data.mediator()[i]
                + gamma[3] * u;
            log_w += if u == 1.0 { pu.ln() } else { (1.0 - pu).ln() };
            log_w += density(
                spec.dist_m,
                data.mediator()[i],
                eta_m,
                theta.sigma_m.unwrap_or(1.0),
            )
            .ln();
            log_w += density(
                spec.dist_y,
                data.outcome()[i],
                eta_y,
                theta.sigma_y.unwrap_or(1.0),
            )
            .ln();
        }
        terms.push(log_w);
    }
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

#[test]
fn marginal_likelihood_matches_enumeration_up_to_ten_subjects() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for n in 1..=10 {
        for spec in ModelSpec::all() {
            let (data, theta, gamma) = random_instance(&mut rng, n, spec);
            let design = build_design(&data);
            let got = marginal_log_likelihood(&theta, gamma, &design, &data, &spec).unwrap();
            let want = enumerated_log_likelihood(&data, &theta, gamma, &spec);
            assert!(
                (got - want).abs() <= 1e-10,
                "n={n} {spec:?}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn no_latent_effect_gives_base_likelihood() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for spec in ModelSpec::all() {
        let (data, theta, mut gamma) = random_instance(&mut rng, 25, spec);
        gamma[2] = 0.0;
        gamma[3] = 0.0;
        let design = build_design(&data);
        let base = log_likelihood_outcome(&theta, &design, &data, &spec).unwrap()
            + log_likelihood_mediator(&theta, &design, &data, &spec).unwrap();
        let ext = marginal_log_likelihood(&theta, gamma, &design, &data, &spec).unwrap();
        assert!((base - ext).abs() <= 1e-12 * base.abs().max(1.0));
    }
}

#[test]
fn membership_probabilities_follow_bayes_rule() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Continuous);
    let (data, theta, gamma) = random_instance(&mut rng, 1, spec);
    let design = build_design(&data);
    let w = membership_probabilities(&theta, gamma, &design, &data, &spec).unwrap();
    let a = data.treat()[0];
    let z = data.confounders()[(0, 0)];
    let pu = logistic(gamma[0] + gamma[1] * a);
    let joint = |u: f64| {
        let em = theta.beta[0] + theta.beta[1] * z + theta.beta[2] * a + gamma[2] * u;
        let ey = theta.alpha[0]
            + theta.alpha[1] * z
            + theta.alpha[2] * a
            + theta.alpha[3] * data.mediator()[0]
            + gamma[3] * u;
        density(spec.dist_m, data.mediator()[0], em, theta.sigma_m.unwrap())
            * density(spec.dist_y, data.outcome()[0], ey, 1.0)
    };
    let want = pu * joint(1.0) / (pu * joint(1.0) + (1.0 - pu) * joint(0.0));
    assert!((w[0] - want).abs() < 1e-12);
}

/// Expected `p[a][a']` with the arm-specific latent confounder summed out.
/// `M(a')` sees `U(a')` and `Y(a, ·)` sees `U(a)`; when `a = a'` both are
/// the same draw.
fn enumerate_with_latent(theta: &ParameterVector, gamma: [f64; 4], z: &[f64]) -> [[f64; 2]; 2] {
    let mut p = [[0.0; 2]; 2];
    let n = z.len() as f64;
    for a in 0..2 {
        for ap in 0..2 {
            let mut total = 0.0;
            for &zi in z {
                for um in 0..2 {
                    let pum = logistic(gamma[0] + gamma[1] * ap as f64);
                    let wum = if um == 1 { pum } else { 1.0 - pum };
                    let pm = logistic(
                        theta.beta[0]
                            + theta.beta[1] * zi
                            + theta.beta[2] * ap as f64
                            + gamma[2] * um as f64,
                    );
                    for m in 0..2 {
                        let wm = if m == 1 { pm } else { 1.0 - pm };
                        for uy in 0..2 {
                            let wuy = if a == ap {
                                (uy == um) as u8 as f64
                            } else {
                                let puy = logistic(gamma[0] + gamma[1] * a as f64);
                                if uy == 1 {
                                    puy
                                } else {
                                    1.0 - puy
                                }
                            };
                            let py = logistic(
                                theta.alpha[0]
                                    + theta.alpha[1] * zi
                                    + theta.alpha[2] * a as f64
                                    + theta.alpha[3] * m as f64
                                    + gamma[3] * uy as f64,
                            );
                            total += wum * wm * wuy * py;
                        }
                    }
                }
            }
            p[a][ap] = total / n;
        }
    }
    p
}

#[test]
fn latent_confounder_effects_match_enumeration() {
    let z = [-0.8, 0.3, 1.5];
    let data = Dataset::new(
        ColumnRoles::new("y", "a", "m", &["z"]),
        vec![0.0, 1.0, 1.0],
        vec![0.0, 1.0, 0.0],
        vec![1.0, 0.0, 1.0],
        DMatrix::from_column_slice(3, 1, &z),
    )
    .unwrap();
    let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Binary);
    let theta = ParameterVector {
        alpha: vec![-0.4, 0.7, 1.1, 1.6],
        beta: vec![0.2, -0.9, 1.3],
        sigma_y: None,
        sigma_m: None,
    };
    for gamma in [[0.3, 0.0, 0.0, 4.0], [-0.5, 1.2, 1.5, -2.0]] {
        let oracle = enumerate_with_latent(&theta, gamma, &z);
        let reps = 100_000;
        let draws: Vec<_> = (0..reps)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(2, Stream::Effect, b as u64);
                let mut lat = stream_rng(2, Stream::Latent, b as u64);
                sensitivity_effect_draw(
                    &theta,
                    gamma,
                    &ConfounderResample::identity(3),
                    &data,
                    &spec,
                    &mut rng,
                    &mut lat,
                    &EffectOptions {
                        expectation_scale: true,
                        cde_m: None,
                    },
                )
            })
            .collect();
        for d in &draws {
            assert_eq!(d.te, d.nde_control + d.nie_treated);
            assert_eq!(d.te, d.nde_treated + d.nie_control);
        }
        for a in 0..2 {
            for ap in 0..2 {
                let v: Vec<f64> = draws.iter().map(|d| d.p[a][ap]).collect();
                let se = sd(&v) / (reps as f64).sqrt();
                assert!(
                    (mean(&v) - oracle[a][ap]).abs() < 3.0 * se,
                    "{gamma:?} p[{a}][{ap}]"
                );
            }
        }
    }
}

#[test]
fn zero_bias_draws_are_identical_to_base_draws() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for spec in ModelSpec::all() {
        let (data, theta, _) = random_instance(&mut rng, 60, spec);
        for b in 0..10 {
            let opts = EffectOptions {
                expectation_scale: b % 2 == 0,
                cde_m: Some(0.5),
            };
            let (rs, mut r1) = draw_inputs(&data, 77, b, Standardization::Bootstrap);
            let base = effect_draw(&theta, &rs, &data, &spec, &mut r1, &opts);
            let (rs, mut r2) = draw_inputs(&data, 77, b, Standardization::Bootstrap);
            let mut lat = stream_rng(77, Stream::Latent, b as u64);
            let sens = sensitivity_effect_draw(
                &theta, [0.0; 4], &rs, &data, &spec, &mut r2, &mut lat, &opts,
            );
            assert_eq!(base, sens);
        }
    }
}
