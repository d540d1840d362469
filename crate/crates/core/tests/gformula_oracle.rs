mod common;

use causalmed::data::{bootstrap_confounders, ColumnRoles, ConfounderResample, Dataset};
use causalmed::gformula::{
    draw_inputs, effect_draw, transform_scale, EffectDraw, EffectOptions, EffectScale,
    Standardization,
};
use causalmed::model::{Distribution, ModelSpec, ParameterVector};
use causalmed::rng::{stream_rng, Stream};
use common::{mean, sd};
use nalgebra::DMatrix;
use rayon::prelude::*;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn three_subjects() -> Dataset {
    Dataset::new(
        ColumnRoles::new("y", "a", "m", &["z"]),
        vec![0.0, 1.0, 1.0],
        vec![0.0, 1.0, 0.0],
        vec![1.0, 0.0, 1.0],
        DMatrix::from_column_slice(3, 1, &[-0.8, 0.3, 1.5]),
    )
    .unwrap()
}

/// Expected `p[a][a']` by summing over every joint configuration of the
/// three mediators and three outcomes, weighted by model probabilities.
fn enumerate_binary(theta: &ParameterVector, z: &[f64]) -> [[f64; 2]; 2] {
    let n = z.len();
    let mut p = [[0.0; 2]; 2];
    for a in 0..2 {
        for ap in 0..2 {
            let mut total = 0.0;
            for mcfg in 0..(1u32 << n) {
                for ycfg in 0..(1u32 << n) {
                    let mut w = 1.0;
                    let mut ysum = 0.0;
                    for i in 0..n {
                        let mi = ((mcfg >> i) & 1) as f64;
                        let yi = ((ycfg >> i) & 1) as f64;
                        let pm = logistic(
                            theta.beta[0] + theta.beta[1] * z[i] + theta.beta[2] * ap as f64,
                        );
                        let py = logistic(
                            theta.alpha[0]
                                + theta.alpha[1] * z[i]
                                + theta.alpha[2] * a as f64
                                + theta.alpha[3] * mi,
                        );
                        w *= if mi == 1.0 { pm } else { 1.0 - pm };
                        w *= if yi == 1.0 { py } else { 1.0 - py };
                        ysum += yi;
                    }
                    total += w * ysum / n as f64;
                }
            }
            p[a][ap] = total;
        }
    }
    p
}

#[test]
fn binary_potential_outcome_means_match_enumeration() {
    let data = three_subjects();
    let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Binary);
    let theta = ParameterVector {
        alpha: vec![-0.4, 0.7, 1.1, 1.6],
        beta: vec![0.2, -0.9, 1.3],
        sigma_y: None,
        sigma_m: None,
    };
    let oracle = enumerate_binary(&theta, &[-0.8, 0.3, 1.5]);
    let reps = 100_000;
    let draws: Vec<[[f64; 2]; 2]> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(5, Stream::Effect, b as u64);
            let rs = ConfounderResample::identity(3);
            effect_draw(
                &theta,
                &rs,
                &data,
                &spec,
                &mut rng,
                &EffectOptions::default(),
            )
            .p
        })
        .collect();
    for a in 0..2 {
        for ap in 0..2 {
            let v: Vec<f64> = draws.iter().map(|p| p[a][ap]).collect();
            let se = sd(&v) / (reps as f64).sqrt();
            assert!(
                (mean(&v) - oracle[a][ap]).abs() < 3.0 * se,
                "p[{a}][{ap}]: simulated {} vs enumerated {}",
                mean(&v),
                oracle[a][ap]
            );
        }
    }
}

#[test]
fn bootstrap_standardization_matches_enumeration_over_rows() {
    // Averaging over uniform row resamples leaves the expectation unchanged.
    let data = three_subjects();
    let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Binary);
    let theta = ParameterVector {
        alpha: vec![0.3, -1.2, 0.8, -0.7],
        beta: vec![-0.5, 1.1, 0.9],
        sigma_y: None,
        sigma_m: None,
    };
    let oracle = enumerate_binary(&theta, &[-0.8, 0.3, 1.5]);
    let reps = 100_000;
    let opts = EffectOptions {
        expectation_scale: true,
        cde_m: None,
    };
    let draws: Vec<[[f64; 2]; 2]> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let (rs, mut rng) = draw_inputs(&data, 8, b, Standardization::Bootstrap);
            effect_draw(&theta, &rs, &data, &spec, &mut rng, &opts).p
        })
        .collect();
    for a in 0..2 {
        for ap in 0..2 {
            let v: Vec<f64> = draws.iter().map(|p| p[a][ap]).collect();
            let se = sd(&v) / (reps as f64).sqrt();
            assert!((mean(&v) - oracle[a][ap]).abs() < 3.0 * se);
        }
    }
}

fn gaussian_data(n: usize) -> Dataset {
    Dataset::new(
        ColumnRoles::new("y", "a", "m", &["z"]),
        vec![0.0; n],
        (0..n).map(|i| (i % 2) as f64).collect(),
        vec![0.0; n],
        DMatrix::from_fn(n, 1, |i, _| ((i * 37) % 101) as f64 / 50.0 - 1.0),
    )
    .unwrap()
}

#[test]
fn linear_gaussian_effects_match_product_of_coefficients() {
    let data = gaussian_data(400);
    let spec = ModelSpec::canonical(Distribution::Continuous, Distribution::Continuous);
    let (alpha_a, alpha_m, beta_a) = (0.3, 0.5, 1.0);
    let theta = ParameterVector {
        alpha: vec![0.2, 0.4, alpha_a, alpha_m],
        beta: vec![-0.1, 0.6, beta_a],
        sigma_y: Some(1.0),
        sigma_m: Some(1.0),
    };
    let reps = 4000;
    let draws: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let (rs, mut rng) = draw_inputs(&data, 3, b, Standardization::Bootstrap);
            effect_draw(
                &theta,
                &rs,
                &data,
                &spec,
                &mut rng,
                &EffectOptions::default(),
            )
        })
        .collect();
    let check = |vals: Vec<f64>, target: f64, what: &str| {
        let se = sd(&vals) / (vals.len() as f64).sqrt();
        assert!(
            (mean(&vals) - target).abs() < 3.0 * se,
            "{what}: {} vs {target}",
            mean(&vals)
        );
    };
    check(
        draws.iter().map(|d| d.te).collect(),
        alpha_a + alpha_m * beta_a,
        "te",
    );
    check(
        draws.iter().map(|d| d.nie_control).collect(),
        alpha_m * beta_a,
        "nie_control",
    );
    check(
        draws.iter().map(|d| d.nie_treated).collect(),
        alpha_m * beta_a,
        "nie_treated",
    );
    check(
        draws.iter().map(|d| d.nde_control).collect(),
        alpha_a,
        "nde_control",
    );
}

#[test]
fn null_model_effects_vanish_in_expectation() {
    let data = gaussian_data(200);
    let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Continuous);
    let theta = ParameterVector {
        alpha: vec![0.2, 0.4, 0.0, 0.0],
        beta: vec![-0.1, 0.6, 0.7],
        sigma_y: None,
        sigma_m: Some(1.0),
    };
    let reps = 4000;
    let te: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let (rs, mut rng) = draw_inputs(&data, 4, b, Standardization::Bootstrap);
            effect_draw(
                &theta,
                &rs,
                &data,
                &spec,
                &mut rng,
                &EffectOptions::default(),
            )
            .te
        })
        .collect();
    assert!(mean(&te).abs() < 3.0 * sd(&te) / (reps as f64).sqrt());
}

#[test]
fn relabeling_treatment_negates_and_inverts_effects() {
    // Under relabeling, the reparameterized model has
    // alpha0' = alpha0 + alpha_A, alpha_A' = -alpha_A and likewise for beta.
    let data = gaussian_data(300);
    let spec = ModelSpec::canonical(Distribution::Binary, Distribution::Binary);
    let theta = ParameterVector {
        alpha: vec![-0.6, 0.4, 0.9, 0.8],
        beta: vec![-0.2, 0.5, 1.2],
        sigma_y: None,
        sigma_m: None,
    };
    let swapped = ParameterVector {
        alpha: vec![-0.6 + 0.9, 0.4, -0.9, 0.8],
        beta: vec![-0.2 + 1.2, 0.5, -1.2],
        sigma_y: None,
        sigma_m: None,
    };
    let relabeled = data.relabel_treatment();
    let opts = EffectOptions {
        expectation_scale: true,
        cde_m: None,
    };
    let reps = 3000;
    // independent seeds keep the two estimates uncorrelated
    let run = |th: &ParameterVector, d: &Dataset, seed: u64| -> Vec<_> {
        (0..reps)
            .into_par_iter()
            .map(|b| {
                let (rs, mut rng) = draw_inputs(d, seed, b, Standardization::Bootstrap);
                effect_draw(th, &rs, d, &spec, &mut rng, &opts)
            })
            .collect()
    };
    let orig = run(&theta, &data, 12);
    let flip = run(&swapped, &relabeled, 13);
    type Get = fn(&EffectDraw) -> f64;
    let pairs: [(Get, Get); 3] = [
        (|d| d.te, |d| d.te),
        (|d| d.nde_control, |d| d.nde_treated),
        (|d| d.nie_control, |d| d.nie_treated),
    ];
    for (f, g) in pairs {
        let a: Vec<f64> = orig.iter().map(f).collect();
        let b: Vec<f64> = flip.iter().map(g).collect();
        let se = ((sd(&a).powi(2) + sd(&b).powi(2)) / reps as f64).sqrt();
        assert!(
            (mean(&a) + mean(&b)).abs() < 3.0 * se,
            "{} vs {}",
            mean(&a),
            mean(&b)
        );
    }
    let rr: Vec<f64> = orig
        .iter()
        .map(|d| transform_scale(d, EffectScale::RiskRatio).unwrap().te.ln())
        .collect();
    let rr_flip: Vec<f64> = flip
        .iter()
        .map(|d| transform_scale(d, EffectScale::RiskRatio).unwrap().te.ln())
        .collect();
    let se = ((sd(&rr).powi(2) + sd(&rr_flip).powi(2)) / reps as f64).sqrt();
    assert!((mean(&rr) + mean(&rr_flip)).abs() < 3.0 * se);
}

#[test]
fn bootstrap_index_frequencies_are_multinomial() {
    let n = 1000;
    let data = gaussian_data(n);
    let resamples = 1000;
    let mut counts = vec![0usize; n];
    for b in 0..resamples {
        let mut rng = stream_rng(99, Stream::Bootstrap, b);
        let rs = bootstrap_confounders(&data, b, &mut rng);
        assert_eq!(rs.rows.len(), n);
        for &r in &rs.rows {
            counts[r] += 1;
        }
    }
    // per resample each index appears Binomial(n, 1/n) times; summed over
    // resamples the mean is `resamples` with variance resamples·(1 − 1/n)
    let expected = resamples as f64;
    let band = 3.0 * (resamples as f64 * (1.0 - 1.0 / n as f64)).sqrt();
    let inside = counts
        .iter()
        .filter(|&&c| (c as f64 - expected).abs() <= band)
        .count();
    assert!(
        inside as f64 >= 0.99 * n as f64,
        "{inside} of {n} inside the band"
    );
}

#[test]
fn bootstrap_rows_are_observed_rows() {
    let data = gaussian_data(50);
    let mut rng = stream_rng(1, Stream::Bootstrap, 0);
    let rs = bootstrap_confounders(&data, 0, &mut rng);
    let z = rs.resolve(&data);
    for (i, &r) in rs.rows.iter().enumerate() {
        assert_eq!(z.row(i), data.confounders().row(r));
    }
}
