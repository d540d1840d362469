mod common;

use causalmed::data::build_design;
use causalmed::model::{
    default_priors, log_posterior_and_gradient, Distribution, FixedSigmas, ModelSpec,
    ParameterVector, Posterior,
};
use causalmed::sampler::LogDensity;
use causalmed::sensitivity::{build_sensitivity_model, BiasPriorShape, SensitivitySpec};
use common::{simulate, Dgp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn dgp(spec: ModelSpec) -> Dgp {
    Dgp {
        n: 40,
        q: 2,
        spec,
        alpha: vec![-0.3, 0.4, -0.2, 0.8, 0.5],
        beta: vec![0.2, -0.5, 0.3, 1.0],
        sigma_y: 1.1,
        sigma_m: 0.8,
    }
}

fn central_difference<T: LogDensity>(t: &T, x: &[f64], i: usize) -> f64 {
    let h = 1e-5 * x[i].abs().max(1.0);
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    // fourth-order stencil
    let mut xp2 = x.to_vec();
    let mut xm2 = x.to_vec();
    xp2[i] += 2.0 * h;
    xm2[i] -= 2.0 * h;
    let f = |p: &[f64], g: &mut [f64]| t.log_density_grad(p, g);
    (-f(&xp2, &mut g) + 8.0 * f(&xp, &mut g) - 8.0 * f(&xm, &mut g) + f(&xm2, &mut g)) / (12.0 * h)
}

fn check_gradient<T: LogDensity>(t: &T, rng: &mut ChaCha20Rng, points: usize) {
    for _ in 0..points {
        let x: Vec<f64> = (0..t.dim())
            .map(|_| rng.random::<f64>() * 1.6 - 0.8)
            .collect();
        let mut g = vec![0.0; x.len()];
        let lp = t.log_density_grad(&x, &mut g);
        assert!(lp.is_finite());
        for i in 0..x.len() {
            let fd = central_difference(t, &x, i);
            let rel = (g[i] - fd).abs() / fd.abs().max(1.0);
            assert!(
                rel <= 1e-6,
                "coordinate {i}: analytic {} vs numeric {fd}",
                g[i]
            );
        }
    }
}

#[test]
fn posterior_gradient_matches_finite_differences_for_every_model() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for (k, spec) in ModelSpec::all().into_iter().enumerate() {
        let data = simulate(&dgp(spec), 10 + k as u64);
        let design = build_design(&data);
        let priors = default_priors(design.p(), &spec).unwrap();
        let post = Posterior::new(&data, &design, spec, &priors).unwrap();
        check_gradient(&post, &mut rng, 20);
    }
}

#[test]
fn extended_gradient_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for spec in ModelSpec::all() {
        let data = simulate(&dgp(spec), 20);
        let design = build_design(&data);
        let priors = default_priors(design.p(), &spec).unwrap();
        for shape in [BiasPriorShape::Normal, BiasPriorShape::Uniform] {
            let mut sens = SensitivitySpec::with_delta(0.7);
            sens.prior_shape = shape;
            let model = build_sensitivity_model(
                &data,
                &design,
                spec,
                &priors,
                &sens,
                FixedSigmas::default(),
            )
            .unwrap();
            check_gradient(&model, &mut rng, 20);
        }
    }
}

#[test]
fn natural_scale_entry_point_agrees_with_sampler_target() {
    let spec = ModelSpec::canonical(Distribution::Continuous, Distribution::Binary);
    let data = simulate(&dgp(spec), 30);
    let design = build_design(&data);
    let priors = default_priors(design.p(), &spec).unwrap();
    let post = Posterior::new(&data, &design, spec, &priors).unwrap();
    let theta = ParameterVector {
        alpha: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        beta: vec![-0.1, 0.0, 0.2, 0.3],
        sigma_y: Some(1.3),
        sigma_m: None,
    };
    let (lp, grad) = log_posterior_and_gradient(&theta, &design, &data, &spec, &priors).unwrap();
    let x = post.layout().pack(&theta, None);
    let mut g = vec![0.0; x.len()];
    assert_eq!(lp, post.log_density_grad(&x, &mut g));
    assert_eq!(grad, g);
    let bad = ParameterVector {
        sigma_y: Some(-1.0),
        ..theta
    };
    assert_eq!(
        log_posterior_and_gradient(&bad, &design, &data, &spec, &priors)
            .unwrap()
            .0,
        f64::NEG_INFINITY
    );
}
