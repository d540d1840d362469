mod common;

use causalmed::model::{Distribution, ModelSpec};
use causalmed::pipeline::{fit, fit_sensitivity, AnalysisConfig, FitResult};
use causalmed::sampler::SamplerConfig;
use causalmed::sensitivity::{delta_sweep, SensitivitySpec};
use common::{simulate, Dgp};

fn dgp() -> Dgp {
    Dgp {
        n: 150,
        q: 1,
        spec: ModelSpec::canonical(Distribution::Binary, Distribution::Continuous),
        alpha: vec![-0.3, 0.4, 0.6, 0.8],
        beta: vec![0.1, 0.5, 0.9],
        sigma_y: 1.0,
        sigma_m: 1.0,
    }
}

fn config(seed: u64) -> AnalysisConfig {
    AnalysisConfig {
        sampler: SamplerConfig {
            chains: 2,
            warmup: 300,
            samples: 300,
            seed,
            ..SamplerConfig::default()
        },
        ..AnalysisConfig::new(dgp().spec)
    }
}

fn outputs(r: &FitResult) -> (Vec<u8>, Vec<u8>) {
    let mut draws = Vec::new();
    r.draws.write_csv(&mut draws).unwrap();
    let mut effects = Vec::new();
    causalmed::gformula::write_effects_csv(&r.effects, &mut effects).unwrap();
    (draws, effects)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let data = simulate(&dgp(), 21);
    let cfg = config(5);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| outputs(&fit(&data, &cfg).unwrap()))
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn same_seed_reproduces_and_new_seed_differs() {
    let data = simulate(&dgp(), 22);
    let a = outputs(&fit(&data, &config(7)).unwrap());
    let b = outputs(&fit(&data, &config(7)).unwrap());
    let c = outputs(&fit(&data, &config(8)).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_bias_prior_reproduces_base_fit() {
    let data = simulate(&dgp(), 23);
    let cfg = config(9);
    let base = fit(&data, &cfg).unwrap();
    let sens = fit_sensitivity(&data, &cfg, &SensitivitySpec::with_delta(0.0)).unwrap();
    assert_eq!(outputs(&base), outputs(&sens));
    assert_eq!(base.summary, sens.summary);

    let sweep = delta_sweep(&data, &cfg, &SensitivitySpec::default(), &[0.0, 0.5]).unwrap();
    let (d0, s0) = &sweep.summaries[0];
    assert_eq!(*d0, 0.0);
    assert_eq!(s0.as_ref().unwrap(), &base.summary);
    assert!(sweep.summaries[1].1.is_ok());
    assert_eq!(sweep.rows.len(), 14);
}

#[test]
fn sensitivity_fit_carries_bias_draws() {
    let data = simulate(&dgp(), 24);
    let cfg = config(10);
    let r = fit_sensitivity(&data, &cfg, &SensitivitySpec::with_delta(0.5)).unwrap();
    let gamma = r.gamma.as_ref().unwrap();
    assert_eq!(gamma.len(), r.effects.len());
    assert!(gamma.iter().any(|g| g.iter().any(|v| *v != 0.0)));
    for d in &r.effects {
        assert_eq!(d.te, d.nde_control + d.nie_treated);
    }
}

#[test]
fn invalid_config_is_rejected_before_sampling() {
    let data = simulate(&dgp(), 25);
    let mut cfg = config(1);
    cfg.level = 1.5;
    assert_eq!(
        fit(&data, &cfg).unwrap_err().category(),
        causalmed::ErrorCategory::Config
    );
    let mut cfg = config(1);
    cfg.spec = ModelSpec::canonical(Distribution::Continuous, Distribution::Continuous);
    cfg.scale = causalmed::gformula::EffectScale::OddsRatio;
    assert_eq!(
        fit(&data, &cfg).unwrap_err().category(),
        causalmed::ErrorCategory::Config
    );
}
