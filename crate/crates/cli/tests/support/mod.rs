#![allow(dead_code)]

use causalmed::data::{ColumnRoles, Dataset};
use causalmed::model::Distribution;
use causalmed::model::ModelSpec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, StandardNormal};

/// Known-parameter data-generating process with coefficients ordered as the
/// design columns: `alpha = [a0, a_z.., a_A, a_M]`, `beta = [b0, b_z.., b_A]`.
#[derive(Debug, Clone)]
pub struct Dgp {
    pub n: usize,
    pub q: usize,
    pub spec: ModelSpec,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma_y: f64,
    pub sigma_m: f64,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn simulate(dgp: &Dgp, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = dgp.n;
    let z = DMatrix::from_fn(n, dgp.q, |_, _| normal(&mut rng));
    let mut a = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        a[i] = (rng.random::<f64>() < 0.5) as u8 as f64;
        let mut em = dgp.beta[0] + dgp.beta[dgp.q + 1] * a[i];
        let mut ey = dgp.alpha[0] + dgp.alpha[dgp.q + 1] * a[i];
        for k in 0..dgp.q {
            em += dgp.beta[1 + k] * z[(i, k)];
            ey += dgp.alpha[1 + k] * z[(i, k)];
        }
        m[i] = match dgp.spec.dist_m {
            Distribution::Continuous => em + dgp.sigma_m * normal(&mut rng),
            Distribution::Binary => (rng.random::<f64>() < logistic(em)) as u8 as f64,
        };
        ey += dgp.alpha[dgp.q + 2] * m[i];
        y[i] = match dgp.spec.dist_y {
            Distribution::Continuous => ey + dgp.sigma_y * normal(&mut rng),
            Distribution::Binary => (rng.random::<f64>() < logistic(ey)) as u8 as f64,
        };
    }
    let names: Vec<String> = (1..=dgp.q).map(|k| format!("z{k}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    Dataset::new(ColumnRoles::new("y", "a", "m", &refs), y, a, m, z).expect("valid synthetic data")
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Residual of `raw` after projecting out the columns of `x`, rescaled so
/// that its sum of squares over `n - p` equals `sigma²`.
fn exact_noise(
    x: &DMatrix<f64>,
    raw: nalgebra::DVector<f64>,
    sigma: f64,
) -> nalgebra::DVector<f64> {
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&raw, 1e-14)
        .expect("least squares");
    let e = &raw - x * coef;
    let dof = (x.nrows() - x.ncols()) as f64;
    let scale = sigma / (e.norm_squared() / dof).sqrt();
    e * scale
}

/// Linear-Gaussian data whose least-squares fits reproduce the DGP
/// coefficients and residual SDs exactly. Removes sampling error so that
/// recovery checks measure estimation error only.
pub fn simulate_moment_matched(dgp: &Dgp, seed: u64) -> Dataset {
    assert!(
        dgp.spec.dist_y == Distribution::Continuous && dgp.spec.dist_m == Distribution::Continuous
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (n, q) = (dgp.n, dgp.q);
    let z = DMatrix::from_fn(n, q, |_, _| normal(&mut rng));
    let a: Vec<f64> = (0..n)
        .map(|_| (rng.random::<f64>() < 0.5) as u8 as f64)
        .collect();
    let x_m = DMatrix::from_fn(n, q + 2, |i, j| match j {
        0 => 1.0,
        j if j <= q => z[(i, j - 1)],
        _ => a[i],
    });
    let raw = nalgebra::DVector::from_fn(n, |_, _| normal(&mut rng));
    let m = &x_m * nalgebra::DVector::from_column_slice(&dgp.beta)
        + exact_noise(&x_m, raw, dgp.sigma_m);
    let x_y = DMatrix::from_fn(n, q + 3, |i, j| if j < q + 2 { x_m[(i, j)] } else { m[i] });
    let raw = nalgebra::DVector::from_fn(n, |_, _| normal(&mut rng));
    let y = &x_y * nalgebra::DVector::from_column_slice(&dgp.alpha)
        + exact_noise(&x_y, raw, dgp.sigma_y);
    let names: Vec<String> = (1..=q).map(|k| format!("z{k}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    Dataset::new(
        ColumnRoles::new("y", "a", "m", &refs),
        y.as_slice().to_vec(),
        a,
        m.as_slice().to_vec(),
        z,
    )
    .expect("valid synthetic data")
}
