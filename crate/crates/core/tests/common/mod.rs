#![allow(dead_code)]

pub mod schema;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparse_fem::em::{compute_scatter, ScatterSet, SoftPartition};
use sparse_fem::model::{DlmParameters, ModelVariant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormal `p×d` basis from the QR factor of a Gaussian matrix.
pub fn orthonormal(rng: &mut ChaCha8Rng, p: usize, d: usize) -> DMatrix<f64> {
    gaussian(rng, p, d).qr().q().columns(0, d).into_owned()
}

/// `AAᵗ/m + εI`, symmetric positive definite.
pub fn spd(rng: &mut ChaCha8Rng, m: usize, eps: f64) -> DMatrix<f64> {
    let a = gaussian(rng, m, m + 2);
    let s = &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * eps;
    (&s + s.transpose()) * 0.5
}

/// Random row-stochastic matrix with entries bounded away from zero.
pub fn posteriors(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    let mut t = DMatrix::from_fn(n, k, |_, _| rng.random_range(0.05..1.0));
    for mut row in t.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    t
}

/// Random data with a random soft partition, and its scatter set.
pub fn random_scatter(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize) -> (DMatrix<f64>, SoftPartition, ScatterSet) {
    let mut y = gaussian(rng, n, p);
    for i in 0..n {
        let shift = (i % k) as f64 * 1.5;
        for j in 0..p.min(3) {
            y[(i, j)] += shift * (j + 1) as f64;
        }
    }
    let t = posteriors(rng, n, k);
    let part = SoftPartition::from_posteriors(&y, t).unwrap();
    let sc = compute_scatter(&y, &part).unwrap();
    (y, part, sc)
}

/// Random valid parameters of the general sub-model.
pub fn random_params(rng: &mut ChaCha8Rng, k: usize, p: usize, d: usize) -> DlmParameters {
    let mut pi = DVector::from_fn(k, |_, _| rng.random_range(0.2..1.0));
    pi /= pi.sum();
    DlmParameters {
        variant: ModelVariant::ALL[0],
        proportions: pi,
        latent_means: gaussian(rng, d, k) * 2.0,
        latent_covs: (0..k).map(|_| spd(rng, d, 0.2)).collect(),
        noise_vars: DVector::from_fn(k, |_, _| rng.random_range(0.2..2.0)),
        orientation: orthonormal(rng, p, d),
        center: DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)),
    }
}

/// Dense Gaussian log-density with the full covariance `UΣ_kUᵗ + β_k(I − UUᵗ)`.
pub fn dense_log_density(y: &DVector<f64>, k: usize, params: &DlmParameters) -> f64 {
    let p = params.p();
    let u = &params.orientation;
    let proj = u * u.transpose();
    let cov = u * &params.latent_covs[k] * u.transpose() + (DMatrix::identity(p, p) - &proj) * params.noise_vars[k];
    let mean = &params.center + u * params.latent_means.column(k);
    let chol = cov.cholesky().expect("covariance is positive definite");
    let r = y - mean;
    let z = chol.l().solve_lower_triangular(&r).unwrap();
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared())
}

/// Largest principal angle between two column spans.
pub fn max_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    sparse_fem::numerics::principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

/// Largest angle between the sfem3 output at an inactive bound and the top eigenspace
/// of `S_B`, on one random instance.
pub fn sfem3_inactive_angle(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    use sparse_fem::numerics::{sym_eigen_ordered, PenaltySpec, PmdOptions};
    let p = rng.random_range(4..=20);
    let k = rng.random_range(2..=4usize);
    let d = rng.random_range(1..k);
    let (_, _, sc) = random_scatter(rng, 40 + 5 * p, p, k);
    let bound = (p as f64).sqrt();
    let s = sparse_fem::sparse::sparse_fstep_3(&sc, d, &PenaltySpec::bound(bound), false, &PmdOptions::default()).unwrap();
    let top = sym_eigen_ordered(&sc.between).unwrap().vectors.columns(0, d).into_owned();
    max_angle(&top, &s.orientation)
}

/// Largest angle to the plain F-step subspace for sfem1 at λ = 0 and for sfem2 at
/// λ = 0 with a vanishing ridge, on one random instance.
pub fn unpenalized_angles(rng: &mut ChaCha8Rng) -> (f64, f64) {
    use rand::Rng;
    use sparse_fem::numerics::{LassoOptions, PenaltySpec};
    use sparse_fem::sparse::{sparse_fstep_1, sparse_fstep_2, RegressionOptions};
    let p = rng.random_range(4..=12);
    let k = rng.random_range(2..=4usize);
    let d = rng.random_range(1..k);
    let n = 40 + 8 * p;
    let (_, _, sc) = random_scatter(rng, n, p, k);
    let plain = sparse_fem::em::f_step(&sc, d, 0.0).unwrap().orientation;
    let opts = LassoOptions::default();
    let s1 = sparse_fstep_1(&sc, n, d, &PenaltySpec::lambda(0.0), 0.0, &opts).unwrap();
    let ropts = RegressionOptions { gamma: 0.0, init_gamma: 0.0, ..Default::default() };
    let s2 = sparse_fstep_2(&sc, d, &PenaltySpec::lambda(0.0).with_ridge(1e-6), &ropts, &opts).unwrap();
    (max_angle(&plain, &s1.orientation), max_angle(&plain, &s2.orientation))
}

/// A random lasso instance: design, response, λ (a fraction of λ_max) and ridge ρ.
pub fn random_lasso(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>, f64, f64) {
    use rand::Rng;
    let m = rng.random_range(1..=40);
    let p = rng.random_range(1..=15);
    let x = gaussian(rng, m, p);
    let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
    let lambda_max = 2.0 * (x.transpose() * &y).amax();
    let lambda = lambda_max * rng.random_range(0.0..1.2);
    let rho = if rng.random_bool(0.3) { rng.random_range(0.0..2.0) } else { 0.0 };
    (x, y, lambda, rho)
}

/// Worst subgradient residual of `‖y − Xβ‖² + λ|β|₁ + ρ‖β‖²` at `beta`, from the design.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64, rho: f64) -> f64 {
    let r = y - x * beta;
    (0..beta.len())
        .map(|j| {
            let grad = -2.0 * x.column(j).dot(&r) + 2.0 * rho * beta[j];
            if beta[j] == 0.0 {
                (grad.abs() - lambda).max(0.0)
            } else {
                (grad + lambda * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Run the command-line binary; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, Vec<u8>, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_sparse-fem")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), out.stdout, String::from_utf8_lossy(&out.stderr).into_owned())
}
