//! The numerical kernels on their own: lasso at a sparsity ratio, a penalized rank-one
//! SVD, the Procrustes projection and principal angles.
//!
//!     cargo run --example numerics

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparse_fem::numerics::{nearest_orthogonal, penalized_rank1, principal_angles, LassoOptions, LassoProblem};

fn main() -> sparse_fem::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(60, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth = DVector::from_column_slice(&[3.0, -2.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0]);
    let y = &x * &truth + DVector::from_fn(60, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));

    let problem = LassoProblem::from_design(&x, &y)?;
    for ratio in [1.0, 0.6, 0.3] {
        let sol = problem.solve_ratio(ratio, 0.0, &LassoOptions::default())?;
        println!(
            "lasso ratio {ratio}: lambda {:8.3}, kkt {:.1e}, beta {:.2?}",
            sol.lambda,
            problem.kkt_violation(&sol.beta, sol.lambda, 0.0),
            sol.beta.as_slice()
        );
    }

    let u = DVector::from_column_slice(&[1.0, 1.0, 0.0, 0.0, 0.0]).normalize();
    let noise = DMatrix::from_fn(5, 5, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
    let m = &u * u.transpose() * 4.0 + &noise + noise.transpose();
    let r1 = penalized_rank1(&m, 1.2)?;
    println!("penalized rank-one factor with l1 bound 1.2: sigma {:.3}, u {:.3?}", r1.sigma, r1.u.as_slice());

    let a = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = nearest_orthogonal(&a)?;
    println!("Procrustes: |QtQ - I| = {:.1e}", (q.transpose() * &q - DMatrix::<f64>::identity(2, 2)).amax());
    println!("largest angle between span(A) and span(Q): {:.1e}", principal_angles(&a, &q).iter().cloned().fold(0.0, f64::max));
    Ok(())
}
