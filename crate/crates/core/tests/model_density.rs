mod common;

use common::*;
use nalgebra::DVector;
use rand::Rng;
use sparse_fem::em::e_step;
use sparse_fem::model::{effective_param_count, log_component_density, log_likelihood, param_count, ModelVariant};

#[test]
fn block_density_matches_dense_gaussian() {
    let mut rng = rng(101);
    for _ in 0..200 {
        let k = rng.random_range(2..=4usize);
        let p = rng.random_range(k..=10);
        let d = rng.random_range(1..k);
        let params = random_params(&mut rng, k, p, d);
        let y = DVector::from_fn(p, |_, _| rng.random_range(-4.0..4.0));
        for g in 0..k {
            let got = log_component_density(&y, g, &params).unwrap();
            let want = dense_log_density(&y, g, &params);
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn posteriors_follow_bayes_rule() {
    let mut rng = rng(7);
    let params = random_params(&mut rng, 3, 6, 2);
    let y = gaussian(&mut rng, 40, 6) * 2.0;
    let (part, ll) = e_step(&y, &params, Some(0.0)).unwrap();
    let mut total = 0.0;
    for i in 0..40 {
        let yi = y.row(i).transpose();
        let w: Vec<f64> = (0..3).map(|g| params.proportions[g].ln() + dense_log_density(&yi, g, &params)).collect();
        let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = w.iter().map(|v| (v - m).exp()).sum();
        total += m + z.ln();
        for g in 0..3 {
            let t = (w[g] - m).exp() / z;
            assert!((part.posteriors[(i, g)] - t).abs() < 1e-10);
        }
    }
    assert!((ll - total).abs() < 1e-8 * total.abs());
    assert!((log_likelihood(&y, &params).unwrap() - total).abs() < 1e-8 * total.abs());
}

#[test]
fn parameter_counts_shrink_with_constraints_and_zeros() {
    let counts: Vec<usize> = ModelVariant::ALL.iter().map(|&v| param_count(v, 4, 100, 3).unwrap()).collect();
    assert_eq!(counts, [337, 334, 319, 316, 325, 322, 317, 314, 316, 313, 314, 311]);
    for &v in &ModelVariant::ALL {
        let full = param_count(v, 3, 25, 2).unwrap();
        assert_eq!(effective_param_count(v, 3, 25, 2, 0).unwrap(), full);
        assert_eq!(effective_param_count(v, 3, 25, 2, 30).unwrap(), full - 30);
        assert!(effective_param_count(v, 3, 25, 2, 51).is_err());
    }
    assert!(param_count(ModelVariant::ALL[0], 3, 2, 2).is_err());
}
