mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use sparse_fem::data::{center, clustering_error, read_csv_from, simulate, write_csv_to, Dataset, SimSpec};
use sparse_fem::em::SoftPartition;
use sparse_fem::model::{effective_param_count, log_likelihood, param_count, ModelVariant};
use sparse_fem::numerics::{lasso_solve, nearest_orthogonal, PenaltySpec};
use sparse_fem::selection::bic_value;
use sparse_fem::sparse::soft_factors;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn lasso_meets_optimality_conditions(seed in any::<u64>()) {
        let (x, y, lambda, rho) = random_lasso(&mut rng(seed));
        let beta = lasso_solve(&x, &y, &PenaltySpec::lambda(lambda).with_ridge(rho)).unwrap();
        prop_assert!(kkt_residual(&x, &y, &beta, lambda, rho) <= 1e-6);
    }

    #[test]
    fn lasso_l1_norm_shrinks_with_lambda(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (x, y, lambda, _) = random_lasso(&mut rng(seed));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let l1 = |t: f64| lasso_solve(&x, &y, &PenaltySpec::lambda(lambda * t)).unwrap().lp_norm(1);
        prop_assert!(l1(lo) >= l1(hi) - 1e-6);
    }

    #[test]
    fn procrustes_output_is_orthonormal(seed in any::<u64>(), p in 2usize..12, d in 1usize..6) {
        prop_assume!(d <= p);
        let m = gaussian(&mut rng(seed), p, d);
        let r = nearest_orthogonal(&m).unwrap();
        prop_assert!((r.transpose() * &r - DMatrix::identity(d, d)).amax() < 1e-10);
    }

    #[test]
    fn clustering_error_ignores_label_names(
        truth in prop::collection::vec(0usize..4, 1..60),
        noise in prop::collection::vec(0usize..4, 60),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let pred: Vec<usize> = truth.iter().zip(&noise).map(|(&t, &e)| if e == 0 { (t + 1) % 4 } else { t }).collect();
        let base = clustering_error(&pred, &truth, 4).unwrap();
        let renamed: Vec<usize> = pred.iter().map(|&l| perm[l]).collect();
        prop_assert_eq!(clustering_error(&renamed, &truth, 4).unwrap(), base);
        prop_assert_eq!(clustering_error(&truth, &pred, 4).unwrap(), base);
        let same: Vec<usize> = truth.iter().map(|&l| perm[l]).collect();
        prop_assert_eq!(clustering_error(&same, &truth, 4).unwrap(), 0.0);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn constant_predictor_error_is_bounded(k in 2usize..6, per in 1usize..20) {
        let truth: Vec<usize> = (0..k * per).map(|i| i % k).collect();
        let e = clustering_error(&vec![0; k * per], &truth, k).unwrap();
        prop_assert!((e - (1.0 - 1.0 / k as f64)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_preserves_values(seed in any::<u64>(), n in 1usize..20, p in 1usize..6, with_labels: bool) {
        let mut r = rng(seed);
        let mut ds = Dataset::new(gaussian(&mut r, n, p) * 1e3);
        if with_labels {
            ds.labels = Some((0..n).map(|i| i % 3).collect());
        }
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &ds).unwrap();
        let label = with_labels.then(|| sparse_fem::data::LabelColumn::Name("label".into()));
        let back = read_csv_from(buf.as_slice(), true, label.as_ref()).unwrap();
        prop_assert_eq!(&back.y, &ds.y);
        prop_assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn soft_factors_reproduce_scatter(seed in any::<u64>(), n in 4usize..40, p in 2usize..6, k in 1usize..4) {
        let mut r = rng(seed);
        let y = gaussian(&mut r, n, p);
        let part = SoftPartition::from_posteriors(&y, posteriors(&mut r, n, k)).unwrap();
        let sc = sparse_fem::em::compute_scatter(&y, &part).unwrap();
        let f = soft_factors(&y, &part).unwrap();
        prop_assert!((&f.h_w * f.h_w.transpose() - &sc.within).amax() < 1e-10);
        prop_assert!((&f.h_b * f.h_b.transpose() - &sc.between).amax() < 1e-10);
    }

    #[test]
    fn likelihood_ignores_the_basis_of_the_subspace(seed in any::<u64>()) {
        let mut r = rng(seed);
        let params = random_params(&mut r, 3, 6, 2);
        let y = gaussian(&mut r, 20, 6) * 2.0;
        let q = orthonormal(&mut r, 2, 2);
        let mut rotated = params.clone();
        rotated.orientation = &params.orientation * &q;
        rotated.latent_means = q.transpose() * &params.latent_means;
        rotated.latent_covs = params.latent_covs.iter().map(|s| q.transpose() * s * &q).collect();
        let a = log_likelihood(&y, &params).unwrap();
        let b = log_likelihood(&y, &rotated).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        let doubled = DMatrix::from_fn(40, 6, |i, j| y[(i % 20, j)]);
        prop_assert!((log_likelihood(&doubled, &params).unwrap() - 2.0 * a).abs() <= 1e-8 * a.abs());
    }

    #[test]
    fn bic_ranking_ignores_a_loglik_shift(
        logliks in prop::collection::vec(-1e4f64..0.0, 2..8),
        shift in -1e3f64..1e3,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut r = rng(seed);
        let params: Vec<usize> = logliks.iter().map(|_| r.random_range(10..300)).collect();
        let argmax = |off: f64| {
            (0..logliks.len())
                .max_by(|&a, &b| bic_value(logliks[a] + off, params[a], 300).total_cmp(&bic_value(logliks[b] + off, params[b], 300)))
                .unwrap()
        };
        prop_assert_eq!(argmax(0.0), argmax(shift));
    }

    #[test]
    fn effective_count_never_exceeds_full_count(v in 0usize..12, k in 2usize..6, extra in 0usize..30, zeros in 0usize..40) {
        let variant = ModelVariant::ALL[v];
        let p = k + extra;
        let d = k - 1;
        let full = param_count(variant, k, p, d).unwrap();
        match effective_param_count(variant, k, p, d, zeros) {
            Ok(e) => {
                prop_assert!(e <= full);
                prop_assert_eq!(e == full, zeros == 0);
            }
            Err(_) => prop_assert!(zeros > d * p),
        }
    }

    #[test]
    fn centering_is_idempotent(seed in any::<u64>(), n in 1usize..30, p in 1usize..6) {
        let y = gaussian(&mut rng(seed), n, p);
        let (c, mean) = center(&y);
        let (cc, zero) = center(&c);
        prop_assert!((&cc - &c).amax() < 1e-12);
        prop_assert!(zero.amax() < 1e-12);
        prop_assert_eq!(mean.len(), p);
    }
}

#[test]
fn simulation_is_deterministic_and_centered_off_signal() {
    let spec = SimSpec { n: 100_000, mu: 1.7, seed: 3, ..Default::default() };
    let a = simulate(&spec).unwrap();
    let b = simulate(&spec).unwrap();
    assert_eq!(a, b);
    let q = spec.q;
    let mean = a.y.column(q).mean();
    assert!(mean.abs() <= 3.0 / (100_000f64).sqrt(), "{mean}");
    let small = simulate(&SimSpec::default()).unwrap();
    assert_eq!(small.y.shape(), (30, 25));
}
