mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use sparse_fem::em::{f_step, fisher_criterion, m_step, q_value, FitConfig, fit_fisher_em};
use sparse_fem::model::ModelVariant;
use sparse_fem::sparse::soft_factors;

#[test]
fn total_scatter_splits_into_within_and_between() {
    let mut rng = rng(3);
    for _ in 0..20 {
        let (y, part, sc) = random_scatter(&mut rng, 60, 7, 3);
        let n = y.nrows() as f64;
        let c = {
            let mut c = y.clone();
            for mut row in c.row_iter_mut() {
                row -= y.row_mean();
            }
            c
        };
        let total = c.transpose() * &c / n;
        assert!((&sc.total - &total).amax() < 1e-10);
        assert!((&sc.within + &sc.between - &sc.total).amax() < 1e-10);
        let within: DMatrix<f64> =
            (0..3).fold(DMatrix::zeros(7, 7), |acc, g| acc + &sc.group_covs[g] * part.soft_counts[g]) / n;
        assert!((&within - &sc.within).amax() < 1e-10);
        let f = soft_factors(&y, &part).unwrap();
        assert!((&f.h_w * f.h_w.transpose() - &sc.within).amax() < 1e-10);
        assert!((&f.h_b * f.h_b.transpose() - &sc.between).amax() < 1e-10);
    }
}

#[test]
fn f_step_beats_random_orientations() {
    let mut rng = rng(11);
    for _ in 0..10 {
        let (_, _, sc) = random_scatter(&mut rng, 80, 6, 3);
        let fs = f_step(&sc, 2, 1e-3).unwrap();
        let u = &fs.orientation;
        assert!((u.transpose() * u - DMatrix::identity(2, 2)).amax() < 1e-10);
        let best = fisher_criterion(&sc, u).unwrap();
        let eig_sum: f64 = fs.eigenvalues.iter().take(2).sum();
        assert!((best - eig_sum).abs() < 1e-8);
        for _ in 0..200 {
            let v = orthonormal(&mut rng, 6, 2);
            assert!(fisher_criterion(&sc, &v).unwrap() <= best + 1e-10);
        }
    }
}

#[test]
fn m_step_maximizes_expected_log_likelihood() {
    let mut rng = rng(21);
    for variant in ModelVariant::ALL {
        let (_, part, sc) = random_scatter(&mut rng, 90, 6, 3);
        let u = f_step(&sc, 2, 1e-3).unwrap().orientation;
        let ms = m_step(&sc, &part, &u, variant).unwrap();
        ms.params.validate().unwrap();
        let q0 = q_value(&sc, &part, &ms.params).unwrap();
        for _ in 0..50 {
            let mut other = ms.params.clone();
            let e = 0.05;
            match rng.random_range(0..3) {
                0 => {
                    let s = rng.random_range(1.0 - e..1.0 + e);
                    other.noise_vars.iter_mut().for_each(|b| *b *= s);
                }
                1 => other.latent_means.iter_mut().for_each(|m| *m += rng.random_range(-e..e)),
                _ => {
                    let s = rng.random_range(1.0 - e..1.0 + e);
                    other.latent_covs.iter_mut().for_each(|c| *c *= s);
                }
            }
            assert!(q_value(&sc, &part, &other).unwrap() <= q0 + 1e-9, "{variant}");
        }
    }
}

#[test]
fn fits_keep_their_invariants() {
    let ds = sparse_fem::data::simulate(&sparse_fem::data::SimSpec { n: 120, mu: 2.0, seed: 5, ..Default::default() }).unwrap();
    for variant in ModelVariant::ALL {
        let mut cfg = FitConfig::new(variant, 3);
        cfg.seed = 2;
        let fit = fit_fisher_em(&ds.y, &cfg).unwrap();
        fit.params.validate().unwrap();
        assert_eq!(fit.diagnostics.orthonormality_violations + fit.diagnostics.row_sum_violations, 0);
        assert_eq!(fit.loglik_trace.len(), fit.iterations);
        assert!(fit.loglik.is_finite());
        assert_eq!(fit.partition.len(), 120);
    }
}
