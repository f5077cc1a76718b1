use super::*;
use crate::imaging::{
    make_flatcam_operator, make_mask, make_spc_operator, DenseSensingOperator, SeparableOperator,
};
use crate::priors::oracle::{gaussian_mrf_map_oracle, OracleMode};
use crate::priors::{GaussianMrfPrior, UniformPrior};
use nalgebra::DMatrix;
use rand::Rng;

fn smooth(h: usize, w: usize, seed: u64) -> Image {
    let mut r = rng::seeded(seed);
    let (a, b, c): (f64, f64, f64) = (r.random(), r.random(), r.random());
    let data = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            0.5 + 0.3 * ((3.0 * a + 1.0) * x + 2.0 * b * y + 6.0 * c).sin() * (1.0 - 0.3 * y)
        })
        .collect();
    Image::gray(h, w, data).unwrap()
}

fn plain(mode: ConstraintMode, alpha: f64, iters: usize) -> SolverConfig {
    SolverConfig {
        alpha,
        momentum: 0.0,
        dropout_ratio: 0.0,
        max_iter: iters,
        mode,
        ..SolverConfig::default()
    }
}

fn rel(a: &Image, b: &Image) -> f64 {
    a.distance(b) / b.norm()
}

#[test]
fn uniform_init_is_deterministic() {
    let a = initialize_uniform(16, 16, 1, 7).unwrap();
    assert_eq!(a, initialize_uniform(16, 16, 1, 7).unwrap());
    let b = initialize_uniform(16, 16, 1, 8).unwrap();
    let same = a.data().iter().zip(b.data()).filter(|(x, y)| x == y).count();
    assert!(same * 100 <= a.len());
    let big = initialize_uniform(64, 64, 1, 3).unwrap();
    assert!((0.45..=0.55).contains(&big.mean()));
    assert!(big.data().iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn dropout_counts() {
    let count = |r| dropout_mask(64, 64, r, 1).unwrap().iter().filter(|&&m| m == 0).count();
    assert_eq!(count(0.0), 0);
    assert_eq!(count(0.25), 1024);
    assert_eq!(count(0.75), 3072);
    assert!(dropout_mask(4, 4, 1.0, 0).is_err());
    assert!(dropout_mask(4, 4, -0.1, 0).is_err());
}

#[test]
fn ascent_step_examples() {
    let x = smooth(4, 5, 1);
    let ones = vec![1u8; 20];
    let cfg = plain(ConstraintMode::Hard, 0.3, 1);

    let mut mom = MomentumState::new(4, 5, 1);
    assert_eq!(prior_ascent_step(&x, &UniformPrior, &cfg, &mut mom, &ones).unwrap(), x);

    let prior = GaussianMrfPrior::new(0.1).unwrap();
    let mut mom = MomentumState::new(4, 5, 1);
    let h = prior_ascent_step(&x, &prior, &cfg, &mut mom, &ones).unwrap();
    let qx = prior.apply_precision(x.data(), 4, 5);
    for ((hv, xv), q) in h.data().iter().zip(x.data()).zip(&qx) {
        assert!((hv - (xv - 0.3 * q)).abs() < 1e-15);
    }

    let mut mom = MomentumState::new(4, 5, 1);
    let h = prior_ascent_step(&x, &prior, &cfg, &mut mom, &[0u8; 20]).unwrap();
    assert_eq!(h, x);
}

#[test]
fn momentum_accumulates_masked_gradient() {
    let x = smooth(3, 3, 2);
    let prior = GaussianMrfPrior::new(0.2).unwrap();
    let cfg = SolverConfig {
        momentum: 0.5,
        alpha: 0.1,
        ..SolverConfig::default()
    };
    let mut mom = MomentumState::new(3, 3, 1);
    let g = prior.grad_log_density(&x).unwrap();
    prior_ascent_step(&x, &prior, &cfg, &mut mom, &[1; 9]).unwrap();
    prior_ascent_step(&x, &prior, &cfg, &mut mom, &[1; 9]).unwrap();
    for (v, gi) in mom.velocity.data().iter().zip(g.data()) {
        assert!((v - 1.5 * gi).abs() < 1e-15);
    }
}

#[test]
fn hard_uniform_prior_inpainting_is_projection() {
    let truth = smooth(6, 6, 3);
    let mask = make_mask(6, 6, 0.5, 4).unwrap();
    let p = Problem::simulate(SensingModel::Inpaint(mask.clone()), &truth).unwrap();
    let cfg = plain(ConstraintMode::Hard, 1.0, 1);
    let rep = solve_hard(&p, &UniformPrior, &cfg).unwrap();
    let init = initialize_uniform(6, 6, 1, rep.init_seed).unwrap();
    for (i, &m) in mask.values().iter().enumerate() {
        let expect = if m == 1 { truth.data()[i] } else { init.data()[i] };
        assert_eq!(rep.estimate.data()[i], expect);
    }
    assert!(rep.final_residual < 1e-15);
}

#[test]
fn hard_gmrf_matches_oracle() {
    let truth = smooth(4, 4, 5);
    let p = Problem::simulate(SensingModel::Inpaint(make_mask(4, 4, 0.5, 6).unwrap()), &truth).unwrap();
    let prior = GaussianMrfPrior::new(1e-2).unwrap();
    let oracle = gaussian_mrf_map_oracle(&p, &prior, OracleMode::Hard).unwrap();
    let rep = solve_hard(&p, &prior, &plain(ConstraintMode::Hard, 0.2, 2000)).unwrap();
    assert!(rel(&rep.estimate, &oracle) < 1e-4, "{}", rel(&rep.estimate, &oracle));
}

#[test]
fn hard_full_rate_spc_inverts() {
    let truth = smooth(8, 8, 7);
    let p = Problem::simulate(SensingModel::Spc(vec![make_spc_operator(64, 64, 1).unwrap()]), &truth).unwrap();
    let rep = solve_hard(&p, &UniformPrior, &plain(ConstraintMode::Hard, 1.0, 5)).unwrap();
    assert!(crate::metrics::psnr(&truth, &rep.estimate).unwrap() >= 80.0);
}

#[test]
fn hard_projection_residual_is_recorded() {
    let truth = smooth(8, 8, 8);
    let p = Problem::simulate(SensingModel::Spc(vec![make_spc_operator(20, 64, 2).unwrap()]), &truth).unwrap();
    let cfg = SolverConfig {
        alpha: 0.2,
        max_iter: 10,
        ..SolverConfig::default()
    };
    let rep = solve_hard(&p, &GaussianMrfPrior::new(0.01).unwrap(), &cfg).unwrap();
    assert!(rep.trace.iter().all(|t| t.pre_clip_residual <= 1e-8));
    assert!(rep.estimate.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(rep.trace.len() <= cfg.max_iter);
}

#[test]
fn full_dropout_equals_uniform_prior() {
    let truth = smooth(4, 4, 9);
    let p = Problem::simulate(SensingModel::Spc(vec![make_spc_operator(8, 16, 3).unwrap()]), &truth).unwrap();
    let cfg = SolverConfig {
        dropout_ratio: 0.99,
        max_iter: 20,
        ..SolverConfig::default()
    };
    let a = solve_hard(&p, &GaussianMrfPrior::new(0.01).unwrap(), &cfg).unwrap();
    let b = solve_hard(&p, &UniformPrior, &cfg).unwrap();
    assert_eq!(a.estimate, b.estimate);
}

#[test]
fn hard_mode_rejects_separable_operator() {
    let truth = smooth(4, 4, 1);
    let p = Problem::simulate(SensingModel::FlatCam(vec![make_flatcam_operator(3, 3, 4, 4, 1).unwrap()]), &truth)
        .unwrap();
    let err = solve_hard(&p, &UniformPrior, &SolverConfig::default());
    assert!(matches!(err, Err(Error::Contract(_))));
}

#[test]
fn reconstruction_is_deterministic() {
    let truth = smooth(8, 8, 10);
    let p = Problem::simulate(SensingModel::Spc(vec![make_spc_operator(30, 64, 4).unwrap()]), &truth).unwrap();
    let cfg = SolverConfig {
        alpha: 0.1,
        max_iter: 30,
        rng_seed: 17,
        ..SolverConfig::default()
    };
    let prior = GaussianMrfPrior::new(0.01).unwrap();
    let a = solve_hard(&p, &prior, &cfg).unwrap();
    let b = solve_hard(&p, &prior, &cfg).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn alm_feasible_start_is_untouched() {
    let op = make_flatcam_operator(6, 6, 6, 6, 2).unwrap();
    let cfg = SolverConfig {
        mode: ConstraintMode::Alm,
        max_iter: 5,
        ..SolverConfig::default()
    };
    let x0 = initialize_uniform(6, 6, 1, rng::derive_seed(cfg.rng_seed, 0)).unwrap();
    let p = Problem::simulate(SensingModel::FlatCam(vec![op]), &x0).unwrap();
    let rep = solve_alm(&p, &UniformPrior, &cfg).unwrap();
    assert!(rep.estimate.distance(&x0) < 1e-12);
}

#[test]
fn alm_identity_converges() {
    let eye = SeparableOperator::new(DMatrix::identity(5, 5), DMatrix::identity(5, 5)).unwrap();
    let truth = smooth(5, 5, 11);
    let p = Problem::simulate(SensingModel::FlatCam(vec![eye]), &truth).unwrap();
    let cfg = SolverConfig {
        mode: ConstraintMode::Alm,
        max_iter: 200,
        ..SolverConfig::default()
    };
    let rep = solve_alm(&p, &UniformPrior, &cfg).unwrap();
    assert!(rep.final_residual <= 1e-6);
}

#[test]
fn alm_reaches_constrained_gmrf_minimum() {
    let (n, m) = (16, 12);
    let op = (0..50)
        .map(|s| make_flatcam_operator(m, m, n, n, s).unwrap())
        .min_by(|a, b| a.condition_number().total_cmp(&b.condition_number()))
        .unwrap();
    let truth = smooth(n, n, 12);
    let p = Problem::simulate(SensingModel::FlatCam(vec![op]), &truth).unwrap();
    let prior = GaussianMrfPrior::new(1e-2).unwrap();
    let oracle = gaussian_mrf_map_oracle(&p, &prior, OracleMode::Soft { weight: 1e6 }).unwrap();
    assert!(oracle.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let cfg = SolverConfig {
        mode: ConstraintMode::Alm,
        alpha: 0.05,
        momentum: 0.0,
        dropout_ratio: 0.0,
        rho: 1.0,
        max_iter: 3000,
        ..SolverConfig::default()
    };
    let rep = solve_alm(&p, &prior, &cfg).unwrap();
    let (fa, fo) = (prior.energy(&rep.estimate), prior.energy(&oracle));
    assert!((fa - fo).abs() <= 1e-2 * fo, "alm {fa} oracle {fo}");
    assert!(rep.final_residual <= rep.initial_residual / 10.0);
}

#[test]
fn soft_large_weight_fits_observed_pixels() {
    let truth = smooth(6, 6, 13);
    let mask = make_mask(6, 6, 0.5, 2).unwrap();
    let p = Problem::simulate(SensingModel::Inpaint(mask.clone()), &truth).unwrap();
    let lambda = 1e4;
    let cfg = SolverConfig {
        soft_weight: lambda,
        alpha: 0.5 / lambda,
        momentum: 0.0,
        dropout_ratio: 0.0,
        max_iter: 100,
        ..SolverConfig::default()
    };
    let rep = solve_soft(&p, &GaussianMrfPrior::new(0.1).unwrap(), &cfg).unwrap();
    for (i, &m) in mask.values().iter().enumerate() {
        if m == 1 {
            assert!((rep.estimate.data()[i] - truth.data()[i]).abs() < 1e-3);
        }
    }
    assert!(rep.trace.iter().all(|t| t.objective.is_some()));
}

#[test]
fn soft_identity_fixed_point_is_data() {
    let truth = smooth(4, 4, 14);
    let op = DenseSensingOperator::new(DMatrix::identity(16, 16), true).unwrap();
    let p = Problem::simulate(SensingModel::Spc(vec![op]), &truth).unwrap();
    let rep = solve_soft(&p, &UniformPrior, &plain(ConstraintMode::Soft, 0.25, 200)).unwrap();
    assert!(rep.estimate.distance(&truth) < 1e-12);
}

#[test]
fn soft_gmrf_matches_oracle_with_noise() {
    let truth = smooth(6, 6, 15);
    let op = make_spc_operator(18, 36, 5).unwrap();
    let clean = Problem::simulate(SensingModel::Spc(vec![op.clone()]), &truth).unwrap();
    let noisy = add_measurement_noise(&clean.measurements, 0.01, 9).unwrap();
    let p = Problem::new(SensingModel::Spc(vec![op]), noisy, 6, 6, 1).unwrap();
    let prior = GaussianMrfPrior::new(0.2).unwrap();
    let oracle = gaussian_mrf_map_oracle(&p, &prior, OracleMode::Soft { weight: 2.0 }).unwrap();
    assert!(oracle.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let cfg = SolverConfig {
        soft_weight: 2.0,
        ..plain(ConstraintMode::Soft, 0.1, 3000)
    };
    let rep = solve_soft(&p, &prior, &cfg).unwrap();
    assert!(rel(&rep.estimate, &oracle) < 1e-3, "{}", rel(&rep.estimate, &oracle));
}

#[test]
fn noise_examples() {
    let y = MeasurementSet::new(
        crate::imaging::Layout::Vector,
        vec![crate::imaging::Measurement::vector(vec![0.0; 10_000])],
    );
    assert_eq!(add_measurement_noise(&y, 0.0, 1).unwrap(), y);
    let a = add_measurement_noise(&y, 0.01, 1).unwrap();
    let v = &a.per_channel[0].values;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    assert!((0.0097..=0.0103).contains(&std), "{std}");
    assert_ne!(a, add_measurement_noise(&y, 0.01, 2).unwrap());
    assert!(add_measurement_noise(&y, -1.0, 1).is_err());
}

#[test]
fn early_stop_triggers_on_converged_iterate() {
    let truth = smooth(4, 4, 16);
    let op = DenseSensingOperator::new(DMatrix::identity(16, 16), true).unwrap();
    let p = Problem::simulate(SensingModel::Spc(vec![op]), &truth).unwrap();
    let cfg = SolverConfig {
        early_stop: true,
        ..plain(ConstraintMode::Hard, 1.0, 500)
    };
    let rep = solve_hard(&p, &UniformPrior, &cfg).unwrap();
    assert!(rep.stopped_early);
    assert!(rep.iterations < 500);
}

#[test]
fn config_validation_names_fields() {
    let bad = SolverConfig {
        momentum: 1.0,
        ..SolverConfig::default()
    };
    assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "momentum"));
}
