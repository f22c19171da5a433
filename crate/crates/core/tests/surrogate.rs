mod support {
    pub mod gp_oracle;
}

use hypertrain_core::algorithms::{hypertrain_global, GlobalConfig, HyperConfig, HyperDistribution, Problem};
use hypertrain_core::data::ridge::{RidgeConfig, RidgeProblem};
use hypertrain_core::exec::Sequential;
use hypertrain_core::model;
use hypertrain_core::optim::AdamConfig;
use hypertrain_core::rng::{self, Stream};
use hypertrain_core::surrogate::{
    build_tuples, compare_surrogates, fit_fixed_hypernet, gp_fit, gp_fit_tuples, log_marginal_likelihood, GpHyper,
    Kernel, MleConfig, SurrogateConfig,
};
use hypertrain_core::{Arch, HyperPoint, HypernetSpec, RegSpec};
use proptest::prelude::*;
use support::gp_oracle;

fn kernel(length_scale: f64, signal_var: f64, noise_var: f64) -> GpHyper {
    GpHyper::Fixed(Kernel {
        length_scale,
        signal_var,
        noise_var,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixed_kernel_matches_dense_formulas(
        n in 2usize..=50,
        dim in 1usize..4,
        seed in any::<u64>(),
        length_scale in 0.3f64..3.0,
        signal_var in 0.1f64..10.0,
        // Noise below ~1e-5 of the signal makes the covariance too ill
        // conditioned for any two f64 evaluations to agree to 1e-10.
        log_noise_ratio in -4.0f64..0.0,
    ) {
        use rand::Rng;
        let mut r = rng::stream(seed, Stream::Data);
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let targets: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let queries: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| r.random_range(-6.0..6.0)).collect()).collect();
        let hyper = kernel(length_scale, signal_var, signal_var * 10f64.powf(log_noise_ratio));
        let err = gp_oracle::worst_error(&inputs, &targets, &queries, &hyper);
        prop_assert!(err < 1e-10, "relative error {:e}", err);
    }
}

#[test]
fn five_points_with_likelihood_fitted_kernel_match_dense_formulas() {
    let inputs: Vec<Vec<f64>> = [-2.0, -0.5, 0.3, 1.1, 2.4].iter().map(|&v| vec![v]).collect();
    let targets = [0.8, 0.1, -0.2, 0.05, 0.9];
    let queries: Vec<Vec<f64>> = [-3.0, 0.0, 0.7, 5.0].iter().map(|&v| vec![v]).collect();
    let err = gp_oracle::worst_error(&inputs, &targets, &queries, &GpHyper::Mle(MleConfig::default()));
    assert!(err < 1e-10, "relative error {err:e}");
}

#[test]
fn likelihood_gradient_matches_finite_differences() {
    let inputs: Vec<Vec<f64>> = (0..8)
        .map(|i| vec![(i as f64 * 0.9).sin(), i as f64 / 4.0 - 1.0])
        .collect();
    let targets: Vec<f64> = (0..8).map(|i| (i as f64 * 0.4).cos()).collect();
    let theta = [0.2f64, -0.3, -3.0];
    let at = |t: [f64; 3]| {
        let k = Kernel {
            length_scale: t[0].exp(),
            signal_var: t[1].exp(),
            noise_var: t[2].exp(),
        };
        log_marginal_likelihood(&inputs, &targets, &k).unwrap()
    };
    let (_, grad) = at(theta);
    for i in 0..3 {
        let h = 1e-6;
        let (mut up, mut down) = (theta, theta);
        up[i] += h;
        down[i] -= h;
        let fd = (at(up).0 - at(down).0) / (2.0 * h);
        assert!(
            (grad[i] - fd).abs() < 1e-6 * fd.abs().max(1.0),
            "{i}: {} vs {fd}",
            grad[i]
        );
    }
}

#[test]
fn likelihood_fit_does_not_lose_to_its_starting_kernels() {
    let inputs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.5]).collect();
    let targets: Vec<f64> = inputs
        .iter()
        .map(|x| (x[0]).sin() + 0.05 * (x[0] * 7.0).cos())
        .collect();
    let gp = gp_fit(&inputs, &targets, &GpHyper::Mle(MleConfig::default())).unwrap();
    let power = targets.iter().map(|y| y * y).sum::<f64>() / targets.len() as f64;
    let z = gp.inputs().to_vec();
    for ell in [0.3, 1.0, 3.0] {
        let start = Kernel {
            length_scale: ell,
            signal_var: power,
            noise_var: 1e-2 * power,
        };
        let (v, _) = log_marginal_likelihood(&z, &targets, &start).unwrap();
        assert!(gp.log_marginal_likelihood() >= v - 1e-9);
    }
}

#[test]
fn rejects_degenerate_data() {
    let h = GpHyper::Fixed(Kernel::default());
    assert!(gp_fit(&[vec![1.0]], &[0.0], &h).is_err());
    assert!(gp_fit(&[vec![1.0], vec![1.0]], &[0.0, 1.0], &h).is_err());
    assert!(gp_fit(&[vec![1.0], vec![f64::NAN]], &[0.0, 1.0], &h).is_err());
    assert!(gp_fit(&[vec![1.0], vec![2.0, 3.0]], &[0.0, 1.0], &h).is_err());
}

/// A small per-weight ridge problem that keeps every inner training cheap.
fn setup() -> RidgeProblem {
    RidgeProblem::generate(RidgeConfig {
        features: 4,
        n_train: 20,
        n_valid: 40,
        n_test: 10,
        feature_scale: 1.0,
        noise: 1.0,
        seed: 5,
    })
    .unwrap()
}

fn small_config() -> SurrogateConfig {
    SurrogateConfig {
        tuples: 8,
        held_out: 12,
        distribution: HyperDistribution::Global {
            mean: -2.0,
            variance: 1.5,
        },
        inner_iters: 200,
        inner_adam: AdamConfig::with_lr(1e-2),
        hyper: HyperConfig {
            phi_adam: AdamConfig::with_lr(1e-3),
            init_scale: 0.0,
            seed: 4,
            ..HyperConfig::default()
        },
        fixed_iters: 300,
        gp: GpHyper::Mle(MleConfig::default()),
        bins: 5,
    }
}

#[test]
fn comparison_is_budgeted_and_reproducible_from_its_parts() {
    let rp = setup();
    let problem = Problem::new(rp.model_spec().clone(), RegSpec::PER_WEIGHT, &rp.train, &rp.valid).unwrap();
    let cfg = small_config();
    let report = compare_surrogates(&problem, &cfg, &Sequential).unwrap();
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);

    let budget = (cfg.tuples * cfg.inner_iters) as u64;
    assert!(report.stochastic.grad_evals <= budget);
    assert!(report.stochastic.grad_evals > budget / 2);
    for m in report.methods() {
        assert_eq!(m.predictions.len(), cfg.held_out);
        assert_eq!(m.histogram.counts.iter().sum::<usize>(), cfg.held_out);
        let mse = m.predictions.iter().map(|p| p.inferred - p.truth).sum::<f64>() / cfg.held_out as f64;
        assert!((mse - m.mean_signed_error).abs() < 1e-15);
    }

    // Redraw the same hyperparameters and rebuild every predictor directly.
    let dim = problem.hyper_dim();
    let mut sampler = rng::stream(cfg.hyper.seed, Stream::Sampling);
    let origin = HyperPoint::filled(dim, 0.0);
    let mut draw = |n| {
        (0..n)
            .map(|_| cfg.distribution.sample(&origin, &mut sampler))
            .collect::<Vec<_>>()
    };
    let (train_l, test_l) = (draw(cfg.tuples), draw(cfg.held_out));
    let (tuples, _) = build_tuples(
        &problem,
        &train_l,
        cfg.inner_iters,
        cfg.inner_adam,
        cfg.hyper.seed,
        0,
        &Sequential,
    );
    let (held, _) = build_tuples(
        &problem,
        &test_l,
        cfg.inner_iters,
        cfg.inner_adam,
        cfg.hyper.seed,
        cfg.tuples,
        &Sequential,
    );
    let valid = rp.valid.batch();
    for t in tuples.iter().chain(&held) {
        assert!((model::pred_loss(&t.weights, &valid).unwrap() - t.valid_loss).abs() <= 1e-12);
    }

    let spec = HypernetSpec::for_model(Arch::Linear, dim, &problem.model).unwrap();
    let fixed = fit_fixed_hypernet(spec, &tuples, &cfg.hyper, cfg.fixed_iters).unwrap();
    let global = hypertrain_global(
        &problem,
        &GlobalConfig {
            common: cfg.hyper,
            distribution: cfg.distribution,
            phase1_iters: (budget / cfg.hyper.hyper_samples as u64) as usize,
            phase2_iters: 0,
        },
    )
    .unwrap();
    let gp = gp_fit_tuples(&tuples, &cfg.gp).unwrap();
    for (i, t) in held.iter().enumerate() {
        assert_eq!(report.gp.predictions[i].truth, t.valid_loss);
        let direct_fixed = model::pred_loss(&fixed.emit(&problem.model, &t.lambda).unwrap(), &valid).unwrap();
        let direct_stoch = model::pred_loss(&global.phi.emit(&problem.model, &t.lambda).unwrap(), &valid).unwrap();
        assert!((report.fixed.predictions[i].inferred - direct_fixed).abs() <= 1e-12);
        assert!((report.stochastic.predictions[i].inferred - direct_stoch).abs() <= 1e-12);
        assert!((report.gp.predictions[i].inferred - gp.predict(t.lambda.values()).unwrap().0).abs() <= 1e-12);
    }
}
