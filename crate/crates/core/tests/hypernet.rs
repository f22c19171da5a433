use hypertrain_core::hypernet::emit_var;
use hypertrain_core::{Arch, HyperPoint, HypernetParams, HypernetSpec, ModelSpec, Tape, Tensor};
use proptest::prelude::*;

const ARCHS: [Arch; 3] = [Arch::Linear, Arch::Factorized { width: 3 }, Arch::Mlp { hidden: 4 }];

/// Jacobian `∂emit/∂λ` from the tape, one backward pass per output.
fn tape_jacobian(phi: &HypernetParams, lambda: &[f64]) -> Vec<Vec<f64>> {
    (0..phi.spec().out_dim)
        .map(|j| {
            let tape = Tape::new();
            let p = tape.constant(phi.flat().clone());
            let l = tape.param(Tensor::vector(lambda.to_vec()));
            let w = emit_var(phi.spec(), p, l).unwrap();
            let out = w.slice(j, [1]).unwrap().sum().unwrap();
            tape.backward(out).unwrap().take(l).unwrap().into_data()
        })
        .collect()
}

fn fd_jacobian(phi: &HypernetParams, model: &ModelSpec, lambda: &[f64], h: f64) -> Vec<Vec<f64>> {
    let emit = |l: &[f64]| {
        phi.emit(model, &HyperPoint::new(l.to_vec()))
            .unwrap()
            .into_flat()
            .into_data()
    };
    let mut cols = Vec::new();
    for i in 0..lambda.len() {
        let mut up = lambda.to_vec();
        let mut down = lambda.to_vec();
        up[i] += h;
        down[i] -= h;
        let (a, b) = (emit(&up), emit(&down));
        cols.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<_>>());
    }
    (0..phi.spec().out_dim)
        .map(|j| cols.iter().map(|c| c[j]).collect())
        .collect()
}

fn frobenius_rel(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0f64);
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            diff += (x - y) * (x - y);
            norm += y * y;
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_emit_is_affine(
        seed in 0u64..1000,
        l1 in prop::collection::vec(-3.0f64..3.0, 2),
        l2 in prop::collection::vec(-3.0f64..3.0, 2),
        alpha in -2.0f64..2.0,
    ) {
        let model = ModelSpec::linear(3, 2).unwrap();
        let spec = HypernetSpec::for_model(Arch::Linear, 2, &model).unwrap();
        let mut phi = HypernetParams::init(spec, seed);
        // Nonzero biases so the affine offset is exercised.
        for (i, v) in phi.flat_mut()[16..].iter_mut().enumerate() {
            *v = 0.1 * i as f64 - 0.3;
        }
        let emit = |l: &[f64]| phi.emit(&model, &HyperPoint::new(l.to_vec())).unwrap().into_flat().into_data();
        let mix: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let (e1, e2, em) = (emit(&l1), emit(&l2), emit(&mix));
        for j in 0..e1.len() {
            prop_assert!((em[j] - (alpha * e1[j] + (1.0 - alpha) * e2[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn emit_jacobian_matches_finite_differences(
        seed in 0u64..1000,
        lambda in prop::collection::vec(-2.0f64..2.0, 3),
        arch_index in 0usize..3,
    ) {
        let arch = ARCHS[arch_index];
        let model = ModelSpec::linear(2, 2).unwrap();
        let spec = HypernetSpec::for_model(arch, 3, &model).unwrap();
        let mut phi = HypernetParams::init(spec, seed);
        let count = phi.flat().len();
        for (i, v) in phi.flat_mut().iter_mut().enumerate() {
            *v += 0.05 * ((i * 7 % count) as f64 / count as f64 - 0.5);
        }
        if let Arch::Mlp { .. } = arch {
            // Skip draws that put a hidden pre-activation next to the kink.
            let pre = hidden_preactivations(&phi, &lambda);
            prop_assume!(pre.iter().all(|v| v.abs() > 1e-3));
        }
        let analytic = tape_jacobian(&phi, &lambda);
        let numeric = fd_jacobian(&phi, &model, &lambda, 1e-6);
        let err = frobenius_rel(&analytic, &numeric);
        prop_assert!(err < 1e-5, "{:?}: relative error {:e}", arch, err);
    }
}

fn hidden_preactivations(phi: &HypernetParams, lambda: &[f64]) -> Vec<f64> {
    let spec = phi.spec();
    let k = match spec.arch {
        Arch::Mlp { hidden } => hidden,
        _ => return Vec::new(),
    };
    let p = phi.flat().data();
    (0..k)
        .map(|j| p[spec.in_dim * k + j] + (0..spec.in_dim).map(|i| lambda[i] * p[i * k + j]).sum::<f64>())
        .collect()
}

#[test]
fn init_norm_scales_with_square_root_of_param_count() {
    let mut ratios = Vec::new();
    for out_dim in [10, 100, 1_000, 10_000] {
        let spec = HypernetSpec::new(Arch::Linear, 1, out_dim).unwrap();
        let mean_norm: f64 = (0..20)
            .map(|s| HypernetParams::init(spec, s).flat().norm())
            .sum::<f64>()
            / 20.0;
        ratios.push(mean_norm / (spec.param_count() as f64).sqrt());
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo < 2.0, "norm / sqrt(count) ratios {ratios:?}");
}

#[test]
fn init_emits_zero_weights_at_any_lambda_only_for_linear_with_zero_gain() {
    let model = ModelSpec::linear(4, 3).unwrap();
    for arch in ARCHS {
        let spec = HypernetSpec::for_model(arch, 1, &model).unwrap();
        let phi = HypernetParams::init_scaled(spec, 5, 0.0);
        let w = phi.emit(&model, &HyperPoint::scalar(1.7)).unwrap();
        assert!(w.flat().data().iter().all(|&v| v == 0.0), "{arch:?}");
    }
}

#[test]
fn parameters_round_trip_through_bytes() {
    for arch in ARCHS {
        let spec = HypernetSpec::new(arch, 3, 7).unwrap();
        let phi = HypernetParams::init(spec, 9);
        let back = HypernetParams::from_bytes(&phi.to_bytes()).unwrap();
        assert_eq!(back, phi);
    }
}
