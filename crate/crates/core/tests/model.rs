use hypertrain_core::data::Batch;
use hypertrain_core::model::{self, ElementaryWeights, ModelSpec, RegSpec};
use hypertrain_core::{HyperPoint, Tape, Tensor};
use proptest::prelude::*;

/// Row-by-row forward pass with explicit loops.
fn forward_by_hand(spec: &ModelSpec, w: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    let sizes = spec.layer_sizes();
    let mut out = Vec::new();
    for r in 0..n {
        let mut h = x[r * sizes[0]..(r + 1) * sizes[0]].to_vec();
        let mut offset = 0;
        for (layer, pair) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let mut next = vec![0.0; n_out];
            for (j, v) in next.iter_mut().enumerate() {
                *v = w[offset + n_in * n_out + j];
                for (i, hi) in h.iter().enumerate() {
                    *v += hi * w[offset + i * n_out + j];
                }
                if layer + 2 < sizes.len() {
                    *v = v.max(0.0);
                }
            }
            offset += n_in * n_out + n_out;
            h = next;
        }
        out.extend(h);
    }
    out
}

fn batch(n: usize, d: usize, k: usize, values: &[f64]) -> Batch {
    Batch {
        x: Tensor::matrix(n, d, values[..n * d].to_vec()).unwrap(),
        t: Tensor::matrix(n, k, values[n * d..n * d + n * k].to_vec()).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_matches_scalar_loops(
        hidden in prop::collection::vec(1usize..5, 0..3),
        values in prop::collection::vec(-2.0f64..2.0, 200),
    ) {
        let (d, k, n) = (3, 2, 4);
        let mut sizes = vec![d];
        sizes.extend(&hidden);
        sizes.push(k);
        let spec = ModelSpec::new(sizes).unwrap();
        let w = values[..spec.param_count()].to_vec();
        let x = &values[100..100 + n * d];
        let got = model::forward(&ElementaryWeights::new(spec.clone(), w.clone()).unwrap(),
            &Tensor::matrix(n, d, x.to_vec()).unwrap()).unwrap();
        let want = forward_by_hand(&spec, &w, x, n);
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_keeps_train_loss_above_pred_loss(
        values in prop::collection::vec(-3.0f64..3.0, 60),
        lambda in prop::collection::vec(-10.0f64..10.0, 8),
    ) {
        let spec = ModelSpec::linear(3, 2).unwrap();
        let w = ElementaryWeights::new(spec.clone(), values[..8].to_vec()).unwrap();
        let b = batch(5, 3, 2, &values[8..]);
        let pred = model::pred_loss(&w, &b).unwrap();
        let per_weight = model::train_loss(&w, &HyperPoint::new(lambda.clone()), &b, RegSpec::PER_WEIGHT).unwrap();
        let scalar = model::train_loss(&w, &HyperPoint::scalar(lambda[0]), &b, RegSpec::SCALAR).unwrap();
        prop_assert!(per_weight >= pred && scalar >= pred);
    }

    #[test]
    fn linear_forward_is_affine_in_inputs(
        values in prop::collection::vec(-2.0f64..2.0, 30),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let spec = ModelSpec::linear(4, 3).unwrap();
        let w = ElementaryWeights::new(spec.clone(), values[..15].to_vec()).unwrap();
        let x1 = Tensor::matrix(1, 4, values[15..19].to_vec()).unwrap();
        let x2 = Tensor::matrix(1, 4, values[19..23].to_vec()).unwrap();
        let mix: Vec<f64> = x1.data().iter().zip(x2.data()).map(|(a, b)| alpha * a + beta * b).collect();
        let f = |x: &Tensor| model::forward(&w, x).unwrap();
        let (f1, f2) = (f(&x1), f(&x2));
        let fm = f(&Tensor::matrix(1, 4, mix).unwrap());
        let bias = &values[12..15];
        for (j, b) in bias.iter().enumerate() {
            let want = alpha * f1.data()[j] + beta * f2.data()[j] - (alpha + beta - 1.0) * b;
            prop_assert!((fm.data()[j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn lambda_gradient_of_train_loss_is_exp_lambda_times_square() {
    let spec = ModelSpec::new(vec![3, 2, 2]).unwrap();
    let count = spec.param_count();
    let w: Vec<f64> = (0..count).map(|i| 0.37 * i as f64 - 2.0).collect();
    let lambda: Vec<f64> = (0..count).map(|i| -4.0 + 0.5 * i as f64).collect();
    let b = batch(3, 3, 2, &(0..15).map(|i| (i as f64 * 0.71).sin()).collect::<Vec<_>>());

    let tape = Tape::new();
    let wv = tape.constant(Tensor::vector(w.clone()));
    let lv = tape.param(Tensor::vector(lambda.clone()));
    let loss = model::train_loss_var(
        &spec,
        wv,
        lv,
        tape.constant(b.x),
        tape.constant(b.t),
        RegSpec::PER_WEIGHT,
    )
    .unwrap();
    let g = tape.backward(loss).unwrap().take(lv).unwrap();
    for i in 0..count {
        let want = lambda[i].exp() * w[i] * w[i];
        let got = g.data()[i];
        assert!((got - want).abs() <= 1e-8 * want.abs(), "weight {i}: {got} vs {want}");
    }
}

#[test]
fn scalar_lambda_gradient_sums_every_penalty() {
    let spec = ModelSpec::linear(2, 2).unwrap();
    let w: Vec<f64> = vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
    let tape = Tape::new();
    let wv = tape.constant(Tensor::vector(w.clone()));
    let lv = tape.param(Tensor::scalar(0.3));
    let loss = model::reg_loss_var(&spec, wv, lv, RegSpec::SCALAR).unwrap();
    let g = tape.backward(loss).unwrap().take(lv).unwrap().item().unwrap();
    let want: f64 = 0.3f64.exp() * w.iter().map(|v| v * v).sum::<f64>();
    assert!((g - want).abs() <= 1e-12 * want);
}
