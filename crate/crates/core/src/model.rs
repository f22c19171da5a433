//! Elementary models and their losses.
//!
//! Weights are a single flat vector. For each consecutive layer pair
//! `(n_in, n_out)` the vector holds the `n_in × n_out` weight matrix in
//! row-major order followed by the `n_out` bias entries. Hidden layers use
//! ReLU; the output layer is the identity.
//!
//! The training loss is `pred_loss + Σ_i exp(λ_i)·w_i²` where `pred_loss` is
//! the squared error averaged over both examples and outputs. Biases are
//! penalised like every other weight.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::hypernet::HyperPoint;
use crate::rng::{self, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Layer widths from input to output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    layer_sizes: Vec<usize>,
}

/// Location of one layer inside the flat weight vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub n_in: usize,
    pub n_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ModelSpec {
    pub fn new(layer_sizes: impl Into<Vec<usize>>) -> Result<Self> {
        let layer_sizes = layer_sizes.into();
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(alloc::format!(
                "model layers must have at least two entries, all positive; got {layer_sizes:?}"
            )));
        }
        Ok(ModelSpec { layer_sizes })
    }

    /// Single linear layer `d_in → d_out`.
    pub fn linear(d_in: usize, d_out: usize) -> Result<Self> {
        Self::new(vec![d_in, d_out])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layers(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    n_in: w[0],
                    n_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }
}

/// A flat weight vector together with the spec it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementaryWeights {
    spec: ModelSpec,
    flat: Tensor,
}

impl ElementaryWeights {
    pub fn new(spec: ModelSpec, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::shape("weights", &[flat.len()], &[spec.param_count()]));
        }
        Ok(ElementaryWeights {
            spec,
            flat: Tensor::vector(flat),
        })
    }

    pub fn zeros(spec: ModelSpec) -> Self {
        let n = spec.param_count();
        ElementaryWeights {
            spec,
            flat: Tensor::zeros(vec![n]),
        }
    }

    /// Weights uniform in `±1/√n_in` per layer, biases zero.
    pub fn init(spec: ModelSpec, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Stream::Init);
        let mut flat = vec![0.0; spec.param_count()];
        for slot in spec.layers() {
            let bound = 1.0 / libm::sqrt(slot.n_in as f64);
            for v in &mut flat[slot.weight_offset..slot.weight_offset + slot.n_in * slot.n_out] {
                *v = rng.random_range(-bound..bound);
            }
        }
        ElementaryWeights {
            spec,
            flat: Tensor::vector(flat),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn flat(&self) -> &Tensor {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        self.flat.data_mut()
    }

    pub fn into_flat(self) -> Tensor {
        self.flat
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegMode {
    /// One hyperparameter shared by every weight.
    Scalar,
    /// One hyperparameter per weight.
    PerWeight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegSpec {
    pub mode: RegMode,
}

impl RegSpec {
    pub const SCALAR: RegSpec = RegSpec { mode: RegMode::Scalar };
    pub const PER_WEIGHT: RegSpec = RegSpec {
        mode: RegMode::PerWeight,
    };

    /// Dimension of λ for a model.
    pub fn hyper_dim(&self, spec: &ModelSpec) -> usize {
        match self.mode {
            RegMode::Scalar => 1,
            RegMode::PerWeight => spec.param_count(),
        }
    }

    /// Per-weight penalty coefficients `exp(λ)`, broadcast in scalar mode.
    pub fn coefficients(&self, spec: &ModelSpec, lambda: &HyperPoint) -> Result<Vec<f64>> {
        self.check(spec, lambda.len())?;
        let l = lambda.values();
        Ok(match self.mode {
            RegMode::Scalar => vec![libm::exp(l[0]); spec.param_count()],
            RegMode::PerWeight => l.iter().map(|&v| libm::exp(v)).collect(),
        })
    }

    pub(crate) fn check(&self, spec: &ModelSpec, dim: usize) -> Result<()> {
        let want = self.hyper_dim(spec);
        if dim != want {
            return Err(Error::shape("hyperparameter", &[dim], &[want]));
        }
        Ok(())
    }
}

/// Records `x · W + b` per layer on the tape; `w` is the flat weight vector.
pub fn forward_var<'t>(spec: &ModelSpec, w: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
    let xs = x.shape();
    if xs.len() != 2 || xs[1] != spec.input_dim() {
        return Err(Error::shape(
            "forward",
            &xs,
            &[xs.first().copied().unwrap_or(0), spec.input_dim()],
        ));
    }
    if w.shape().iter().product::<usize>() != spec.param_count() {
        return Err(Error::shape("forward weights", &w.shape(), &[spec.param_count()]));
    }
    let batch = xs[0];
    let ones = x.tape().constant(Tensor::filled(vec![batch, 1], 1.0));
    let layers = spec.layers();
    let mut h = x;
    for (i, slot) in layers.iter().enumerate() {
        let weight = w.slice(slot.weight_offset, vec![slot.n_in, slot.n_out])?;
        let bias = w.slice(slot.bias_offset, vec![1, slot.n_out])?;
        h = h.matmul(weight)?.add(ones.matmul(bias)?)?;
        if i + 1 < layers.len() {
            h = h.relu();
        }
    }
    Ok(h)
}

/// Mean over batch and outputs of the squared error.
pub fn pred_loss_var<'t>(y: Var<'t>, t: Var<'t>) -> Result<Var<'t>> {
    if y.shape() != t.shape() {
        return Err(Error::shape("pred_loss", &y.shape(), &t.shape()));
    }
    if y.shape().first() == Some(&0) {
        return Err(Error::domain("empty batch"));
    }
    y.sub(t)?.square().mean()
}

/// `Σ_i exp(λ_i)·w_i²` on the tape.
pub fn reg_loss_var<'t>(spec: &ModelSpec, w: Var<'t>, lambda: Var<'t>, reg: RegSpec) -> Result<Var<'t>> {
    let dim = lambda.shape().iter().product();
    reg.check(spec, dim)?;
    let w = w.reshape(vec![spec.param_count()])?;
    let lambda = match reg.mode {
        RegMode::Scalar => lambda.reshape(Vec::new())?,
        RegMode::PerWeight => lambda.reshape(vec![spec.param_count()])?,
    };
    lambda.exp().mul(w.square())?.sum()
}

pub fn train_loss_var<'t>(
    spec: &ModelSpec,
    w: Var<'t>,
    lambda: Var<'t>,
    x: Var<'t>,
    t: Var<'t>,
    reg: RegSpec,
) -> Result<Var<'t>> {
    let y = forward_var(spec, w, x)?;
    pred_loss_var(y, t)?.add(reg_loss_var(spec, w, lambda, reg)?)
}

/// Predictions for every row of `x`.
pub fn forward(w: &ElementaryWeights, x: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let wv = tape.constant(w.flat.clone());
    let xv = tape.constant(x.clone());
    Ok(forward_var(&w.spec, wv, xv)?.value())
}

pub fn pred_loss(w: &ElementaryWeights, batch: &Batch) -> Result<f64> {
    let tape = Tape::new();
    let wv = tape.constant(w.flat.clone());
    let y = forward_var(&w.spec, wv, tape.constant(batch.x.clone()))?;
    pred_loss_var(y, tape.constant(batch.t.clone()))?.item()
}

pub fn reg_loss(w: &ElementaryWeights, lambda: &HyperPoint, reg: RegSpec) -> Result<f64> {
    let coef = reg.coefficients(&w.spec, lambda)?;
    Ok(coef.iter().zip(w.flat.data()).map(|(c, v)| c * v * v).sum())
}

pub fn train_loss(w: &ElementaryWeights, lambda: &HyperPoint, batch: &Batch, reg: RegSpec) -> Result<f64> {
    Ok(pred_loss(w, batch)? + reg_loss(w, lambda, reg)?)
}

/// Fraction of rows whose largest prediction matches the largest target.
pub fn accuracy(w: &ElementaryWeights, batch: &Batch) -> Result<f64> {
    let y = forward(w, &batch.x)?;
    let argmax = |row: &[f64]| {
        row.iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            )
            .0
    };
    let n = batch.len();
    if n == 0 {
        return Err(Error::domain("empty batch"));
    }
    let hits = (0..n).filter(|&i| argmax(y.row(i)) == argmax(batch.t.row(i))).count();
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(x: &[f64], rows: usize, t: &[f64]) -> Batch {
        let d = x.len() / rows;
        let k = t.len() / rows;
        Batch {
            x: Tensor::matrix(rows, d, x.to_vec()).unwrap(),
            t: Tensor::matrix(rows, k, t.to_vec()).unwrap(),
        }
    }

    #[test]
    fn spec_validation_and_counts() {
        assert!(ModelSpec::new(vec![3]).is_err());
        assert!(ModelSpec::new(vec![3, 0]).is_err());
        assert_eq!(ModelSpec::linear(784, 10).unwrap().param_count(), 7_850);
        let s = ModelSpec::new(vec![4, 3, 2]).unwrap();
        assert_eq!(s.param_count(), 4 * 3 + 3 + 3 * 2 + 2);
        let l = s.layers();
        assert_eq!(l[1].weight_offset, 15);
        assert_eq!(l[1].bias_offset, 21);
    }

    #[test]
    fn forward_hand_cases() {
        let spec = ModelSpec::linear(1, 1).unwrap();
        let w = ElementaryWeights::new(spec.clone(), vec![2.0, 1.0]).unwrap();
        let x = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        assert_eq!(forward(&w, &x).unwrap().data(), &[7.0]);

        let z = ElementaryWeights::zeros(ModelSpec::new(vec![3, 4, 2]).unwrap());
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 9.0]).unwrap();
        assert!(forward(&z, &x).unwrap().data().iter().all(|&v| v == 0.0));

        let bad = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(forward(&w, &bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn pred_loss_cases() {
        let spec = ModelSpec::linear(1, 2).unwrap();
        // y = [1, 0] regardless of x: W = 0, b = [1, 0].
        let w = ElementaryWeights::new(spec.clone(), vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(pred_loss(&w, &batch(&[5.0], 1, &[0.0, 0.0])).unwrap(), 0.5);
        assert_eq!(pred_loss(&w, &batch(&[5.0], 1, &[1.0, 0.0])).unwrap(), 0.0);
        let empty = Batch {
            x: Tensor::matrix(0, 1, vec![]).unwrap(),
            t: Tensor::matrix(0, 2, vec![]).unwrap(),
        };
        assert!(matches!(pred_loss(&w, &empty), Err(Error::Domain(_))));
    }

    #[test]
    fn reg_loss_cases() {
        let spec = ModelSpec::linear(1, 1).unwrap();
        let w = ElementaryWeights::new(spec.clone(), vec![1.0, 2.0]).unwrap();
        assert_eq!(reg_loss(&w, &HyperPoint::scalar(0.0), RegSpec::SCALAR).unwrap(), 5.0);
        let per = HyperPoint::new(vec![libm::log(2.0), libm::log(3.0)]);
        let ones = ElementaryWeights::new(spec.clone(), vec![1.0, 1.0]).unwrap();
        assert!((reg_loss(&ones, &per, RegSpec::PER_WEIGHT).unwrap() - 5.0).abs() < 1e-12);
        let zero = ElementaryWeights::zeros(spec.clone());
        assert_eq!(reg_loss(&zero, &HyperPoint::scalar(3.0), RegSpec::SCALAR).unwrap(), 0.0);
        assert!(matches!(
            reg_loss(&w, &HyperPoint::scalar(0.0), RegSpec::PER_WEIGHT),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn train_loss_limits() {
        let spec = ModelSpec::linear(2, 1).unwrap();
        let w = ElementaryWeights::new(spec.clone(), vec![0.3, -0.7, 0.1]).unwrap();
        let b = batch(&[1.0, 2.0, -1.0, 0.5], 2, &[0.2, -0.4]);
        let p = pred_loss(&w, &b).unwrap();
        let tl = train_loss(&w, &HyperPoint::scalar(-30.0), &b, RegSpec::SCALAR).unwrap();
        assert!((tl - p).abs() < 1e-9);

        let zero = ElementaryWeights::zeros(spec);
        let tl0 = train_loss(&zero, &HyperPoint::scalar(1.0), &b, RegSpec::SCALAR).unwrap();
        assert!((tl0 - (0.04 + 0.16) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tape_reg_gradient_matches_analytic() {
        let spec = ModelSpec::linear(2, 1).unwrap();
        let wv = [0.3, -0.7, 1.1];
        let lv = [0.2, -1.0, 0.5];
        let tape = Tape::new();
        let w = tape.constant(Tensor::vector(wv.to_vec()));
        let l = tape.param(Tensor::vector(lv.to_vec()));
        let loss = reg_loss_var(&spec, w, l, RegSpec::PER_WEIGHT).unwrap();
        let g = tape.backward(loss).unwrap();
        for i in 0..3 {
            let want = libm::exp(lv[i]) * wv[i] * wv[i];
            let got = g.get(l).unwrap().data()[i];
            assert!(((got - want) / want).abs() < 1e-8);
        }
    }
}
