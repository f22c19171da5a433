//! Hypernetworks: parametric maps from hyperparameters to elementary weights.
//!
//! Parameter layout for each architecture (all matrices row-major):
//!
//! - `Linear`: `W [in×out]`, `b [out]`; `emit(λ) = λ·W + b`.
//! - `Factorized { width: k }`: `W1 [in×k]`, `b1 [k]`, `W2 [k×out]`, `b2 [out]`;
//!   a linear bottleneck, `emit(λ) = (λ·W1 + b1)·W2 + b2`.
//! - `Mlp { hidden: h }`: same layout as `Factorized` with a ReLU on the
//!   hidden layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{ElementaryWeights, ModelSpec};
use crate::rng::{self, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A hyperparameter vector in log-regularization space.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperPoint(Tensor);

impl HyperPoint {
    pub fn new(values: Vec<f64>) -> Self {
        HyperPoint(Tensor::vector(values))
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(vec![value])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self::new(vec![value; dim])
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.0.data_mut()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Linear,
    Factorized { width: usize },
    Mlp { hidden: usize },
}

impl Arch {
    pub fn tag(self) -> u32 {
        match self {
            Arch::Linear => 0,
            Arch::Factorized { .. } => 1,
            Arch::Mlp { .. } => 2,
        }
    }

    fn width(self) -> usize {
        match self {
            Arch::Linear => 0,
            Arch::Factorized { width } => width,
            Arch::Mlp { hidden } => hidden,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HypernetSpec {
    pub arch: Arch,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl HypernetSpec {
    pub fn new(arch: Arch, in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || (arch != Arch::Linear && arch.width() == 0) {
            return Err(Error::Config(format!(
                "hypernetwork dimensions must be positive: {arch:?}, in {in_dim}, out {out_dim}"
            )));
        }
        Ok(HypernetSpec { arch, in_dim, out_dim })
    }

    /// A hypernetwork emitting every weight of `model`.
    pub fn for_model(arch: Arch, in_dim: usize, model: &ModelSpec) -> Result<Self> {
        Self::new(arch, in_dim, model.param_count())
    }

    pub fn param_count(&self) -> usize {
        let (i, o) = (self.in_dim, self.out_dim);
        match self.arch {
            Arch::Linear => i * o + o,
            Arch::Factorized { width: k } | Arch::Mlp { hidden: k } => i * k + k + k * o + o,
        }
    }

    /// `(offset, fan_in, len)` of every weight matrix; everything else is bias.
    fn weight_blocks(&self) -> Vec<(usize, usize, usize)> {
        let (i, o) = (self.in_dim, self.out_dim);
        match self.arch {
            Arch::Linear => vec![(0, i, i * o)],
            Arch::Factorized { width: k } | Arch::Mlp { hidden: k } => {
                vec![(0, i, i * k), (i * k + k, k, k * o)]
            }
        }
    }
}

/// Flat hypernetwork parameters φ.
#[derive(Clone, Debug, PartialEq)]
pub struct HypernetParams {
    spec: HypernetSpec,
    flat: Tensor,
}

impl HypernetParams {
    pub fn new(spec: HypernetSpec, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::shape("hypernet params", &[flat.len()], &[spec.param_count()]));
        }
        Ok(HypernetParams {
            spec,
            flat: Tensor::vector(flat),
        })
    }

    /// Weight matrices uniform in `±1/√fan_in`, biases zero.
    pub fn init(spec: HypernetSpec, seed: u64) -> Self {
        Self::init_scaled(spec, seed, 1.0)
    }

    /// As [`init`](Self::init) with the uniform bound multiplied by `gain`.
    /// Consumes the same random draws for every gain.
    pub fn init_scaled(spec: HypernetSpec, seed: u64, gain: f64) -> Self {
        let mut rng = rng::stream(seed, Stream::Init);
        let mut flat = vec![0.0; spec.param_count()];
        for (offset, fan_in, len) in spec.weight_blocks() {
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            for v in &mut flat[offset..offset + len] {
                *v = gain * rng.random_range(-bound..bound);
            }
        }
        HypernetParams {
            spec,
            flat: Tensor::vector(flat),
        }
    }

    pub fn spec(&self) -> &HypernetSpec {
        &self.spec
    }

    pub fn flat(&self) -> &Tensor {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        self.flat.data_mut()
    }

    /// Elementary weights for `lambda`.
    pub fn emit(&self, model: &ModelSpec, lambda: &HyperPoint) -> Result<ElementaryWeights> {
        if model.param_count() != self.spec.out_dim {
            return Err(Error::shape("emit", &[self.spec.out_dim], &[model.param_count()]));
        }
        let tape = Tape::new();
        let phi = tape.constant(self.flat.clone());
        let l = tape.constant(lambda.tensor().clone());
        let w = emit_var(&self.spec, phi, l)?;
        ElementaryWeights::new(model.clone(), w.value().into_data())
    }

    const MAGIC: [u8; 4] = *b"HYPN";
    const VERSION: u32 = 1;

    /// Little-endian binary: magic `HYPN`, version `u32`, arch tag `u32`,
    /// width/in/out/count as `u64`, then `count` `f64` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.flat.len());
        out.extend_from_slice(&Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec.arch.tag().to_le_bytes());
        for v in [
            self.spec.arch.width(),
            self.spec.in_dim,
            self.spec.out_dim,
            self.flat.len(),
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self.flat.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(&Self::MAGIC[..]) {
            return Err(Error::format(0, "missing HYPN magic"));
        }
        let u32_at = |o: usize| -> Result<u32> {
            bytes
                .get(o..o + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| Error::format(o, "truncated header"))
        };
        let u64_at = |o: usize| -> Result<usize> {
            bytes
                .get(o..o + 8)
                .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
                .ok_or_else(|| Error::format(o, "truncated header"))
        };
        let version = u32_at(4)?;
        if version != Self::VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let width = u64_at(12)?;
        let arch = match u32_at(8)? {
            0 => Arch::Linear,
            1 => Arch::Factorized { width },
            2 => Arch::Mlp { hidden: width },
            tag => return Err(Error::format(8, format!("unknown arch tag {tag}"))),
        };
        let spec = HypernetSpec::new(arch, u64_at(20)?, u64_at(28)?).map_err(|e| Error::format(12, format!("{e}")))?;
        let count = u64_at(36)?;
        if count != spec.param_count() {
            return Err(Error::format(36, format!("count {count} does not match architecture")));
        }
        let body = bytes
            .get(44..44 + 8 * count)
            .ok_or_else(|| Error::format(bytes.len(), "truncated parameter data"))?;
        let flat = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        HypernetParams::new(spec, flat)
    }
}

/// Records `emit(φ, λ)` on the tape as a flat `[out_dim]` vector,
/// differentiable in both `phi` and `lambda`.
pub fn emit_var<'t>(spec: &HypernetSpec, phi: Var<'t>, lambda: Var<'t>) -> Result<Var<'t>> {
    let dim: usize = lambda.shape().iter().product();
    if dim != spec.in_dim {
        return Err(Error::shape("emit", &lambda.shape(), &[spec.in_dim]));
    }
    if phi.shape().iter().product::<usize>() != spec.param_count() {
        return Err(Error::shape("emit params", &phi.shape(), &[spec.param_count()]));
    }
    let (i, o) = (spec.in_dim, spec.out_dim);
    let row = lambda.reshape(vec![1, i])?;
    let out = match spec.arch {
        Arch::Linear => {
            let w = phi.slice(0, vec![i, o])?;
            let b = phi.slice(i * o, vec![1, o])?;
            row.matmul(w)?.add(b)?
        }
        Arch::Factorized { width: k } | Arch::Mlp { hidden: k } => {
            let w1 = phi.slice(0, vec![i, k])?;
            let b1 = phi.slice(i * k, vec![1, k])?;
            let w2 = phi.slice(i * k + k, vec![k, o])?;
            let b2 = phi.slice(i * k + k + k * o, vec![1, o])?;
            let mut h = row.matmul(w1)?.add(b1)?;
            if matches!(spec.arch, Arch::Mlp { .. }) {
                h = h.relu();
            }
            h.matmul(w2)?.add(b2)?
        }
    };
    out.reshape(vec![o])
}
