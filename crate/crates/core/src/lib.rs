//! Hyper-training engine.
//!
//! Learns a hypernetwork `w_φ(λ)` that maps regularization hyperparameters to
//! approximately optimal weights of an elementary model, then tunes `λ` by
//! differentiating the validation loss through the hypernetwork.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threading and
//! the command line live in the `hypertrain` crate.
//!
//! Modules:
//!
//! - [`tape`]: reverse-mode automatic differentiation over [`tensor::Tensor`]s
//! - [`model`]: elementary MLPs and their training/validation losses
//! - [`hypernet`]: linear, factorized and MLP hypernetworks
//! - [`optim`]: Adam and SGD
//! - [`algorithms`]: cross-validation and the three hyper-training procedures
//! - [`surrogate`]: Gaussian-process baseline and surrogate comparison
//! - [`data`]: datasets, IDX codec, ridge problems with analytic best response
//! - [`gradcheck`]: finite-difference validation of the tape

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algorithms;
pub mod data;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod hypernet;
pub mod model;
pub mod optim;
pub mod rng;
pub mod surrogate;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use hypernet::{Arch, HyperPoint, HypernetParams, HypernetSpec};
pub use model::{ElementaryWeights, ModelSpec, RegMode, RegSpec};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
