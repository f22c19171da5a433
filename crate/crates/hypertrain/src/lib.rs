//! Experiment harness for hyper-training: configuration files, dataset
//! loading, run artifacts and the experiments behind each CLI subcommand.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pool;

pub use config::{Command, ExperimentConfig};
pub use error::{HarnessError, Result};

// Hypernetwork steps allocate and free multi-megabyte tensors at a high
// rate; the system allocator returns them to the kernel each time.
#[global_allocator]
static ALLOCATOR: mimalloc::MiMalloc = mimalloc::MiMalloc;
