//! Loading datasets and hypernetwork parameters from disk.

use std::fs;
use std::path::Path;

use hypertrain_core::data::ridge::{RidgeConfig, RidgeProblem};
use hypertrain_core::data::{self, idx, Dataset, Split};
use hypertrain_core::{Error, HypernetParams};

use crate::config::{DataConfig, DataSource};
use crate::error::{HarnessError, Result};

/// Train, validation and test splits of one run. `ridge` is present when the
/// data is synthetic and carries the closed-form best response.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub ridge: Option<RidgeProblem>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HarnessError::io(path, e))
}

/// Reads `{prefix}-images-idx3-ubyte` and `{prefix}-labels-idx1-ubyte`.
pub fn load_idx_pair(dir: &Path, prefix: &str, split: Split) -> Result<Dataset> {
    let images = read(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = read(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    Ok(idx::mnist_dataset(&images, &labels, split)?)
}

fn square_side(width: usize) -> Result<usize> {
    let side = (width as f64).sqrt().round() as usize;
    if side * side != width {
        return Err(Error::Domain(format!("images of {width} pixels are not square")).into());
    }
    Ok(side)
}

fn resized(data: Dataset, side: usize) -> Result<Dataset> {
    let native = square_side(data.input_dim())?;
    if native == side {
        return Ok(data);
    }
    let x = data::resize_images(data.x(), (native, native), (side, side))?;
    Ok(Dataset::new(x, data.t().clone(), data.split())?)
}

/// Builds the splits for a run. Idx data draws train and validation rows
/// from the training file and test rows from the test file, all with `seed`.
pub fn prepare(cfg: &DataConfig, seed: u64) -> Result<Splits> {
    match cfg.source {
        DataSource::Ridge => {
            let problem = RidgeProblem::generate(RidgeConfig {
                features: cfg.ridge_features,
                n_train: cfg.train_size,
                n_valid: cfg.valid_size,
                n_test: cfg.test_size.max(1),
                feature_scale: cfg.ridge_feature_scale,
                noise: cfg.ridge_noise,
                seed,
            })?;
            Ok(Splits {
                train: problem.train.clone(),
                valid: problem.valid.clone(),
                test: problem.test.clone(),
                ridge: Some(problem),
            })
        }
        DataSource::Idx => {
            let pool = load_idx_pair(&cfg.idx_dir, "train", Split::Train)?;
            let mut parts = data::partition(&pool, &[cfg.train_size, cfg.valid_size], seed)?;
            let valid = parts.pop().expect("two parts").with_split(Split::Valid);
            let train = parts.pop().expect("two parts");
            let test_pool = load_idx_pair(&cfg.idx_dir, "t10k", Split::Test)?;
            let test = data::subsample(&test_pool, cfg.test_size.min(test_pool.len()), seed)?;
            Ok(Splits {
                train: resized(train, cfg.image_side)?,
                valid: resized(valid, cfg.image_side)?,
                test: resized(test, cfg.image_side)?,
                ridge: None,
            })
        }
    }
}

/// Writes hypernetwork parameters as a little-endian binary.
pub fn write_params(path: &Path, params: &HypernetParams) -> Result<()> {
    fs::write(path, params.to_bytes()).map_err(|e| HarnessError::io(path, e))
}

pub fn read_params(path: &Path) -> Result<HypernetParams> {
    Ok(HypernetParams::from_bytes(&read(path)?)?)
}
