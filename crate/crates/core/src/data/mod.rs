//! Datasets, splits and minibatch sampling.

pub mod idx;
pub mod ridge;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tensor::Tensor;

pub use ridge::{RidgeConfig, RidgeProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Inputs `x [n×d]` and targets `t [n×k]` with matching row counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Tensor,
    t: Tensor,
    split: Split,
}

/// A minibatch drawn from a [`Dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub t: Tensor,
}

impl Dataset {
    pub fn new(x: Tensor, t: Tensor, split: Split) -> Result<Self> {
        let (n, _) = x.dims2()?;
        let (nt, _) = t.dims2()?;
        if n != nt {
            return Err(Error::shape("dataset rows", x.shape(), t.shape()));
        }
        if let Some(i) = x.first_non_finite().or_else(|| t.first_non_finite()) {
            return Err(Error::domain(format!("non-finite value at flat index {i}")));
        }
        Ok(Dataset { x, t, split })
    }

    pub fn x(&self) -> &Tensor {
        &self.x
    }

    pub fn t(&self) -> &Tensor {
        &self.t
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.t.shape()[1]
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            x: self.x.select_rows(rows)?,
            t: self.t.select_rows(rows)?,
            split: self.split,
        })
    }

    /// The whole dataset as one batch.
    pub fn batch(&self) -> Batch {
        Batch {
            x: self.x.clone(),
            t: self.t.clone(),
        }
    }
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic sample of `n` rows without replacement, in shuffled order.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    Ok(partition(data, &[n], seed)?.remove(0))
}

/// Disjoint random subsets of the given sizes, drawn from one permutation.
pub fn partition(data: &Dataset, sizes: &[usize], seed: u64) -> Result<Vec<Dataset>> {
    let total: usize = sizes.iter().sum();
    if total > data.len() {
        return Err(Error::domain(format!(
            "requested {total} rows from a dataset of {}",
            data.len()
        )));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let perm = index::sample(&mut rng, data.len(), total).into_vec();
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        out.push(data.select(&perm[start..start + size])?);
        start += size;
    }
    Ok(out)
}

/// A minibatch of `size` distinct rows, or the whole dataset when
/// `size >= len`. Successive calls sample independently.
pub fn minibatch(data: &Dataset, size: usize, rng: &mut Rng) -> Result<Batch> {
    if size == 0 {
        return Err(Error::domain("minibatch size must be at least 1"));
    }
    if size >= data.len() {
        return Ok(data.batch());
    }
    let rows = index::sample(rng, data.len(), size).into_vec();
    Ok(Batch {
        x: data.x.select_rows(&rows)?,
        t: data.t.select_rows(&rows)?,
    })
}

/// One-hot rows for class labels.
pub fn one_hot(labels: &[u8], classes: usize) -> Result<Tensor> {
    let mut data = alloc::vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        let l = usize::from(l);
        if l >= classes {
            return Err(Error::domain(format!("label {l} out of range for {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, data)
}

/// Bilinear resampling of flattened `from.0 × from.1` images (one per row)
/// to `to.0 × to.1`, using pixel-centre alignment.
pub fn resize_images(images: &Tensor, from: (usize, usize), to: (usize, usize)) -> Result<Tensor> {
    let (n, d) = images.dims2()?;
    if d != from.0 * from.1 {
        return Err(Error::shape("resize_images", images.shape(), &[n, from.0 * from.1]));
    }
    if to.0 == 0 || to.1 == 0 || from.0 == 0 || from.1 == 0 {
        return Err(Error::domain("image sizes must be positive"));
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let pos = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
        let pos = pos.clamp(0.0, (src_len - 1) as f64);
        let lo = libm::floor(pos) as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let rows: Vec<_> = (0..to.0).map(|r| axis(r, from.0, to.0)).collect();
    let cols: Vec<_> = (0..to.1).map(|c| axis(c, from.1, to.1)).collect();
    let mut out = Vec::with_capacity(n * to.0 * to.1);
    for i in 0..n {
        let img = images.row(i);
        let px = |r: usize, c: usize| img[r * from.1 + c];
        for &(r0, r1, fr) in &rows {
            for &(c0, c1, fc) in &cols {
                let top = px(r0, c0) * (1.0 - fc) + px(r0, c1) * fc;
                let bottom = px(r1, c0) * (1.0 - fc) + px(r1, c1) * fc;
                out.push(top * (1.0 - fr) + bottom * fr);
            }
        }
    }
    Tensor::matrix(n, to.0 * to.1, out)
}
