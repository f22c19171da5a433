//! The IDX container used by MNIST.
//!
//! Layout: two zero bytes, a type code (`0x08` unsigned byte, `0x0E` f64),
//! the number of dimensions, one big-endian `u32` per dimension, then the
//! elements in row-major order, big-endian.

use alloc::format;
use alloc::vec::Vec;

use super::{one_hot, Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MNIST_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABELS_MAGIC: u32 = 0x0000_0801;

const TYPE_U8: u8 = 0x08;
const TYPE_F64: u8 = 0x0E;

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    F64(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        let code = match self.data {
            IdxData::U8(_) => TYPE_U8,
            IdxData::F64(_) => TYPE_F64,
        };
        (u32::from(code) << 8) | self.dims.len() as u32
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset, "truncated header"))
}

pub fn decode(bytes: &[u8]) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0)?;
    if magic >> 16 != 0 {
        return Err(Error::format(0, format!("bad magic {magic:#010x}")));
    }
    let code = (magic >> 8) as u8;
    let ndims = (magic & 0xff) as usize;
    let elem = match code {
        TYPE_U8 => 1,
        TYPE_F64 => 8,
        other => {
            return Err(Error::format(2, format!("unsupported element type {other:#04x}")));
        }
    };
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        dims.push(read_u32(bytes, 4 + 4 * i)? as usize);
    }
    let start = 4 + 4 * ndims;
    let count: usize = dims.iter().product();
    let end = start + count * elem;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len(),
            format!("truncated data: expected {end} bytes"),
        ));
    }
    let body = &bytes[start..end];
    let data = match code {
        TYPE_U8 => IdxData::U8(body.to_vec()),
        _ => IdxData::F64(
            body.chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ),
    };
    Ok(IdxArray { dims, data })
}

pub fn encode(arr: &IdxArray) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&arr.magic().to_be_bytes());
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    match &arr.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
    }
    out
}

fn expect_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::format(
            0,
            format!("bad magic {magic:#010x}, expected {want:#010x}"),
        ));
    }
    Ok(())
}

/// Decodes an MNIST image/label pair: pixels scaled to `[0, 1]`, labels
/// one-hot over 10 classes.
pub fn mnist_dataset(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    expect_magic(images, MNIST_IMAGES_MAGIC)?;
    expect_magic(labels, MNIST_LABELS_MAGIC)?;
    let img = decode(images)?;
    let lab = decode(labels)?;
    let (IdxData::U8(pixels), IdxData::U8(classes)) = (img.data, lab.data) else {
        unreachable!("magic checked above");
    };
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::format(
            4,
            format!("label count {} differs from image count {n}", lab.dims[0]),
        ));
    }
    if let Some(i) = classes.iter().position(|&l| l > 9) {
        return Err(Error::format(8 + i, format!("label {} > 9", classes[i])));
    }
    let d = img.dims[1] * img.dims[2];
    let x = Tensor::matrix(n, d, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let t = one_hot(&classes, 10)?;
    Dataset::new(x, t, split)
}

/// Encodes a real-valued dataset as two f64 IDX arrays `(x, t)`.
pub fn encode_dataset(data: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let arr = |t: &Tensor| IdxArray {
        dims: t.shape().to_vec(),
        data: IdxData::F64(t.data().to_vec()),
    };
    (encode(&arr(data.x())), encode(&arr(data.t())))
}

pub fn decode_dataset(x: &[u8], t: &[u8], split: Split) -> Result<Dataset> {
    let tensor = |bytes: &[u8]| -> Result<Tensor> {
        let arr = decode(bytes)?;
        let data = match arr.data {
            IdxData::F64(v) => v,
            IdxData::U8(v) => v.into_iter().map(f64::from).collect(),
        };
        Tensor::new(arr.dims, data)
    };
    Dataset::new(tensor(x)?, tensor(t)?, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn images(n: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 0x08, 0x03];
        for d in [n, 2, 2] {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn labels(ls: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 0x08, 0x01];
        b.extend_from_slice(&(ls.len() as u32).to_be_bytes());
        b.extend_from_slice(ls);
        b
    }

    #[test]
    fn decodes_mnist_pair() {
        let ds = mnist_dataset(&images(1, &[0, 255, 51, 0]), &labels(&[3]), Split::Train).unwrap();
        assert_eq!(ds.x().data(), &[0.0, 1.0, 0.2, 0.0]);
        assert_eq!(ds.t().row(0)[3], 1.0);
        assert_eq!(ds.t().sum(), 1.0);
    }

    #[test]
    fn rejects_wrong_magic() {
        let mut img = images(1, &[0; 4]);
        img[3] = 0x02;
        let err = mnist_dataset(&img, &labels(&[0]), Split::Train).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }

    #[test]
    fn rejects_truncation_and_bad_labels() {
        let img = images(2, &[0; 5]);
        assert!(matches!(
            mnist_dataset(&img, &labels(&[0, 1]), Split::Train),
            Err(Error::Format { offset: 21, .. })
        ));
        let img = images(2, &[0; 8]);
        assert!(matches!(
            mnist_dataset(&img, &labels(&[0, 10]), Split::Train),
            Err(Error::Format { offset: 9, .. })
        ));
        assert!(matches!(decode(&[0, 0, 8]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn f64_dataset_roundtrip_is_bitwise() {
        let x = Tensor::matrix(2, 2, vec![0.1, -3.5e-300, f64::MAX, 7.0]).unwrap();
        let t = Tensor::matrix(2, 1, vec![1.0 / 3.0, -0.0]).unwrap();
        let ds = Dataset::new(x, t, Split::Valid).unwrap();
        let (bx, bt) = encode_dataset(&ds);
        let back = decode_dataset(&bx, &bt, Split::Valid).unwrap();
        for (a, b) in back.x().data().iter().zip(ds.x().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.t().data()[1].to_bits(), (-0.0f64).to_bits());
    }
}
