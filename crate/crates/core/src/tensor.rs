//! Dense row-major `f64` tensors and their binary serialization.
//!
//! The on-disk layout is `b"CANT"`, a little-endian `u32` rank, one `u32`
//! per extent, then the values as little-endian `f64` in row-major order.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::codec::{checked_u32, put_f64, put_u32, ByteReader};
use crate::error::{CanError, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"CANT";

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(CanError::shape(format!("extents must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CanError::shape(format!(
                "shape {shape:?} holds {expected} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "extents must be positive");
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(CanError::shape(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(CanError::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Slice along the leading axis, keeping the remaining extents.
    pub fn index_outer(&self, i: usize) -> Tensor {
        let inner: usize = self.shape[1..].iter().product();
        let shape = if self.shape.len() > 1 {
            self.shape[1..].to_vec()
        } else {
            vec![1]
        };
        Tensor {
            shape,
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| CanError::shape("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(CanError::shape(format!(
                    "stack: {:?} vs {:?}",
                    t.shape, first.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Tensor::new(&shape, data)
    }

    pub fn encode(&self, out: &mut Vec<u8>) -> Result<()> {
        out.extend_from_slice(TENSOR_MAGIC);
        put_u32(out, checked_u32(self.shape.len(), "rank")?);
        for &d in &self.shape {
            put_u32(out, checked_u32(d, "extent")?);
        }
        out.reserve(self.data.len() * 8);
        for &v in &self.data {
            put_f64(out, v);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.encode(&mut out)?;
        Ok(out)
    }

    pub(crate) fn decode(reader: &mut ByteReader<'_>) -> Result<Tensor> {
        reader.magic(TENSOR_MAGIC)?;
        let rank = reader.u32("rank")? as usize;
        if rank == 0 {
            return Err(reader.error("tensor rank must be at least 1"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = reader.u32("extent")? as usize;
            if d == 0 {
                return Err(reader.error("zero extent"));
            }
            shape.push(d);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| reader.error("element count overflows"))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            data.push(reader.f64("tensor value")?);
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tensor> {
        let mut reader = ByteReader::new(bytes);
        let t = Self::decode(&mut reader)?;
        if !reader.is_empty() {
            return Err(reader.error("trailing bytes after tensor"));
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " {:?}...", &self.data[..SHOWN])
        }
    }
}

/// Encode a sequence of tensors back to back.
pub fn encode_all(tensors: &[&Tensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for t in tensors {
        t.encode(&mut out)?;
    }
    Ok(out)
}

/// Decode every tensor in a buffer produced by [`encode_all`].
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut reader = ByteReader::new(bytes);
    let mut out = Vec::new();
    while !reader.is_empty() {
        out.push(Tensor::decode(&mut reader)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(matches!(
            Tensor::new(&[2, 3], vec![0.0; 5]),
            Err(CanError::Shape(_))
        ));
        assert!(Tensor::new(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn wire_layout_is_little_endian() {
        let t = Tensor::new(&[2], vec![1.0, -2.5]).unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"CANT");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[20..28], &(-2.5f64).to_le_bytes());
        assert_eq!(bytes.len(), 28);
    }

    #[test]
    fn truncated_tensor_names_offset() {
        let t = Tensor::ones(&[3, 2]);
        let bytes = t.to_bytes().unwrap();
        match Tensor::from_bytes(&bytes[..bytes.len() - 3]) {
            Err(CanError::Parse { offset, .. }) => assert_eq!(offset, 4 + 4 + 8 + 5 * 8),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn stream_of_tensors() {
        let a = Tensor::from_fn(&[2, 2], |i| i as f64);
        let b = Tensor::scalar(7.0);
        let bytes = encode_all(&[&a, &b]).unwrap();
        assert_eq!(decode_all(&bytes).unwrap(), vec![a, b]);
    }
}
