//! `RTB1` float tensor blobs.
//!
//! Layout: the magic `RTB1`, a `u8` rank (at most 4), `rank` little-endian
//! `u32` dimensions, then the row-major `f32` little-endian payload.

use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::raster::{PredictionMap, Shape};

pub const TENSOR_MAGIC: &[u8; 4] = b"RTB1";
const MAX_RANK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorBlob {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorBlob {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > MAX_RANK {
            return Err(Error::param(format!("tensor rank {} exceeds {MAX_RANK}", dims.len())));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::param("tensor dimension does not fit in u32"));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::param(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_prediction(p: &PredictionMap) -> Self {
        let s = p.shape();
        Self {
            dims: vec![s.height, s.width],
            data: p.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    /// Spatial shape after dropping leading and trailing unit axes.
    pub fn spatial_shape(&self) -> Result<Shape> {
        let mut dims: &[usize] = &self.dims;
        while dims.len() > 2 && dims[0] == 1 {
            dims = &dims[1..];
        }
        while dims.len() > 2 && dims[dims.len() - 1] == 1 {
            dims = &dims[..dims.len() - 1];
        }
        match *dims {
            [h, w] => Ok(Shape::new(h, w)),
            _ => Err(Error::param(format!("tensor dims {:?} are not a 2-D map", self.dims))),
        }
    }

    pub fn to_prediction(&self) -> Result<PredictionMap> {
        PredictionMap::new(self.spatial_shape()?, self.data.iter().map(|&v| v as f64).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::format(0, "missing RTB1 magic"));
        }
        let rank = *bytes.get(4).ok_or_else(|| Error::format(4, "truncated before rank"))? as usize;
        if rank > MAX_RANK {
            return Err(Error::format(4, format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut at = 5;
        for _ in 0..rank {
            let raw = bytes
                .get(at..at + 4)
                .ok_or_else(|| Error::format(at, "truncated dimension list"))?;
            dims.push(u32::from_le_bytes(raw.try_into().expect("4 bytes")) as usize);
            at += 4;
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(5, "dimensions overflow"))?;
        let payload = &bytes[at..];
        if payload.len() != n {
            let offset = at + payload.len().min(n);
            return Err(Error::format(
                offset,
                format!("payload is {} bytes, dims {dims:?} need {n}", payload.len()),
            ));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(path: &Path, t: &TensorBlob) -> Result<()> {
    write_atomic(path, &t.encode())
}

pub fn read_tensor(path: &Path) -> Result<TensorBlob> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorBlob::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.rtb");
        let t = TensorBlob::new(vec![2, 3], vec![0.1, -2.5, f32::MAX, 0.0, -0.0, 1e-30]).unwrap();
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back.dims, t.dims);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.data), bits(&t.data));
    }

    #[test]
    fn empty_tensor() {
        let t = TensorBlob::new(vec![0], vec![]).unwrap();
        let bytes = t.encode();
        assert_eq!(bytes.len(), 9);
        assert_eq!(TensorBlob::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn rejects_bad_blobs() {
        let good = TensorBlob::new(vec![2, 2], vec![1.0; 4]).unwrap().encode();
        let offset = |b: &[u8]| match TensorBlob::decode(b) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected a format error, got {other:?}"),
        };
        let mut wrong = good.clone();
        wrong[0] = b'X';
        assert_eq!(offset(&wrong), 0);
        assert_eq!(offset(&good[..good.len() - 3]), 13 + 13);
        assert_eq!(offset(&good[..7]), 5);
        let mut rank = good.clone();
        rank[4] = 5;
        assert_eq!(offset(&rank), 4);
        let mut long = good.clone();
        long.extend_from_slice(&[0; 4]);
        assert_eq!(offset(&long), 13 + 16);
        assert!(TensorBlob::new(vec![1; 5], vec![1.0]).is_err());
    }

    #[test]
    fn prediction_views() {
        let t = TensorBlob::new(vec![1, 2, 3, 1], vec![0.5; 6]).unwrap();
        assert_eq!(t.spatial_shape().unwrap(), Shape::new(2, 3));
        assert!(TensorBlob::new(vec![2, 2, 2], vec![0.5; 8]).unwrap().spatial_shape().is_err());
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(dims in prop::collection::vec(0usize..4, 0..=4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = TensorBlob::new(dims, data).unwrap();
            let back = TensorBlob::decode(&t.encode()).unwrap();
            prop_assert_eq!(back.dims, t.dims);
            prop_assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
