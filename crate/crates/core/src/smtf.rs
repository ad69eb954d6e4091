//! SMTF binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SMTF" | u32 version (=1) | u32 ndim | ndim x u32 dims | prod(dims) x f32
//! ```
//!
//! Payload is row-major; feature maps are stored as `[H, W, C]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

pub const MAGIC: &[u8; 4] = b"SMTF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::LengthMismatch(data.len(), n));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad SMTF magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported SMTF version {version}")));
        }
        let ndim = r.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("SMTF dims overflow".into()))?;
        let payload = r.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::Format("SMTF dims overflow".into()))?,
        )?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after SMTF payload",
                bytes.len() - r.pos
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated SMTF file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl From<&FeatureMap> for Tensor {
    fn from(m: &FeatureMap) -> Self {
        Self {
            dims: vec![m.height(), m.width(), m.channels()],
            data: m.data().to_vec(),
        }
    }
}

impl TryFrom<Tensor> for FeatureMap {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        match t.dims[..] {
            [h, w, c] => FeatureMap::new(h, w, c, t.data),
            _ => Err(Error::Format(format!(
                "feature map tensor must be 3-D [H, W, C], got {:?}",
                t.dims
            ))),
        }
    }
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    Tensor::read(path)?.try_into()
}

pub fn write_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    Tensor::from(map).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"SMTF");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..16], &[1, 0, 0, 0]);
        assert_eq!(&b[16..20], &[2, 0, 0, 0]);
        assert_eq!(&b[20..24], &1.0f32.to_le_bytes());
        assert_eq!(&b[24..28], &(-2.5f32).to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn rejects_malformed() {
        let good = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().to_bytes();
        assert!(Tensor::from_bytes(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(Tensor::from_bytes(&extra).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(Tensor::from_bytes(&magic).is_err());
        let mut version = good;
        version[4] = 2;
        assert!(Tensor::from_bytes(&version).is_err());
    }

    #[test]
    fn feature_map_requires_three_dims() {
        let t = Tensor::new(vec![4], vec![0.0; 4]).unwrap();
        assert!(FeatureMap::try_from(t).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(dims in prop::collection::vec(1usize..5, 0..4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| (i as f32 + seed as f32).sin()).collect();
            let t = Tensor::new(dims, data).unwrap();
            prop_assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
