//! Feature tensor files.
//!
//! Layout (little-endian): magic `HMX1`, u32 version, u32 n_frames,
//! u32 n_dims, f64 hop_seconds, then `n_frames * n_dims` f32 row-major.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"HMX1";
pub const TENSOR_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub hop_seconds: f64,
    /// `n_frames × n_dims`.
    pub data: Array2<f32>,
}

impl FeatureTensor {
    pub fn from_f64(data: &Array2<f64>, hop_seconds: f64) -> Self {
        Self {
            hop_seconds,
            data: data.mapv(|v| v as f32),
        }
    }

    pub fn from_column(values: &[f64], hop_seconds: f64) -> Self {
        let data = Array2::from_shape_fn((values.len(), 1), |(i, _)| values[i] as f32);
        Self { hop_seconds, data }
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.data.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_dims() as u32).to_le_bytes());
        out.extend_from_slice(&self.hop_seconds.to_le_bytes());
        for v in self.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, "truncated header"));
        }
        if &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::format(path, "bad magic, expected HMX1"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != TENSOR_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n_frames = u32_at(8) as usize;
        let n_dims = u32_at(12) as usize;
        let hop_seconds = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != 4 * n_frames * n_dims {
            return Err(Error::format(
                path,
                format!(
                    "payload is {} bytes, header promises {n_frames}x{n_dims} f32",
                    payload.len()
                ),
            ));
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = Array2::from_shape_vec((n_frames, n_dims), values)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Self { hop_seconds, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
