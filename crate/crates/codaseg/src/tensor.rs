//! Dtype-tagged tensor container and its on-disk format.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! magic   4 bytes  "CDAT"
//! version u32      1
//! dtype   u8       0 = f32, 1 = i32, 2 = u8, 3 = f64
//! rank    u8
//! extents rank x u32
//! payload raw row-major values
//! ```

use crate::arr::{Arr, Scalar};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CDAT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic {found:?} at byte offset {offset} (expected \"CDAT\")")]
    BadMagic { found: [u8; 4], offset: usize },
    #[error("unsupported container version {found} at byte offset {offset}")]
    BadVersion { found: u32, offset: usize },
    #[error("unknown dtype code {code} at byte offset {offset}")]
    UnknownDtype { code: u8, offset: usize },
    #[error("zero extent on axis {axis} at byte offset {offset}")]
    ZeroExtent { axis: usize, offset: usize },
    #[error("truncated payload: expected {expected} bytes, got {actual} (at byte offset {offset})")]
    Truncated {
        expected: usize,
        actual: usize,
        offset: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    I32 = 1,
    U8 = 2,
    F64 = 3,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8, offset: usize) -> Result<Self, TensorError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::I32),
            2 => Ok(Dtype::U8),
            3 => Ok(Dtype::F64),
            _ => Err(TensorError::UnknownDtype { code, offset }),
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            Dtype::F32 | Dtype::I32 => 4,
            Dtype::U8 => 1,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
    F64(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::I32(v) => v.len(),
            Payload::U8(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            Payload::F32(_) => Dtype::F32,
            Payload::I32(_) => Dtype::I32,
            Payload::U8(_) => Dtype::U8,
            Payload::F64(_) => Dtype::F64,
        }
    }
}

/// Rank/shape/dtype-tagged dense array; the universal interchange unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    payload: Payload,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, payload: Payload) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            payload.len(),
            "shape/payload mismatch"
        );
        Tensor { shape, payload }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        self.payload.dtype()
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn from_arr<F: Scalar>(arr: &Arr<F>) -> Tensor
    where
        Payload: FromScalarSlice<F>,
    {
        Tensor::new(arr.shape().to_vec(), Payload::from_slice(arr.data()))
    }

    pub fn from_u8(shape: Vec<usize>, data: Vec<u8>) -> Tensor {
        Tensor::new(shape, Payload::U8(data))
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.payload {
            Payload::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.payload {
            Payload::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_arr_f32(&self) -> Option<Arr<f32>> {
        self.as_f32()
            .map(|d| Arr::from_vec(&self.shape, d.to_vec()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let w = self.dtype().byte_width();
        let mut out = Vec::with_capacity(10 + 4 * self.shape.len() + w * self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        for &e in &self.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        match &self.payload {
            Payload::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Payload::I32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Payload::U8(v) => out.extend_from_slice(v),
            Payload::F64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Tensor, TensorError> {
        let need = |want: usize, at: usize| -> Result<(), TensorError> {
            if bytes.len() < at + want {
                Err(TensorError::Truncated {
                    expected: at + want,
                    actual: bytes.len(),
                    offset: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4, 0)?;
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[0..4]);
        if magic != MAGIC {
            return Err(TensorError::BadMagic {
                found: magic,
                offset: 0,
            });
        }
        need(4, 4)?;
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(TensorError::BadVersion {
                found: version,
                offset: 4,
            });
        }
        need(2, 8)?;
        let dtype = Dtype::from_code(bytes[8], 8)?;
        let rank = bytes[9] as usize;
        need(4 * rank, 10)?;
        let mut shape = Vec::with_capacity(rank);
        for axis in 0..rank {
            let off = 10 + 4 * axis;
            let e = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            if e == 0 {
                return Err(TensorError::ZeroExtent { axis, offset: off });
            }
            shape.push(e);
        }
        let payload_off = 10 + 4 * rank;
        let count: usize = shape.iter().product();
        let expected_bytes = count * dtype.byte_width();
        if bytes.len() - payload_off != expected_bytes {
            return Err(TensorError::Truncated {
                expected: payload_off + expected_bytes,
                actual: bytes.len(),
                offset: payload_off,
            });
        }
        let raw = &bytes[payload_off..];
        let payload = match dtype {
            Dtype::F32 => Payload::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::I32 => Payload::I32(
                raw.chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => Payload::U8(raw.to_vec()),
            Dtype::F64 => Payload::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Tensor { shape, payload })
    }
}

/// Writes a tensor container to `path`.
pub fn write_tensor(t: &Tensor, path: &Path) -> Result<(), TensorError> {
    let mut f = File::create(path)?;
    f.write_all(&t.encode())?;
    Ok(())
}

/// Reads a tensor container from `path`.
pub fn read_tensor(path: &Path) -> Result<Tensor, TensorError> {
    let mut f = File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    Tensor::decode(&bytes)
}

pub trait FromScalarSlice<F> {
    fn from_slice(data: &[F]) -> Payload;
}

impl FromScalarSlice<f32> for Payload {
    fn from_slice(data: &[f32]) -> Payload {
        Payload::F32(data.to_vec())
    }
}

impl FromScalarSlice<f64> for Payload {
    fn from_slice(data: &[f64]) -> Payload {
        Payload::F64(data.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes_match_format() {
        let t = Tensor::new(vec![2, 3], Payload::F32(vec![0.0; 6]));
        let bytes = t.encode();
        assert_eq!(&bytes[0..4], b"CDAT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 0); // f32 dtype code
        assert_eq!(bytes[9], 2); // rank
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 18 + 6 * 4);
    }

    #[test]
    fn roundtrip_bit_exact() {
        let t = Tensor::new(
            vec![2, 2],
            Payload::F32(vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25e-12]),
        );
        let back = Tensor::decode(&t.encode()).unwrap();
        assert_eq!(t.encode(), back.encode());
        let u = Tensor::new(vec![3], Payload::U8(vec![0, 255, 7]));
        assert_eq!(Tensor::decode(&u.encode()).unwrap(), u);
    }

    #[test]
    fn truncation_names_byte_counts() {
        let t = Tensor::new(vec![4], Payload::F32(vec![1.0, 2.0, 3.0, 4.0]));
        let mut bytes = t.encode();
        bytes.truncate(bytes.len() - 3);
        match Tensor::decode(&bytes) {
            Err(TensorError::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!(expected, 14 + 16);
                assert_eq!(actual, 14 + 16 - 3);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let t = Tensor::new(vec![1], Payload::U8(vec![9]));
        let mut bytes = t.encode();
        bytes[0] = b'X';
        match Tensor::decode(&bytes) {
            Err(TensorError::BadMagic { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn unknown_dtype_rejected() {
        let t = Tensor::new(vec![1], Payload::U8(vec![9]));
        let mut bytes = t.encode();
        bytes[8] = 42;
        match Tensor::decode(&bytes) {
            Err(TensorError::UnknownDtype { code, offset }) => {
                assert_eq!(code, 42);
                assert_eq!(offset, 8);
            }
            other => panic!("expected unknown dtype, got {other:?}"),
        }
    }
}
