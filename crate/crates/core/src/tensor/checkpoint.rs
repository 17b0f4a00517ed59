//! Versioned binary container for named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "HGOCRCKP"
//! version u32      currently 1
//! count   u32      number of tensors
//! table   per tensor: name_len u32, name bytes (UTF-8),
//!                     dtype u8 (0 = f32, 1 = f64),
//!                     ndim u32, dims u64 × ndim
//! payload raw element bytes per tensor, in table order
//! ```
//!
//! Writing the same tensors twice produces byte-identical files.

use std::io::{Read, Write};

use thiserror::Error;

use super::{Dtype, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"HGOCRCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("bad magic bytes; not a tensor checkpoint")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A loaded tensor of either payload dtype.
#[derive(Clone, Debug, PartialEq)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl DynTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            DynTensor::F32(_) => Dtype::F32,
            DynTensor::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            DynTensor::F32(t) => t.shape(),
            DynTensor::F64(t) => t.shape(),
        }
    }

    pub fn as_f32(&self) -> Option<&Tensor<f32>> {
        match self {
            DynTensor::F32(t) => Some(t),
            DynTensor::F64(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<&Tensor<f64>> {
        match self {
            DynTensor::F64(t) => Some(t),
            DynTensor::F32(_) => None,
        }
    }
}

impl<T: Scalar> From<Tensor<T>> for DynTensor {
    fn from(t: Tensor<T>) -> DynTensor {
        // T is f32 or f64 by construction of Scalar
        match T::DTYPE {
            Dtype::F32 => {
                let data = t.data().iter().map(|v| v.as_f64() as f32).collect();
                DynTensor::F32(Tensor::new(t.shape().to_vec(), data).expect("same shape"))
            }
            Dtype::F64 => {
                let data = t.data().iter().map(|v| v.as_f64()).collect();
                DynTensor::F64(Tensor::new(t.shape().to_vec(), data).expect("same shape"))
            }
        }
    }
}

/// Serializes named tensors in the container format.
pub fn write_tensors<W: Write>(
    mut out: W,
    entries: &[(String, DynTensor)],
) -> Result<(), CheckpointError> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&u32::try_from(entries.len()).expect("entry count fits u32").to_le_bytes())?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        out.write_all(&u32::try_from(name_bytes.len()).expect("name fits u32").to_le_bytes())?;
        out.write_all(name_bytes)?;
        let dtype: u8 = match tensor.dtype() {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        };
        out.write_all(&[dtype])?;
        let shape = tensor.shape();
        out.write_all(&u32::try_from(shape.len()).expect("ndim fits u32").to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    let mut payload = Vec::new();
    for (_, tensor) in entries {
        match tensor {
            DynTensor::F32(t) => {
                for &v in t.data() {
                    v.write_le(&mut payload);
                }
            }
            DynTensor::F64(t) => {
                for &v in t.data() {
                    v.write_le(&mut payload);
                }
            }
        }
    }
    out.write_all(&payload)?;
    Ok(())
}

/// Reads a container written by [`write_tensors`].
pub fn read_tensors<R: Read>(mut input: R) -> Result<Vec<(String, DynTensor)>, CheckpointError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let count = read_u32(&mut input)? as usize;
    if count > 1_000_000 {
        return Err(CheckpointError::Corrupt("implausible tensor count"));
    }
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        if name_len > 4096 {
            return Err(CheckpointError::Corrupt("implausible name length"));
        }
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name =
            String::from_utf8(name).map_err(|_| CheckpointError::Corrupt("name not UTF-8"))?;
        let mut dtype = [0u8; 1];
        input.read_exact(&mut dtype)?;
        let dtype = match dtype[0] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            _ => return Err(CheckpointError::Corrupt("unknown dtype")),
        };
        let ndim = read_u32(&mut input)? as usize;
        if ndim > 32 {
            return Err(CheckpointError::Corrupt("implausible rank"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut buf = [0u8; 8];
            input.read_exact(&mut buf)?;
            let d = u64::from_le_bytes(buf);
            if d == 0 || d > u64::MAX / 8 {
                return Err(CheckpointError::Corrupt("bad extent"));
            }
            shape.push(d as usize);
        }
        headers.push((name, dtype, shape));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, dtype, shape) in headers {
        let len: usize = shape.iter().product();
        let mut raw = vec![0u8; len * dtype.size()];
        input.read_exact(&mut raw)?;
        let tensor = match dtype {
            Dtype::F32 => {
                let data = raw.chunks_exact(4).map(f32::read_le).collect();
                DynTensor::F32(
                    Tensor::new(shape, data)
                        .map_err(|_| CheckpointError::Corrupt("shape/data mismatch"))?,
                )
            }
            Dtype::F64 => {
                let data = raw.chunks_exact(8).map(f64::read_le).collect();
                DynTensor::F64(
                    Tensor::new(shape, data)
                        .map_err(|_| CheckpointError::Corrupt("shape/data mismatch"))?,
                )
            }
        };
        entries.push((name, tensor));
    }
    Ok(entries)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_entries() -> Vec<(String, DynTensor)> {
        vec![
            ("layer/weight".into(), DynTensor::F32(Tensor::from_fn(&[2, 3], |i| i as f32 * 0.5))),
            ("layer/bias".into(), DynTensor::F64(Tensor::from_fn(&[3], |i| -(i as f64)))),
        ]
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let entries = sample_entries();
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &entries).unwrap();
        let loaded = read_tensors(bytes.as_slice()).unwrap();
        assert_eq!(loaded, entries);
        let mut again = Vec::new();
        write_tensors(&mut again, &loaded).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &sample_entries()).unwrap();
        bytes[0] ^= 0xFF;
        assert!(matches!(read_tensors(bytes.as_slice()), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &sample_entries()).unwrap();
        bytes[8] = 99;
        assert!(matches!(read_tensors(bytes.as_slice()), Err(CheckpointError::BadVersion(99))));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &sample_entries()).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_tensors(bytes.as_slice()).is_err());
    }
}
