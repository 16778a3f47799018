//! Model checkpoint file: 8-byte magic, u32-LE descriptor length, the
//! architecture descriptor as UTF-8 text, u64-LE parameter count, then the
//! parameters as little-endian f64 in descriptor order.

use std::fs;
use std::path::Path;

use vesselaudit_core::net::{ArchDescriptor, ClassifierParams};

const MAGIC: &[u8; 8] = b"VSLCKPT1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic; not a checkpoint file")]
    BadMagic,
    #[error("file ends inside the {0}")]
    Truncated(&'static str),
    #[error("descriptor rejected: {0}")]
    BadDescriptor(String),
    #[error("descriptor wants {expected} parameters, file holds {got}")]
    CountMismatch { expected: usize, got: u64 },
    #[error("parameter {index} is not finite")]
    NonFinite { index: usize },
    #[error("{0} bytes of trailing data")]
    TrailingData(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(params: &ClassifierParams) -> Result<Vec<u8>, CheckpointError> {
    if let Some(index) = params.values.iter().position(|v| !v.is_finite()) {
        return Err(CheckpointError::NonFinite { index });
    }
    let desc = params.arch.to_text();
    let mut out = Vec::with_capacity(8 + 4 + desc.len() + 8 + params.values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(data: &[u8]) -> Result<ClassifierParams, CheckpointError> {
    let mut pos = 0usize;
    let magic = take(data, &mut pos, 8, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let desc_len = u32::from_le_bytes(take(data, &mut pos, 4, "descriptor length")?.try_into().unwrap());
    let desc_bytes = take(data, &mut pos, desc_len as usize, "descriptor")?;
    let desc = std::str::from_utf8(desc_bytes)
        .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;
    let arch = ArchDescriptor::parse_text(desc)
        .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;
    let count = u64::from_le_bytes(take(data, &mut pos, 8, "parameter count")?.try_into().unwrap());
    let expected = arch.param_count();
    if count != expected as u64 {
        return Err(CheckpointError::CountMismatch { expected, got: count });
    }
    let mut values = Vec::with_capacity(expected);
    for index in 0..expected {
        let v = f64::from_le_bytes(take(data, &mut pos, 8, "parameters")?.try_into().unwrap());
        if !v.is_finite() {
            return Err(CheckpointError::NonFinite { index });
        }
        values.push(v);
    }
    if pos != data.len() {
        return Err(CheckpointError::TrailingData(data.len() - pos));
    }
    Ok(ClassifierParams { arch, values })
}

pub fn save(params: &ClassifierParams, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ClassifierParams, CheckpointError> {
    decode(&fs::read(path)?)
}

fn take<'a>(data: &'a [u8], pos: &mut usize, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
    let end = pos.checked_add(n).filter(|&e| e <= data.len());
    match end {
        Some(end) => {
            let slice = &data[*pos..end];
            *pos = end;
            Ok(slice)
        }
        None => Err(CheckpointError::Truncated(what)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_params() -> ClassifierParams {
        let arch = ArchDescriptor::new(8, vec![2, 3]).unwrap();
        ClassifierParams::init(arch, 11)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = toy_params();
        let bytes = encode(&params).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back.arch, params.arch);
        assert_eq!(back.values, params.values);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode(&toy_params()).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated(_))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn count_mismatch_detected() {
        let params = toy_params();
        let desc = params.arch.to_text();
        let count_at = 8 + 4 + desc.len();
        let mut bytes = encode(&params).unwrap();
        bytes[count_at] ^= 1;
        assert!(matches!(decode(&bytes), Err(CheckpointError::CountMismatch { .. })));
    }

    #[test]
    fn non_finite_values_rejected_both_ways() {
        let mut params = toy_params();
        params.values[3] = f64::NAN;
        assert!(matches!(encode(&params), Err(CheckpointError::NonFinite { index: 3 })));

        let bytes = encode(&toy_params()).unwrap();
        let desc_len = toy_params().arch.to_text().len();
        let first_value = 8 + 4 + desc_len + 8;
        let mut bytes = bytes;
        bytes[first_value..first_value + 8].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(CheckpointError::NonFinite { index: 0 })));
    }

    #[test]
    fn garbled_descriptor_rejected() {
        let params = toy_params();
        let mut bytes = encode(&params).unwrap();
        bytes[12] = b'?';
        assert!(matches!(decode(&bytes), Err(CheckpointError::BadDescriptor(_))));
    }

    #[test]
    fn trailing_data_rejected() {
        let mut bytes = encode(&toy_params()).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(CheckpointError::TrailingData(1))));
    }
}
