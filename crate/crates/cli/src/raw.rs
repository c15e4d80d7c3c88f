//! Raw float tensors: `m u32 | k u32 | m*k f32`, all little-endian, row-major.

use std::io::Write;

use ternlut_core::FloatMatrix;

use crate::error::{CliError, CliResult};

pub fn decode(bytes: &[u8]) -> CliResult<FloatMatrix> {
    if bytes.len() < 8 {
        return Err(CliError::Format(
            "raw tensor shorter than its 8-byte header".into(),
        ));
    }
    let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    let expected = m
        .checked_mul(k)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| CliError::Format(format!("{m}x{k} overflows")))?;
    if body.len() != expected {
        return Err(CliError::Format(format!(
            "{m}x{k} raw tensor needs {expected} data bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FloatMatrix::new(m, k, data)?)
}

pub fn encode(matrix: &FloatMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + matrix.data().len() * 4);
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read(path: &std::path::Path) -> CliResult<FloatMatrix> {
    decode(&std::fs::read(path)?)
}

pub fn write(path: &std::path::Path, matrix: &FloatMatrix) -> CliResult<()> {
    std::fs::File::create(path)?.write_all(&encode(matrix))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = FloatMatrix::new(2, 3, vec![1.0, -2.5, 0.0, 3.25, 4.0, -0.125]).unwrap();
        let bytes = encode(&m);
        assert_eq!(bytes.len(), 8 + 24);
        assert_eq!(decode(&bytes).unwrap(), m);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&bytes[..4]).is_err());
    }
}
