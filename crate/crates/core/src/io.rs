//! Height-field state files: a one-line JSON header followed by the data
//! block, either CSV text or raw little-endian `f64`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, WaveError};
use crate::strip::{GridSpec, HeightField, StripGrid};

pub const FORMAT_NAME: &str = "strata-wave-field";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Csv,
    F64le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub grid: GridSpec,
    pub config_hash: String,
    pub encoding: Encoding,
    pub data_sha256: String,
    /// Bernoulli head of the state, when known.
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q_head: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of the compact JSON form of `config`. `serde_json::Value` keeps
/// object keys sorted, so key order in the source file does not matter.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes()))
}

fn encode_data(h: &HeightField, encoding: Encoding) -> Vec<u8> {
    let (np, nq) = (h.grid.np, h.grid.nq);
    match encoding {
        Encoding::Csv => {
            let mut out = String::new();
            for i in 0..np {
                let row: Vec<String> = (0..nq).map(|j| format!("{:e}", h.values[(i, j)])).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out.into_bytes()
        }
        Encoding::F64le => {
            let mut out = Vec::with_capacity(8 * np * nq);
            for i in 0..np {
                for j in 0..nq {
                    out.extend_from_slice(&h.values[(i, j)].to_le_bytes());
                }
            }
            out
        }
    }
}

fn decode_data(bytes: &[u8], np: usize, nq: usize, encoding: Encoding) -> Result<DMatrix<f64>> {
    match encoding {
        Encoding::Csv => {
            let text = std::str::from_utf8(bytes).map_err(|e| WaveError::Format(e.to_string()))?;
            let rows: Vec<&str> = text.lines().collect();
            if rows.len() != np {
                return Err(WaveError::Format(format!(
                    "expected {np} rows, found {}",
                    rows.len()
                )));
            }
            let mut m = DMatrix::zeros(np, nq);
            for (i, line) in rows.iter().enumerate() {
                let vals: Vec<&str> = line.split(',').collect();
                if vals.len() != nq {
                    return Err(WaveError::Format(format!(
                        "row {i} has {} values, expected {nq}",
                        vals.len()
                    )));
                }
                for (j, v) in vals.iter().enumerate() {
                    m[(i, j)] = v
                        .trim()
                        .parse()
                        .map_err(|e| WaveError::Format(format!("row {i}, column {j}: {e}")))?;
                }
            }
            Ok(m)
        }
        Encoding::F64le => {
            if bytes.len() != 8 * np * nq {
                return Err(WaveError::Format(format!(
                    "expected {} bytes of data, found {}",
                    8 * np * nq,
                    bytes.len()
                )));
            }
            Ok(DMatrix::from_fn(np, nq, |i, j| {
                let k = 8 * (i * nq + j);
                f64::from_le_bytes(bytes[k..k + 8].try_into().expect("8-byte slice"))
            }))
        }
    }
}

/// Serializes a field. `q_head` and `amplitude` are stored in the header.
pub fn encode_field(
    h: &HeightField,
    config_hash: &str,
    encoding: Encoding,
    q_head: Option<f64>,
    amplitude: Option<f64>,
) -> Result<Vec<u8>> {
    let data = encode_data(h, encoding);
    let header = FieldHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        grid: h.grid.spec(),
        config_hash: config_hash.into(),
        encoding,
        data_sha256: sha256_hex(&data),
        q_head,
        amplitude,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&data);
    Ok(out)
}

/// Parses and checksums a field; a digest mismatch is a `Checksum` error.
pub fn decode_field(bytes: &[u8]) -> Result<(FieldHeader, HeightField)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| WaveError::Format("missing header line".into()))?;
    let header: FieldHeader = serde_json::from_slice(&bytes[..split])?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(WaveError::Format(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let data = &bytes[split + 1..];
    let found = sha256_hex(data);
    if found != header.data_sha256 {
        return Err(WaveError::Checksum {
            expected: header.data_sha256.clone(),
            found,
        });
    }
    let grid = StripGrid::from_spec(header.grid)?;
    let values = decode_data(data, grid.np, grid.nq, header.encoding)?;
    let h = HeightField::new(grid, values)?;
    Ok((header, h))
}

pub fn write_field(
    path: &Path,
    h: &HeightField,
    config_hash: &str,
    encoding: Encoding,
    q_head: Option<f64>,
    amplitude: Option<f64>,
) -> Result<()> {
    std::fs::write(
        path,
        encode_field(h, config_hash, encoding, q_head, amplitude)?,
    )?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, HeightField)> {
    decode_field(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> HeightField {
        let grid = StripGrid::new(8, 6, 2.0 * std::f64::consts::PI, -1.0).unwrap();
        HeightField::from_fn(grid, |q, p| (p + 1.0) * (1.0 + 0.01 * q.cos()) + 1e-17 * q)
    }

    #[test]
    fn both_encodings_round_trip_bitwise() {
        let h = field();
        for enc in [Encoding::Csv, Encoding::F64le] {
            let bytes = encode_field(&h, "abc", enc, Some(3.0), None).unwrap();
            let (hdr, back) = decode_field(&bytes).unwrap();
            assert_eq!(hdr.config_hash, "abc");
            assert_eq!(hdr.q_head, Some(3.0));
            assert_eq!(back.values, h.values);
        }
    }

    #[test]
    fn corruption_is_a_checksum_error() {
        let mut bytes = encode_field(&field(), "abc", Encoding::F64le, None, None).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(matches!(
            decode_field(&bytes),
            Err(WaveError::Checksum { .. })
        ));
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x": 1, "y": [2, 3]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y": [2, 3], "x": 1}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
