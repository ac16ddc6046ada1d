//! File formats: a binary matrix container, a JSON sidecar for quantized
//! tables, and two-column token frequency files.
//!
//! Matrix container layout (little-endian): magic `FQMX`, version byte,
//! dtype code byte, rank byte (always 2), `rows: u64`, `cols: u64`, then the
//! row-major payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::{QuantError, QuantizedTable};
use crate::scalar::Real;

pub const MATRIX_MAGIC: [u8; 4] = *b"FQMX";
pub const MATRIX_VERSION: u8 = 1;
pub const MATRIX_HEADER_LEN: usize = 4 + 3 + 16;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Element types storable in the matrix container.
pub trait MatrixElement: Copy + Default {
    const CODE: u8;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

macro_rules! element {
    ($t:ty, $code:expr) => {
        impl MatrixElement for $t {
            const CODE: u8 = $code;
            const SIZE: usize = std::mem::size_of::<$t>();
            fn put(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn get(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().unwrap())
            }
        }
    };
}

element!(f32, 1);
element!(f64, 2);
element!(i8, 3);
element!(u32, 4);
element!(u64, 5);

pub fn encode_matrix<T: MatrixElement>(a: &Array2<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + a.len() * T::SIZE);
    out.extend_from_slice(&MATRIX_MAGIC);
    out.extend_from_slice(&[MATRIX_VERSION, T::CODE, 2]);
    out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
    for &v in a.iter() {
        v.put(&mut out);
    }
    out
}

pub fn decode_matrix<T: MatrixElement>(bytes: &[u8], path: &Path) -> Result<Array2<T>, IoError> {
    if bytes.len() < MATRIX_HEADER_LEN || bytes[..4] != MATRIX_MAGIC {
        return Err(format_err(path, "not a matrix container"));
    }
    if bytes[4] != MATRIX_VERSION {
        return Err(format_err(path, format!("unsupported container version {}", bytes[4])));
    }
    if bytes[5] != T::CODE {
        return Err(format_err(path, format!("dtype code {} where {} was expected", bytes[5], T::CODE)));
    }
    if bytes[6] != 2 {
        return Err(format_err(path, format!("rank {} matrices are not supported", bytes[6])));
    }
    let rows = u64::from_le_bytes(bytes[7..15].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[15..23].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(T::SIZE))
        .ok_or_else(|| format_err(path, "dimensions overflow"))?;
    let payload = &bytes[MATRIX_HEADER_LEN..];
    if payload.len() != expected {
        return Err(format_err(path, format!("payload of {} bytes, expected {expected}", payload.len())));
    }
    let data = payload.chunks_exact(T::SIZE).map(T::get).collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_matrix<T: MatrixElement>(path: &Path, a: &Array2<T>) -> Result<(), IoError> {
    fs::write(path, encode_matrix(a)).map_err(io_err(path))
}

pub fn read_matrix<T: MatrixElement>(path: &Path) -> Result<Array2<T>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_matrix(&bytes, path)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S, IoError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything of a quantized table except its integer values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSidecar {
    pub channels: usize,
    pub tokens: usize,
    pub channel_bits: Vec<u32>,
    pub scales: Vec<f64>,
    pub permutation: Vec<usize>,
    pub bit_combo: Vec<u32>,
    pub pow2_scales: bool,
}

/// Paths of the values container and sidecar for a table stem.
pub fn table_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("fqm"), stem.with_extension("json"))
}

pub fn write_quantized_table<T: Real>(stem: &Path, table: &QuantizedTable<T>) -> Result<(), IoError> {
    let (values, sidecar) = table_paths(stem);
    write_matrix(&values, &table.values)?;
    write_json(
        &sidecar,
        &QuantSidecar {
            channels: table.channels(),
            tokens: table.tokens(),
            channel_bits: table.channel_bits.clone(),
            scales: table.scales.iter().map(|s| s.to_f64().unwrap()).collect(),
            permutation: table.permutation.clone(),
            bit_combo: table.bit_combo.clone(),
            pow2_scales: table.pow2_scales,
        },
    )
}

pub fn read_quantized_table<T: Real>(stem: &Path) -> Result<QuantizedTable<T>, IoError> {
    let (values_path, sidecar_path) = table_paths(stem);
    let values: Array2<i8> = read_matrix(&values_path)?;
    let meta: QuantSidecar = read_json(&sidecar_path)?;
    if values.dim() != (meta.channels, meta.tokens) {
        return Err(format_err(&sidecar_path, "sidecar dimensions disagree with the values container"));
    }
    let table = QuantizedTable {
        values,
        channel_bits: meta.channel_bits,
        scales: meta.scales.into_iter().map(T::lit).collect(),
        permutation: meta.permutation,
        bit_combo: meta.bit_combo,
        pow2_scales: meta.pow2_scales,
    };
    table.validate()?;
    Ok(table)
}

/// Two whitespace-separated columns `token_id count`; `#` starts a comment.
/// Tokens not listed get frequency 0.
pub fn read_frequencies(path: &Path, m: usize) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_frequencies(&text, m).map_err(|d| format_err(path, d))
}

pub fn parse_frequencies(text: &str, m: usize) -> Result<Vec<f64>, String> {
    let mut out = vec![0.0; m];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(id), Some(count), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(format!("line {}: expected two columns", lineno + 1));
        };
        let id: usize = id.parse().map_err(|e| format!("line {}: token id: {e}", lineno + 1))?;
        let count: f64 = count.parse().map_err(|e| format!("line {}: count: {e}", lineno + 1))?;
        if id >= m {
            return Err(format!("line {}: token {id} outside vocabulary of {m}", lineno + 1));
        }
        if !(count >= 0.0) || !count.is_finite() {
            return Err(format!("line {}: count must be finite and non-negative", lineno + 1));
        }
        out[id] = count;
    }
    Ok(out)
}

pub fn write_frequencies(path: &Path, freqs: &[f64]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    writeln!(buf, "# token_id count").unwrap();
    for (t, f) in freqs.iter().enumerate() {
        writeln!(buf, "{t} {f}").unwrap();
    }
    fs::write(path, buf).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn header_layout() {
        let a = array![[1i8, -2, 3], [4, 5, -6]];
        let bytes = encode_matrix(&a);
        assert_eq!(&bytes[..7], b"FQMX\x01\x03\x02");
        assert_eq!(bytes.len(), MATRIX_HEADER_LEN + 6);
        assert_eq!(decode_matrix::<i8>(&bytes, Path::new("x")).unwrap(), a);
        assert!(decode_matrix::<f32>(&bytes, Path::new("x")).is_err());
        assert!(decode_matrix::<i8>(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
    }

    #[test]
    fn frequency_text() {
        let f = parse_frequencies("# c\n0 5\n2 1.5\n", 4).unwrap();
        assert_eq!(f, vec![5.0, 0.0, 1.5, 0.0]);
        assert!(parse_frequencies("7 1\n", 4).is_err());
        assert!(parse_frequencies("1 -1\n", 4).is_err());
        assert!(parse_frequencies("1\n", 4).is_err());
    }
}
