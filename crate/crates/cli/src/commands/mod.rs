pub mod cost;
pub mod finetune;
pub mod gen;
pub mod quantize;
pub mod query;

use std::path::{Path, PathBuf};

use fastquery::io::{read_matrix, IoError};
use ndarray::Array2;

use crate::error::CliError;

/// Read a real matrix stored as either f64 or f32.
pub fn read_real_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    match read_matrix::<f64>(path) {
        Ok(a) => Ok(a),
        Err(IoError::Format { .. }) => Ok(read_matrix::<f32>(path)?.mapv(f64::from)),
        Err(e) => Err(e.into()),
    }
}

pub fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("no {what} given")))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn seeded_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
