use std::path::Path;

use fastquery::io::{write_frequencies, write_json, write_matrix};
use fastquery::quantizer::ChannelStats;
use fastquery::synth::{gaussian_matrix, lognormal_table, zipf_frequencies};
use ndarray::Array2;
use serde::Serialize;

use super::seeded_rng;
use crate::config::GenParams;
use crate::error::CliError;

pub const TABLE: &str = "table.fqm";
pub const QKV: &str = "qkv.fqm";
pub const FREQS: &str = "freqs.txt";

#[derive(Debug, Serialize)]
struct GenSummary {
    m: usize,
    n: usize,
    qkv_dim: usize,
    /// Largest over smallest channel mean absolute value.
    channel_spread: f64,
    total_count: f64,
    files: Vec<&'static str>,
}

pub fn run(p: &GenParams, seed: u64, out: &Path) -> Result<(), CliError> {
    if p.m == 0 || p.n == 0 {
        return Err(CliError::Config(format!("table dimensions must be positive (m={}, n={})", p.m, p.n)));
    }
    if !(p.sigma >= 0.0 && p.sigma.is_finite()) || !(p.zipf_exponent > 0.0) {
        return Err(CliError::Config("sigma must be finite and non-negative and the Zipf exponent positive".into()));
    }
    let mut rng = seeded_rng(seed, 0);
    let w: Array2<f64> = lognormal_table(p.m, p.n, p.sigma, &mut rng);
    write_matrix(&out.join(TABLE), &w)?;
    let mut files = vec![TABLE, FREQS];
    if p.qkv_dim > 0 {
        let qkv: Array2<f64> = gaussian_matrix(p.n, p.qkv_dim, 1.0 / (p.n as f64).sqrt(), &mut rng);
        write_matrix(&out.join(QKV), &qkv)?;
        files.push(QKV);
    }
    let total = p.zipf_total.unwrap_or(20.0 * p.m as f64);
    let freqs: Vec<f64> = zipf_frequencies(p.m, p.zipf_exponent, total);
    write_frequencies(&out.join(FREQS), &freqs)?;

    let stats = ChannelStats::from_table(w.view());
    let max = stats.mean_abs.iter().cloned().fold(f64::MIN, f64::max);
    let min = stats.mean_abs.iter().cloned().fold(f64::MAX, f64::min);
    log::info!("generated {}x{} table, channel spread {:.1}", p.m, p.n, max / min);
    write_json(
        &out.join("gen_summary.json"),
        &GenSummary {
            m: p.m,
            n: p.n,
            qkv_dim: p.qkv_dim,
            channel_spread: max / min,
            total_count: freqs.iter().sum(),
            files,
        },
    )?;
    Ok(())
}
