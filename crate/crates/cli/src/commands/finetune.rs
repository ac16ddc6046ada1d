use std::path::Path;

use fastquery::finetune::{finetune, FinetuneConfig};
use fastquery::io::{read_frequencies, write_json, write_quantized_table};
use fastquery::quantizer::{reconstruction_error, QuantConfig};
use fastquery::synth::gaussian_matrix;
use serde::Serialize;

use super::{read_real_matrix, required, seeded_rng};
use crate::config::FinetuneParams;
use crate::error::CliError;

pub const TABLE_STEM: &str = "finetuned";

#[derive(Debug, Serialize)]
struct FinetuneMetrics {
    threshold: f64,
    initial_loss: f64,
    best_loss: f64,
    best_iteration: usize,
    loss_history: Vec<f64>,
    /// Running minimum of the loss history.
    best_loss_curve: Vec<f64>,
    channel_bits: Vec<u32>,
    scales: Vec<f64>,
    reconstruction_error: f64,
}

pub fn run(p: &FinetuneParams, seed: u64, out: &Path) -> Result<(), CliError> {
    let w = read_real_matrix(required(&p.table, "input table")?)?;
    let wqkv = match &p.qkv {
        Some(path) => read_real_matrix(path)?,
        None if p.qkv_dim > 0 => gaussian_matrix(w.ncols(), p.qkv_dim, 1.0 / (w.ncols() as f64).sqrt(), &mut seeded_rng(seed, 2)),
        None => return Err(CliError::Config("no QKV projection given and qkv_dim is 0".into())),
    };
    let mut freqs = match &p.freqs {
        Some(path) => read_frequencies(path, w.nrows())?,
        None => vec![1.0; w.nrows()],
    };
    let mean = freqs.iter().sum::<f64>() / freqs.len().max(1) as f64;
    if p.normalize_freqs && mean > 0.0 {
        freqs.iter_mut().for_each(|f| *f /= mean);
    }
    let config = FinetuneConfig {
        learning_rate: p.learning_rate,
        iterations: p.iterations,
        freq_threshold: p.freq_threshold,
        seed,
        quant: QuantConfig {
            criterion: p.criterion,
            bit_combo: p.bit_combo.clone(),
            pow2_scales: p.pow2_scales,
            seed,
            ..QuantConfig::default()
        },
    };
    let r = finetune(w.view(), wqkv.view(), &freqs, &config)?;
    write_quantized_table(&out.join(TABLE_STEM), &r.table)?;
    let best_loss_curve = r
        .loss_history
        .iter()
        .scan(f64::INFINITY, |best, &l| {
            *best = best.min(l);
            Some(*best)
        })
        .collect();
    log::info!("best loss {:.4e} at iteration {}", r.best_loss, r.best_iteration);
    write_json(
        &out.join("finetune_metrics.json"),
        &FinetuneMetrics {
            threshold: r.threshold,
            initial_loss: r.loss_history[0],
            best_loss: r.best_loss,
            best_iteration: r.best_iteration,
            best_loss_curve,
            channel_bits: r.table.channel_bits.clone(),
            scales: r.table.scales.clone(),
            reconstruction_error: reconstruction_error(w.view(), &r.table, None)?,
            loss_history: r.loss_history,
        },
    )?;
    Ok(())
}
