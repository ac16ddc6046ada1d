use std::path::Path;

use fastquery::io::{read_frequencies, read_json, write_json, write_quantized_table};
use fastquery::quantizer::{
    compare_criteria, quantize_table, reconstruction_error, ChannelStats, ComparisonRow, Criterion, Granularity,
    QuantConfig,
};
use fastquery::synth::synthetic_channel_stats;
use ndarray::Array2;
use serde::Serialize;

use super::{read_real_matrix, required, seeded_rng, write_text};
use crate::config::QuantizeParams;
use crate::error::CliError;

pub const TABLE_STEM: &str = "quantized";

#[derive(Debug, Serialize)]
struct QuantMetrics {
    criterion: Criterion,
    granularity: Granularity,
    bit_combo: Vec<u32>,
    /// Bit-width of each stored (permuted) channel.
    channel_bits: Vec<u32>,
    scales: Vec<f64>,
    permutation: Vec<usize>,
    reconstruction_error: f64,
    weighted_reconstruction_error: Option<f64>,
    stats_source: String,
}

fn load_stats(p: &QuantizeParams, w: &Array2<f64>, seed: u64, needed: bool) -> Result<(Option<ChannelStats<f64>>, String), CliError> {
    if let Some(path) = &p.stats {
        let stats: ChannelStats<f64> = read_json(path)?;
        return Ok((Some(stats), path.display().to_string()));
    }
    if !needed {
        return Ok((None, "none".into()));
    }
    log::warn!("no channel statistics given; synthesizing them from the table");
    Ok((Some(synthetic_channel_stats(w.view(), p.stats_noise, &mut seeded_rng(seed, 1))), "synthetic".into()))
}

fn needs_stats(c: Criterion) -> bool {
    !matches!(c, Criterion::AbsoluteValue | Criterion::Random)
}

pub fn run(p: &QuantizeParams, seed: u64, out: &Path) -> Result<(), CliError> {
    let w = read_real_matrix(required(&p.table, "input table")?)?;
    let freqs = p.freqs.as_deref().map(|f| read_frequencies(f, w.nrows())).transpose()?;
    if p.compare {
        let (stats, _) = load_stats(p, &w, seed, p.compare_criteria.iter().any(|&c| needs_stats(c)))?;
        let rows = compare_criteria(w.view(), &p.compare_criteria, &p.compare_combos, stats.as_ref(), freqs.as_deref(), seed)?;
        write_json(&out.join("comparison.json"), &rows)?;
        write_text(&out.join("comparison.csv"), &comparison_csv(&rows))?;
        return Ok(());
    }
    let (stats, stats_source) = load_stats(p, &w, seed, needs_stats(p.criterion))?;
    let config = QuantConfig {
        granularity: p.granularity,
        bit_combo: p.bit_combo.clone(),
        criterion: p.criterion,
        pow2_scales: p.pow2_scales,
        seed,
    };
    let q = quantize_table(w.view(), &config, stats.as_ref())?;
    write_quantized_table(&out.join(TABLE_STEM), &q)?;
    let metrics = QuantMetrics {
        criterion: p.criterion,
        granularity: p.granularity,
        bit_combo: q.bit_combo.clone(),
        channel_bits: q.channel_bits.clone(),
        scales: q.scales.clone(),
        permutation: q.permutation.clone(),
        reconstruction_error: reconstruction_error(w.view(), &q, None)?,
        weighted_reconstruction_error: freqs.as_deref().map(|f| reconstruction_error(w.view(), &q, Some(f))).transpose()?,
        stats_source,
    };
    log::info!("reconstruction error {:.4e}", metrics.reconstruction_error);
    write_json(&out.join("quant_metrics.json"), &metrics)?;
    Ok(())
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("criterion,bit_combo,error\n");
    for r in rows {
        let combo: Vec<String> = r.bit_combo.iter().map(u32::to_string).collect();
        s.push_str(&format!("{},{},{:.6e}\n", r.criterion.name(), combo.join("-"), r.error));
    }
    s
}
