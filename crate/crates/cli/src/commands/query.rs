use std::path::Path;

use fastquery::costmodel::{validate_transcript, TrafficModel, Validation};
use fastquery::io::{read_json, read_quantized_table, table_paths, write_json, QuantSidecar};
use fastquery::protocol::online::ServerOptions;
use fastquery::protocol::transcript::TranscriptSummary;
use fastquery::protocol::{run_baseline_offline, run_online_query, DealerConfig, OnlineConfig, ServerTable, Transcript};
use fastquery::ring::RingParams;
use fastquery::coeff_packing::DEFAULT_WEIGHT_CACHE_BYTES;
use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use super::{seeded_rng, write_text};
use crate::config::{QueryMode, QueryParams};
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct QuerySummary {
    mode: QueryMode,
    m: usize,
    n: usize,
    tokens: Vec<usize>,
    matched: usize,
    mismatched_tokens: Vec<usize>,
    /// Traffic of the first query.
    transcript: TranscriptSummary,
    /// Model check of every query's transcript (online mode only).
    all_validated: Option<bool>,
}

/// Fill unset table dimensions from the table sidecar or the mode defaults.
pub fn fill_dims(p: &mut QueryParams) {
    if let Some(stem) = &p.table {
        if let Ok(meta) = read_json::<QuantSidecar>(&table_paths(stem).1) {
            p.m.get_or_insert(meta.tokens);
            p.n.get_or_insert(meta.channels);
        }
    }
    let (m, n) = match p.mode {
        QueryMode::Online => (8192, 384),
        QueryMode::Baseline => (64, 8),
    };
    p.m.get_or_insert(m);
    p.n.get_or_insert(n);
}

fn random_values(n: usize, m: usize, bits: &[u32], rng: &mut impl Rng) -> Array2<i8> {
    Array2::from_shape_fn((n, m), |(c, _)| {
        let half = 1i8 << (bits[c] - 1);
        rng.random_range(-half..half)
    })
}

pub fn run(p: &QueryParams, seed: u64, out: &Path) -> Result<(), CliError> {
    let (m, n) = (p.m.unwrap_or(0), p.n.unwrap_or(0));
    if p.tokens == 0 || m == 0 || n == 0 {
        return Err(CliError::Config(format!("need positive tokens and dimensions (tokens={}, m={m}, n={n})", p.tokens)));
    }
    let mut rng = seeded_rng(seed, 3);
    let (values, mut runner): (Array2<i8>, Box<dyn FnMut(usize, u64) -> Result<(Vec<i64>, Transcript, Option<bool>), CliError>>) =
        match p.mode {
            QueryMode::Online => {
                let params = RingParams::default();
                let (values, table) = match &p.table {
                    Some(stem) => {
                        let q = read_quantized_table::<f64>(stem)?;
                        if (q.tokens(), q.channels()) != (m, n) {
                            return Err(CliError::Config(format!(
                                "table is {}x{} but m={m}, n={n} was requested",
                                q.tokens(),
                                q.channels()
                            )));
                        }
                        let table = ServerTable::new(&q, &params)?;
                        (q.values, table)
                    }
                    None => {
                        if p.bit_combo.is_empty() {
                            return Err(CliError::Config("empty bit combination".into()));
                        }
                        let bits: Vec<u32> = (0..n).map(|c| p.bit_combo[c % p.bit_combo.len()]).collect();
                        if bits.iter().any(|b| !(2..=8).contains(b)) {
                            return Err(CliError::Config(format!("bit combination {:?} outside 2..=8", p.bit_combo)));
                        }
                        let values = random_values(n, m, &bits, &mut rng);
                        let table = ServerTable::from_parts(values.view(), &bits, &p.bit_combo, &params, DEFAULT_WEIGHT_CACHE_BYTES)?;
                        (values, table)
                    }
                };
                let config = OnlineConfig {
                    seed: 0,
                    server: ServerOptions { mask: p.mask },
                    align: p.align.then(DealerConfig::default),
                };
                let model = TrafficModel::online(table.meta());
                let run = move |token: usize, query_seed: u64| {
                    let (res, tr) = run_online_query(&table, token, &OnlineConfig { seed: query_seed, ..config })?;
                    let got = res.reconstruct().map_err(|e| CliError::Runtime(e.to_string()))?;
                    let aligned_ok = res.aligned.as_ref().is_none_or(|a| a.reconstruct() == got);
                    let got = if aligned_ok { got } else { Vec::new() };
                    let valid = validate_transcript(&model, &tr).passed;
                    Ok((got, tr, Some(valid)))
                };
                (values, Box::new(run))
            }
            QueryMode::Baseline => {
                if !(1..=8).contains(&p.weight_bits) {
                    return Err(CliError::Config(format!("weight bits {} outside 1..=8", p.weight_bits)));
                }
                let values = random_values(n, m, &vec![p.weight_bits; n], &mut rng);
                let table = values.clone();
                let bits = p.weight_bits;
                let run = move |token: usize, query_seed: u64| {
                    let (res, tr) = run_baseline_offline(table.view(), bits, token, query_seed)?;
                    Ok((res.reconstruct(), tr, None))
                };
                (values, Box::new(run))
            }
        };

    let tokens: Vec<usize> = (0..p.tokens).map(|_| rng.random_range(0..m)).collect();
    let mut mismatched = Vec::new();
    let mut first: Option<Transcript> = None;
    let mut all_validated: Option<bool> = None;
    for (i, &token) in tokens.iter().enumerate() {
        let (got, tr, valid) = runner(token, seed.wrapping_add(i as u64))?;
        let expected: Vec<i64> = values.column(token).iter().map(|&v| v as i64).collect();
        if got != expected {
            log::warn!("token {token}: reconstruction differs from the table");
            mismatched.push(token);
        }
        if let Some(v) = valid {
            *all_validated.get_or_insert(true) &= v;
        }
        first.get_or_insert(tr);
    }
    let first = first.expect("at least one token");
    let summary = QuerySummary {
        mode: p.mode,
        m,
        n,
        matched: tokens.len() - mismatched.len(),
        tokens,
        mismatched_tokens: mismatched,
        transcript: first.summary(),
        all_validated,
    };
    write_json(&out.join("query_summary.json"), &summary)?;
    write_text(&out.join("transcript.json"), &format!("{}\n", first.to_json()))?;
    if p.mode == QueryMode::Online {
        let meta = first.meta.ok_or_else(|| CliError::Runtime("transcript has no parameters".into()))?;
        let validation: Validation = validate_transcript(&TrafficModel::online(meta), &first);
        write_json(&out.join("validation.json"), &validation)?;
    }
    if !summary.mismatched_tokens.is_empty() {
        return Err(CliError::Validation(format!(
            "{} of {} tokens did not reconstruct",
            summary.mismatched_tokens.len(),
            summary.tokens.len()
        )));
    }
    if summary.all_validated == Some(false) {
        return Err(CliError::Validation("measured traffic disagrees with the cost model".into()));
    }
    Ok(())
}
