//! `fastquery`: synthetic data, quantization, fine-tuning, protocol runs and
//! cost reports.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use fastquery::costmodel::Accounting;
use fastquery::quantizer::{Criterion, Granularity};

use config::{parse_combo, ConfigFile, QueryMode, Timestamps, RESOLVED_CONFIG};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fastquery", version, about = "Private embedding-table queries over RLWE")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic table, token frequencies and optional QKV projection.
    Gen(GenArgs),
    /// Quantize a table, or compare saliency criteria across bit combinations.
    Quantize(QuantizeArgs),
    /// Fine-tune a table against the quantization-aware proxy loss.
    Finetune(FinetuneArgs),
    /// Run private lookups end to end and check them against the table.
    Query(QueryArgs),
    /// Report the communication ladder of the method presets.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    zipf_exponent: Option<f64>,
    #[arg(long)]
    zipf_total: Option<f64>,
    /// Columns of the QKV projection (0 for none).
    #[arg(long)]
    qkv_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    /// Table matrix (token-major, f32 or f64).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Token frequency file weighting the reconstruction error.
    #[arg(long)]
    freqs: Option<PathBuf>,
    /// Channel statistics JSON (`mean_abs`, `gradient`, `hessian`).
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Comma-separated slot widths, e.g. 4,3,3.
    #[arg(long, value_parser = parse_combo)]
    bit_combo: Option<::std::vec::Vec<u32>>,
    #[arg(long, value_parser = parse_granularity)]
    granularity: Option<Granularity>,
    #[arg(long)]
    pow2_scales: Option<bool>,
    /// Quantize under every criterion and combination and tabulate the errors.
    #[arg(long)]
    compare: bool,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    qkv: Option<PathBuf>,
    #[arg(long)]
    qkv_dim: Option<usize>,
    #[arg(long)]
    freqs: Option<PathBuf>,
    /// Rescale frequencies to mean 1 before training.
    #[arg(long)]
    normalize_freqs: Option<bool>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Frequency clip; ten times the median frequency by default.
    #[arg(long)]
    freq_threshold: Option<f64>,
    #[arg(long)]
    criterion: Option<Criterion>,
    #[arg(long, value_parser = parse_combo)]
    bit_combo: Option<::std::vec::Vec<u32>>,
    #[arg(long)]
    pow2_scales: Option<bool>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long, value_enum)]
    mode: Option<QueryMode>,
    /// Quantized table stem (values `.fqm` and sidecar `.json`).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Number of sampled tokens.
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long, value_parser = parse_combo)]
    bit_combo: Option<::std::vec::Vec<u32>>,
    /// Entry width of the baseline table.
    #[arg(long)]
    weight_bits: Option<u32>,
    #[arg(long)]
    align: Option<bool>,
    #[arg(long)]
    mask: Option<bool>,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_parser = parse_accounting)]
    accounting: Option<Accounting>,
    /// Method preset JSON replacing the shipped ladder.
    #[arg(long)]
    presets: Option<PathBuf>,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown granularity '{s}'"))
}

fn parse_accounting(s: &str) -> Result<Accounting, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown accounting '{s}'"))
}

macro_rules! overlay {
    ($target:expr, $args:expr, $($field:ident),+) => {
        $(if let Some(v) = $args.$field { $target.$field = v; })+
    };
}

macro_rules! overlay_opt {
    ($target:expr, $args:expr, $($field:ident),+) => {
        $(if $args.$field.is_some() { $target.$field = $args.$field; })+
    };
}

/// Merge flags over the config file into a fully resolved config.
fn resolve(cli: Cli) -> Result<ConfigFile, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut resolved = ConfigFile {
        seed: Some(cli.seed.or(file.seed).unwrap_or(0)),
        out: Some(cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"))),
        ..ConfigFile::default()
    };
    match cli.command {
        Command::Gen(a) => {
            let mut p = file.gen.unwrap_or_default();
            overlay!(p, a, m, n, sigma, zipf_exponent, qkv_dim);
            overlay_opt!(p, a, zipf_total);
            resolved.gen = Some(p);
        }
        Command::Quantize(a) => {
            let mut p = file.quantize.unwrap_or_default();
            overlay_opt!(p, a, table, freqs, stats);
            overlay!(p, a, criterion, bit_combo, granularity, pow2_scales);
            p.compare |= a.compare;
            resolved.quantize = Some(p);
        }
        Command::Finetune(a) => {
            let mut p = file.finetune.unwrap_or_default();
            overlay_opt!(p, a, table, qkv, freqs, freq_threshold);
            overlay!(p, a, qkv_dim, normalize_freqs, learning_rate, iterations, criterion, bit_combo, pow2_scales);
            resolved.finetune = Some(p);
        }
        Command::Query(a) => {
            let mut p = file.query.unwrap_or_default();
            overlay_opt!(p, a, table, m, n);
            overlay!(p, a, mode, tokens, bit_combo, weight_bits, align, mask);
            commands::query::fill_dims(&mut p);
            resolved.query = Some(p);
        }
        Command::Cost(a) => {
            let mut p = file.cost.unwrap_or_default();
            overlay!(p, a, m, n);
            overlay_opt!(p, a, accounting, presets);
            resolved.cost = Some(p);
        }
    }
    Ok(resolved)
}

fn dispatch(resolved: &ConfigFile, seed: u64, out: &Path) -> Result<(), CliError> {
    if let Some(p) = &resolved.gen {
        commands::gen::run(p, seed, out)
    } else if let Some(p) = &resolved.quantize {
        commands::quantize::run(p, seed, out)
    } else if let Some(p) = &resolved.finetune {
        commands::finetune::run(p, seed, out)
    } else if let Some(p) = &resolved.query {
        commands::query::run(p, seed, out)
    } else if let Some(p) = &resolved.cost {
        commands::cost::run(p, out)
    } else {
        Err(CliError::Config("no command selected".into()))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    let mut resolved = resolve(cli)?;
    let seed = resolved.seed.unwrap_or(0);
    let out = resolved.out.clone().unwrap_or_default();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    log::info!("writing artifacts to {}", out.display());
    let outcome = dispatch(&resolved, seed, &out);
    resolved.timestamps = Some(Timestamps {
        started_unix_ms: started,
        elapsed_ms: clock.elapsed().as_millis(),
    });
    fastquery::io::write_json(&out.join(RESOLVED_CONFIG), &resolved)?;
    outcome
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FASTQUERY_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
