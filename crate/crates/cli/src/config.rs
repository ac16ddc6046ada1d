//! Config file format, shared by `--config` input and the resolved-config
//! artifact each run writes.

use std::path::{Path, PathBuf};

use fastquery::costmodel::Accounting;
use fastquery::quantizer::{Criterion, Granularity};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantize: Option<QuantizeParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finetune: Option<FinetuneParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostParams>,
    /// Wall-clock information; ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub m: usize,
    pub n: usize,
    /// Log-normal spread of per-channel standard deviations.
    pub sigma: f64,
    pub zipf_exponent: f64,
    /// Total token count; defaults to `20 * m`.
    pub zipf_total: Option<f64>,
    /// Columns of the generated QKV projection; 0 skips it.
    pub qkv_dim: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            m: 8192,
            n: 384,
            sigma: 1.0,
            zipf_exponent: 1.1,
            zipf_total: None,
            qkv_dim: 0,
        }
    }
}

pub fn default_combos() -> Vec<Vec<u32>> {
    vec![vec![4, 3, 3], vec![5, 3, 2], vec![6, 2, 2]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeParams {
    pub table: Option<PathBuf>,
    pub freqs: Option<PathBuf>,
    /// Per-channel gradient/Hessian statistics; synthesized from the table
    /// when absent and a criterion needs them.
    pub stats: Option<PathBuf>,
    pub stats_noise: f64,
    pub criterion: Criterion,
    pub bit_combo: Vec<u32>,
    pub granularity: Granularity,
    pub pow2_scales: bool,
    pub compare: bool,
    pub compare_criteria: Vec<Criterion>,
    pub compare_combos: Vec<Vec<u32>>,
}

impl Default for QuantizeParams {
    fn default() -> Self {
        Self {
            table: None,
            freqs: None,
            stats: None,
            stats_noise: 0.5,
            criterion: Criterion::AbsoluteValue,
            bit_combo: vec![4, 3, 3],
            granularity: Granularity::PerChannel,
            pow2_scales: true,
            compare: false,
            compare_criteria: Criterion::ALL.to_vec(),
            compare_combos: default_combos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneParams {
    pub table: Option<PathBuf>,
    pub qkv: Option<PathBuf>,
    /// Columns of the synthesized projection used when `qkv` is absent.
    pub qkv_dim: usize,
    pub freqs: Option<PathBuf>,
    /// Rescale frequencies to mean 1 before training.
    pub normalize_freqs: bool,
    pub learning_rate: f64,
    pub iterations: usize,
    pub freq_threshold: Option<f64>,
    pub criterion: Criterion,
    pub bit_combo: Vec<u32>,
    pub pow2_scales: bool,
}

impl Default for FinetuneParams {
    fn default() -> Self {
        Self {
            table: None,
            qkv: None,
            qkv_dim: 64,
            freqs: None,
            normalize_freqs: true,
            learning_rate: 1e-3,
            iterations: 500,
            freq_threshold: None,
            criterion: Criterion::AbsoluteValue,
            bit_combo: vec![4, 3, 3],
            pow2_scales: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Online,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryParams {
    pub mode: QueryMode,
    /// Stem of a quantized table; random values are used when absent.
    pub table: Option<PathBuf>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub tokens: usize,
    pub bit_combo: Vec<u32>,
    pub weight_bits: u32,
    pub align: bool,
    pub mask: bool,
}

impl Default for QueryParams {
    fn default() -> Self {
        Self {
            mode: QueryMode::Online,
            table: None,
            m: None,
            n: None,
            tokens: 10,
            bit_combo: vec![4, 3, 3],
            weight_bits: 4,
            align: true,
            mask: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub m: usize,
    pub n: usize,
    /// Overrides the preset file's accounting.
    pub accounting: Option<Accounting>,
    pub presets: Option<PathBuf>,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            m: 32000,
            n: 4096,
            accounting: None,
            presets: None,
        }
    }
}

pub fn parse_combo(s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|b| b.trim().parse::<u32>().map_err(|e| format!("bit combination '{s}': {e}")))
        .collect()
}
