//! Analytic communication accounting and model-versus-transcript checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::transcript::{TrafficMeta, Transcript};
use crate::protocol::{required_plaintext_bits, MessageKind};
use crate::rlwe::CT_HEADER_LEN;

const PRESETS_JSON: &str = include_str!("../presets/methods.json");

#[derive(Debug, Error)]
pub enum CostError {
    #[error("invalid preset file: {0}")]
    Presets(#[from] serde_json::Error),
    #[error("invalid method '{name}': {detail}")]
    Method { name: String, detail: String },
}

/// `ceil(m / N) * N * q` bits of query ciphertexts.
pub fn input_comm_bits(m: usize, degree_n: usize, q_bits: u32) -> u128 {
    m.div_ceil(degree_n) as u128 * degree_n as u128 * q_bits as u128
}

/// `ceil(n_eff / N) * N * q` with PackLWEs; otherwise
/// `ceil(n_eff / ceil(N / m)) * N * q + n_eff * q`.
pub fn output_comm_bits(n_eff: usize, m: usize, degree_n: usize, q_bits: u32, packlwes: bool) -> u128 {
    let nq = degree_n as u128 * q_bits as u128;
    if packlwes {
        return n_eff.div_ceil(degree_n) as u128 * nq;
    }
    let rows_per_poly = degree_n.div_ceil(m.max(1)).max(1);
    n_eff.div_ceil(rows_per_poly) as u128 * nq + n_eff as u128 * q_bits as u128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// The closed-form input and output expressions with `k_c = min(m, N)`.
    ClosedForm,
    /// Minimum over input chunk widths `k_c` with `k_c * k_o <= N`.
    PartitionOptimized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodPreset {
    pub name: String,
    pub label: String,
    pub degree_n: usize,
    pub q_bits: u32,
    pub weight_bits: u32,
    pub input_bits: u32,
    pub one_hot: bool,
    pub slots_per_coeff: usize,
    pub packlwes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presets {
    pub base: Dims,
    pub accounting: Accounting,
    pub methods: Vec<MethodPreset>,
    pub notes: Vec<String>,
}

impl Presets {
    /// The checked-in ablation ladder.
    pub fn shipped() -> Self {
        Self::from_json(PRESETS_JSON).expect("shipped presets parse")
    }

    pub fn from_json(s: &str) -> Result<Self, CostError> {
        let p: Presets = serde_json::from_str(s)?;
        for m in &p.methods {
            if m.degree_n == 0 || m.q_bits == 0 || m.slots_per_coeff == 0 {
                return Err(CostError::Method {
                    name: m.name.clone(),
                    detail: "degree, q_bits and slots_per_coeff must be positive".into(),
                });
            }
        }
        Ok(p)
    }
}

/// One fully resolved method configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: String,
    pub label: String,
    pub m: usize,
    pub n: usize,
    pub degree_n: usize,
    pub q_bits: u32,
    pub p_bits: u32,
    pub one_hot: bool,
    pub slots_per_coeff: usize,
    pub packlwes: bool,
}

impl MethodConfig {
    pub fn from_preset(p: &MethodPreset, dims: Dims) -> Self {
        Self {
            name: p.name.clone(),
            label: p.label.clone(),
            m: dims.m,
            n: dims.n,
            degree_n: p.degree_n,
            q_bits: p.q_bits,
            p_bits: required_plaintext_bits(p.one_hot, p.weight_bits, p.input_bits, dims.m),
            one_hot: p.one_hot,
            slots_per_coeff: p.slots_per_coeff,
            packlwes: p.packlwes,
        }
    }

    pub fn n_eff(&self) -> usize {
        self.n.div_ceil(self.slots_per_coeff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub name: String,
    pub label: String,
    pub m: usize,
    pub n: usize,
    pub n_eff: usize,
    pub degree_n: usize,
    pub q_bits: u32,
    pub p_bits: u32,
    pub packlwes: bool,
    pub chunk_cols: usize,
    pub input_polys: usize,
    pub output_polys: usize,
    pub input_bits: u128,
    pub output_bits: u128,
    pub total_bits: u128,
    pub total_bytes: u128,
    /// `total_bytes / 2^20`.
    pub total_mib: f64,
    pub ratio_vs_baseline: f64,
}

fn cost_at(cfg: &MethodConfig, chunk_cols: usize) -> (usize, usize, u128, u128) {
    let nq = cfg.degree_n as u128 * cfg.q_bits as u128;
    let n_eff = cfg.n_eff();
    let input_polys = cfg.m.div_ceil(chunk_cols);
    let rows = cfg.degree_n / chunk_cols;
    let (output_polys, output_bits) = if cfg.packlwes {
        let polys = n_eff.div_ceil(cfg.degree_n);
        (polys, polys as u128 * nq)
    } else {
        let polys = n_eff.div_ceil(rows);
        (polys, polys as u128 * nq + n_eff as u128 * cfg.q_bits as u128)
    };
    (input_polys, output_polys, input_polys as u128 * nq, output_bits)
}

pub fn method_cost(cfg: &MethodConfig, accounting: Accounting) -> MethodCost {
    let widest = cfg.m.min(cfg.degree_n).max(1);
    let chunk_cols = match accounting {
        Accounting::ClosedForm => widest,
        Accounting::PartitionOptimized => (1..=widest)
            .min_by_key(|&k| {
                let (_, _, i, o) = cost_at(cfg, k);
                (i + o, std::cmp::Reverse(k))
            })
            .expect("non-empty range"),
    };
    let (input_polys, output_polys, input_bits, output_bits) = cost_at(cfg, chunk_cols);
    let total_bits = input_bits + output_bits;
    let total_bytes = total_bits.div_ceil(8);
    MethodCost {
        name: cfg.name.clone(),
        label: cfg.label.clone(),
        m: cfg.m,
        n: cfg.n,
        n_eff: cfg.n_eff(),
        degree_n: cfg.degree_n,
        q_bits: cfg.q_bits,
        p_bits: cfg.p_bits,
        packlwes: cfg.packlwes,
        chunk_cols,
        input_polys,
        output_polys,
        input_bits,
        output_bits,
        total_bits,
        total_bytes,
        total_mib: total_bytes as f64 / (1u64 << 20) as f64,
        ratio_vs_baseline: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub m: usize,
    pub n: usize,
    pub accounting: Accounting,
    pub rows: Vec<MethodCost>,
    pub final_over_baseline: f64,
    pub notes: Vec<String>,
}

pub const CSV_HEADER: &str =
    "name,label,m,n,n_eff,degree_n,q_bits,p_bits,packlwes,chunk_cols,input_polys,output_polys,input_bits,output_bits,total_bits,total_bytes,total_mib,ratio_vs_baseline";

impl CostReport {
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].total_bits <= w[0].total_bits)
    }

    pub fn row(&self, name: &str) -> Option<&MethodCost> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.3}\n",
                r.name,
                r.label,
                r.m,
                r.n,
                r.n_eff,
                r.degree_n,
                r.q_bits,
                r.p_bits,
                r.packlwes,
                r.chunk_cols,
                r.input_polys,
                r.output_polys,
                r.input_bits,
                r.output_bits,
                r.total_bits,
                r.total_bytes,
                r.total_mib,
                r.ratio_vs_baseline
            ));
        }
        out
    }
}

/// The shipped ablation ladder at table size `m x n`.
pub fn method_report(m: usize, n: usize) -> CostReport {
    let presets = Presets::shipped();
    method_report_with(&presets, Dims { m, n }, presets.accounting)
}

pub fn method_report_with(presets: &Presets, dims: Dims, accounting: Accounting) -> CostReport {
    let mut rows: Vec<MethodCost> = presets
        .methods
        .iter()
        .map(|p| method_cost(&MethodConfig::from_preset(p, dims), accounting))
        .collect();
    let base = rows.first().map(|r| r.total_bits).unwrap_or(0);
    for r in &mut rows {
        r.ratio_vs_baseline = if r.total_bits == 0 { 0.0 } else { base as f64 / r.total_bits as f64 };
    }
    CostReport {
        m: dims.m,
        n: dims.n,
        accounting,
        final_over_baseline: rows.last().map_or(1.0, |r| r.ratio_vs_baseline),
        rows,
        notes: presets.notes.clone(),
    }
}

/// Ciphertext traffic of the implemented online query, where every query
/// and response is a full two-polynomial ciphertext of `2 * N * q` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub meta: TrafficMeta,
    pub query_ciphertexts: usize,
    pub response_ciphertexts: usize,
    pub bits_per_ciphertext: u128,
}

impl TrafficModel {
    pub fn online(meta: TrafficMeta) -> Self {
        let k_c = meta.m.min(meta.degree_n).max(1);
        let k_o = meta.degree_n / k_c;
        Self {
            meta,
            query_ciphertexts: meta.m.div_ceil(k_c),
            response_ciphertexts: meta.n_eff.div_ceil(k_o),
            bits_per_ciphertext: 2 * meta.degree_n as u128 * meta.q_bits as u128,
        }
    }

    pub fn query_bits(&self) -> u128 {
        self.query_ciphertexts as u128 * self.bits_per_ciphertext
    }

    pub fn response_bits(&self) -> u128 {
        self.response_ciphertexts as u128 * self.bits_per_ciphertext
    }

    pub fn total_bits(&self) -> u128 {
        self.query_bits() + self.response_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDiff {
    pub parameter: String,
    pub model: u64,
    pub transcript: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub modeled_bits: u128,
    pub measured_bits: u128,
    /// `|measured - modeled| / modeled`.
    pub relative_error: f64,
    pub tolerance: f64,
    pub mismatches: Vec<ParamDiff>,
    pub passed: bool,
    pub message: String,
}

pub const VALIDATION_TOLERANCE: f64 = 0.15;

/// Compare modeled ciphertext bits with the ciphertext payloads in a
/// transcript. Frame headers, setup messages and dealer charges are not
/// counted; the per-ciphertext wire header is.
pub fn validate_transcript(model: &TrafficModel, transcript: &Transcript) -> Validation {
    let measured_bytes =
        transcript.payload_bytes(MessageKind::QueryCiphertexts) + transcript.payload_bytes(MessageKind::ResponseCiphertexts);
    let measured_bits = measured_bytes as u128 * 8;
    let modeled_bits = model.total_bits();
    let mut mismatches = Vec::new();
    if let Some(meta) = &transcript.meta {
        let pairs = [
            ("degree_n", model.meta.degree_n as u64, meta.degree_n as u64),
            ("q_bits", model.meta.q_bits as u64, meta.q_bits as u64),
            ("p_bits", model.meta.p_bits as u64, meta.p_bits as u64),
            ("m", model.meta.m as u64, meta.m as u64),
            ("n", model.meta.n as u64, meta.n as u64),
            ("n_eff", model.meta.n_eff as u64, meta.n_eff as u64),
        ];
        for (name, a, b) in pairs {
            if a != b {
                mismatches.push(ParamDiff {
                    parameter: name.into(),
                    model: a,
                    transcript: b,
                });
            }
        }
    }
    let relative_error = if modeled_bits == 0 {
        f64::INFINITY
    } else {
        (measured_bits as f64 - modeled_bits as f64).abs() / modeled_bits as f64
    };
    let (passed, message) = if measured_bits == 0 {
        (false, "transcript carries no ciphertext traffic".to_string())
    } else if !mismatches.is_empty() {
        let names: Vec<_> = mismatches
            .iter()
            .map(|d| format!("{} (model {}, transcript {})", d.parameter, d.model, d.transcript))
            .collect();
        (false, format!("parameter mismatch: {}", names.join(", ")))
    } else if relative_error > VALIDATION_TOLERANCE {
        (false, format!("measured traffic deviates from the model by {:.2}%", relative_error * 100.0))
    } else {
        (true, format!("measured traffic within {:.3}% of the model", relative_error * 100.0))
    };
    Validation {
        modeled_bits,
        measured_bits,
        relative_error,
        tolerance: VALIDATION_TOLERANCE,
        mismatches,
        passed,
        message,
    }
}

/// Per-ciphertext wire overhead on top of the `2 * N * q` payload bits.
pub fn ciphertext_header_bytes() -> usize {
    CT_HEADER_LEN
}
