//! Data-free fine-tuning of a quantized embedding table.
//!
//! A continuous proxy `W_c` is optimized so that its quantization, projected
//! through the QKV weights, matches the projection of the original table
//! under a clipped per-token frequency weighting. Gradients flow through the
//! quantizer with a straight-through estimator.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::{
    assign_bitwidths, channel_saliency, channel_scale, quantize_with_bits, QuantConfig, QuantError, QuantizedTable,
};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinetuneError {
    #[error("frequency of token {token} is negative or non-finite")]
    Frequency { token: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("diverged at iteration {iteration}: loss {loss} exceeds 10x the initial loss {initial}")]
    Diverged { iteration: usize, loss: f64, initial: f64 },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig<T> {
    pub learning_rate: T,
    pub iterations: usize,
    /// Frequency clip `τ`; `None` means ten times the median frequency.
    pub freq_threshold: Option<T>,
    pub seed: u64,
    pub quant: QuantConfig,
}

impl<T: Real> Default for FinetuneConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(1e-3),
            iterations: 500,
            freq_threshold: None,
            seed: 0,
            quant: QuantConfig::default(),
        }
    }
}

impl<T: Real> FinetuneConfig<T> {
    pub fn validate(&self) -> Result<(), FinetuneError> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(FinetuneError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(tau) = self.freq_threshold {
            if !(tau > T::zero()) {
                return Err(FinetuneError::Config(format!("frequency threshold must be positive, got {tau}")));
            }
        }
        self.quant.validate()?;
        Ok(())
    }
}

/// Clipped per-token weights `min(f_t, τ)`: the diagonal of `I_token`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFrequency<T> {
    pub raw: Vec<T>,
    pub clipped: Vec<T>,
    pub threshold: T,
}

impl<T: Real> TokenFrequency<T> {
    pub fn len(&self) -> usize {
        self.clipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clipped.is_empty()
    }
}

pub fn build_freq_matrix<T: Real>(freqs: &[T], tau: T) -> Result<TokenFrequency<T>, FinetuneError> {
    if let Some(token) = freqs.iter().position(|f| !(*f >= T::zero()) || !f.is_finite()) {
        return Err(FinetuneError::Frequency { token });
    }
    if !(tau > T::zero()) {
        return Err(FinetuneError::Config(format!("frequency threshold must be positive, got {tau}")));
    }
    Ok(TokenFrequency {
        raw: freqs.to_vec(),
        clipped: freqs.iter().map(|&f| f.min(tau)).collect(),
        threshold: tau,
    })
}

/// Ten times the median frequency (mean of the middle pair for even counts).
pub fn default_threshold<T: Real>(freqs: &[T]) -> T {
    if freqs.is_empty() {
        return T::one();
    }
    let mut sorted = freqs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        (sorted[k / 2 - 1] + sorted[k / 2]) / T::lit(2.0)
    };
    let tau = T::lit(10.0) * median;
    if tau > T::zero() {
        tau
    } else {
        T::one()
    }
}

/// How the continuous proxy maps to the table that enters the loss.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// Per-channel quantizer with fixed bit-widths and scales recomputed
    /// from the proxy.
    Quantize { channel_bits: Vec<u32>, pow2_scales: bool },
    /// `Q(W) = W`, a smooth surrogate.
    Identity,
}

impl Projection {
    /// Projected token-major table and the straight-through mask.
    pub fn apply<T: Real>(&self, wc: ArrayView2<'_, T>) -> Result<(Array2<T>, Array2<T>), FinetuneError> {
        match self {
            Projection::Identity => Ok((wc.to_owned(), Array2::ones(wc.dim()))),
            Projection::Quantize {
                channel_bits,
                pow2_scales,
            } => {
                if channel_bits.len() != wc.ncols() {
                    return Err(FinetuneError::Shape {
                        expected: format!("{} channel bit-widths", wc.ncols()),
                        got: channel_bits.len().to_string(),
                    });
                }
                let mut q = Array2::zeros(wc.dim());
                let mut mask = Array2::zeros(wc.dim());
                for (c, col) in wc.axis_iter(Axis(1)).enumerate() {
                    let b = channel_bits[c];
                    let max_abs = col.iter().fold(T::zero(), |a, v| a.max(v.abs()));
                    let s = channel_scale(max_abs, b, *pow2_scales);
                    let lo = -T::lit(2f64.powi(b as i32 - 1));
                    let hi = T::lit(2f64.powi(b as i32 - 1) - 1.0);
                    for (t, &v) in col.iter().enumerate() {
                        let r = (v / s).round();
                        let inside = r >= lo && r <= hi;
                        q[[t, c]] = r.max(lo).min(hi) * s;
                        mask[[t, c]] = if inside { T::one() } else { T::zero() };
                    }
                }
                Ok((q, mask))
            }
        }
    }
}

fn check_shapes<T>(wc: ArrayView2<'_, T>, w: ArrayView2<'_, T>, wqkv: ArrayView2<'_, T>, freq: &TokenFrequency<T>) -> Result<(), FinetuneError> {
    let shape_err = |expected: String, got: String| Err(FinetuneError::Shape { expected, got });
    if wc.dim() != w.dim() {
        return shape_err(format!("proxy {:?}", w.dim()), format!("{:?}", wc.dim()));
    }
    if wqkv.nrows() != w.ncols() {
        return shape_err(format!("QKV with {} rows", w.ncols()), wqkv.nrows().to_string());
    }
    if freq.clipped.len() != w.nrows() {
        return shape_err(format!("{} token frequencies", w.nrows()), freq.clipped.len().to_string());
    }
    Ok(())
}

/// Row-weighted projection residual `I (P(W_c) - W) W_qkv` and the mask.
fn residual<T: Real>(
    wc: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    wqkv: ArrayView2<'_, T>,
    freq: &TokenFrequency<T>,
    proj: &Projection,
) -> Result<(Array2<T>, Array2<T>), FinetuneError> {
    check_shapes(wc, w, wqkv, freq)?;
    let (q, mask) = proj.apply(wc)?;
    let mut r = (&q - &w).dot(&wqkv);
    for (mut row, &f) in r.outer_iter_mut().zip(&freq.clipped) {
        row.mapv_inplace(|v| v * f);
    }
    Ok((r, mask))
}

/// Squared Frobenius norm of `I (P(W_c) W_qkv - W W_qkv)`.
pub fn loss<T: Real>(
    wc: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    wqkv: ArrayView2<'_, T>,
    freq: &TokenFrequency<T>,
    proj: &Projection,
) -> Result<T, FinetuneError> {
    let (r, _) = residual(wc, w, wqkv, freq, proj)?;
    Ok(r.iter().fold(T::zero(), |a, v| a + *v * *v))
}

/// Straight-through gradient `2 mask ⊙ (I^T I (P(W_c) - W) W_qkv W_qkv^T)`.
pub fn grad_ste<T: Real>(
    wc: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    wqkv: ArrayView2<'_, T>,
    freq: &TokenFrequency<T>,
    proj: &Projection,
) -> Result<Array2<T>, FinetuneError> {
    let (g, _) = loss_and_grad(wc, w, wqkv, freq, proj)?;
    Ok(g)
}

fn loss_and_grad<T: Real>(
    wc: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    wqkv: ArrayView2<'_, T>,
    freq: &TokenFrequency<T>,
    proj: &Projection,
) -> Result<(Array2<T>, T), FinetuneError> {
    let (mut r, mask) = residual(wc, w, wqkv, freq, proj)?;
    let l = r.iter().fold(T::zero(), |a, v| a + *v * *v);
    for (mut row, &f) in r.outer_iter_mut().zip(&freq.clipped) {
        row.mapv_inplace(|v| v * f);
    }
    let mut g = r.dot(&wqkv.t());
    let two = T::lit(2.0);
    Zip::from(&mut g).and(&mask).for_each(|g, &m| *g = two * m * *g);
    Ok((g, l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneResult<T> {
    pub table: QuantizedTable<T>,
    /// Loss before each step, followed by the loss after the final step.
    pub loss_history: Vec<T>,
    pub best_iteration: usize,
    pub best_loss: T,
    pub threshold: T,
}

/// Plain gradient descent on the proxy, starting from `W`, returning the
/// quantization of the best observed iterate.
///
/// Bit-widths and the channel permutation are fixed up front from `W` using
/// the configured saliency criterion, which therefore must not need
/// auxiliary statistics.
pub fn finetune<T: Real>(
    w: ArrayView2<'_, T>,
    wqkv: ArrayView2<'_, T>,
    freqs: &[T],
    config: &FinetuneConfig<T>,
) -> Result<FinetuneResult<T>, FinetuneError> {
    config.validate()?;
    let tau = config.freq_threshold.unwrap_or_else(|| default_threshold(freqs));
    let freq = build_freq_matrix(freqs, tau)?;
    let scores = channel_saliency(w, config.quant.criterion, None, config.quant.seed)?;
    let bits = assign_bitwidths(&scores, &config.quant.bit_combo, w.ncols())?;
    let proj = Projection::Quantize {
        channel_bits: bits.clone(),
        pow2_scales: config.quant.pow2_scales,
    };

    let mut wc = w.to_owned();
    let mut best = wc.clone();
    let (mut g, l0) = loss_and_grad(wc.view(), w, wqkv, &freq, &proj)?;
    let mut history = vec![l0];
    let mut best_loss = l0;
    let mut best_iteration = 0;
    let limit = T::lit(10.0) * l0;
    for it in 1..=config.iterations {
        wc.scaled_add(-config.learning_rate, &g);
        let (ng, l) = loss_and_grad(wc.view(), w, wqkv, &freq, &proj)?;
        history.push(l);
        if !l.is_finite() || (l0 > T::zero() && l > limit) {
            return Err(FinetuneError::Diverged {
                iteration: it,
                loss: l.to_f64().unwrap_or(f64::INFINITY),
                initial: l0.to_f64().unwrap_or(0.0),
            });
        }
        if l < best_loss {
            best_loss = l;
            best_iteration = it;
            best.assign(&wc);
        }
        g = ng;
        log::debug!("finetune iteration {it}: loss {l}");
    }
    log::info!("finetune: initial loss {l0}, best loss {best_loss} at iteration {best_iteration}");
    let table = quantize_with_bits(best.view(), &bits, &config.quant)?;
    Ok(FinetuneResult {
        table,
        loss_history: history,
        best_iteration,
        best_loss,
        threshold: tau,
    })
}
