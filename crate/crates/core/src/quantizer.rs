//! Per-channel mixed-precision quantization of an embedding table.
//!
//! Real tables are token-major (`m` tokens by `n` channels). Quantized values
//! are stored channel-major (`n x m`) in permuted channel order so that every
//! consecutive group of channels matches the slot layout.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::slot_packing::{make_layout, pack_table, SlotError, SlotLayout};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("criterion {criterion:?} needs {what}, which was not supplied")]
    MissingAux { criterion: Criterion, what: &'static str },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("non-finite or negative channel statistic at channel {0}")]
    BadStats(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("bit-width {0} unsupported; widths must lie in 2..=8")]
    Bits(u32),
    #[error("bit assignment does not fit the combination {combo:?}: {detail}")]
    Assignment { combo: Vec<u32>, detail: String },
    #[error("invalid permutation")]
    Permutation,
    #[error("quantized value {value} out of range for {bits} bits at ({channel}, {token})")]
    ValueRange { value: i8, bits: u32, channel: usize, token: usize },
    #[error("non-positive scale on channel {0}")]
    Scale(usize),
    #[error(transparent)]
    Slot(#[from] SlotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerTensor,
    PerChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    AbsoluteValue,
    Random,
    Gradient,
    Hessian,
    GradientTimesAbsvalue,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::AbsoluteValue,
        Criterion::Random,
        Criterion::Gradient,
        Criterion::Hessian,
        Criterion::GradientTimesAbsvalue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::AbsoluteValue => "absolute_value",
            Criterion::Random => "random",
            Criterion::Gradient => "gradient",
            Criterion::Hessian => "hessian",
            Criterion::GradientTimesAbsvalue => "gradient_times_absvalue",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown criterion '{s}'"))
    }
}

/// Bit-width coefficient width shared by every packed layout.
pub const LAYOUT_P_BITS: u32 = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantConfig {
    pub granularity: Granularity,
    pub bit_combo: Vec<u32>,
    pub criterion: Criterion,
    pub pow2_scales: bool,
    pub seed: u64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            granularity: Granularity::PerChannel,
            bit_combo: vec![4, 3, 3],
            criterion: Criterion::AbsoluteValue,
            pow2_scales: true,
            seed: 0,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<SlotLayout, QuantError> {
        if let Some(&b) = self.bit_combo.iter().find(|&&b| !(2..=8).contains(&b)) {
            return Err(QuantError::Bits(b));
        }
        Ok(make_layout(&self.bit_combo, LAYOUT_P_BITS)?)
    }
}

/// Per-channel statistics feeding the saliency criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats<T> {
    pub mean_abs: Vec<T>,
    pub gradient: Option<Vec<T>>,
    pub hessian: Option<Vec<T>>,
}

impl<T: Real> ChannelStats<T> {
    /// Mean absolute value of every channel of a token-major table.
    pub fn from_table(w: ArrayView2<'_, T>) -> Self {
        let m = T::from_usize_lossy(w.nrows().max(1));
        let mean_abs = w
            .axis_iter(Axis(1))
            .map(|col| col.iter().fold(T::zero(), |acc, v| acc + v.abs()) / m)
            .collect();
        Self {
            mean_abs,
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: Vec<T>) -> Self {
        self.gradient = Some(g);
        self
    }

    pub fn with_hessian(mut self, h: Vec<T>) -> Self {
        self.hessian = Some(h);
        self
    }

    fn check(&self, n: usize) -> Result<(), QuantError> {
        for v in [Some(&self.mean_abs), self.gradient.as_ref(), self.hessian.as_ref()]
            .into_iter()
            .flatten()
        {
            if v.len() != n {
                return Err(QuantError::Shape {
                    expected: format!("{n} channel statistics"),
                    got: v.len().to_string(),
                });
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(QuantError::BadStats(i));
            }
        }
        Ok(())
    }
}

fn check_finite<T: Real>(w: ArrayView2<'_, T>) -> Result<(), QuantError> {
    match w.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(QuantError::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// One non-negative score per channel of a token-major table; higher is
/// more salient. `aux` defaults to statistics computed from `w`.
pub fn channel_saliency<T: Real>(
    w: ArrayView2<'_, T>,
    criterion: Criterion,
    aux: Option<&ChannelStats<T>>,
    seed: u64,
) -> Result<Vec<T>, QuantError> {
    check_finite(w)?;
    let n = w.ncols();
    let own;
    let stats = match aux {
        Some(s) => s,
        None => {
            own = ChannelStats::from_table(w);
            &own
        }
    };
    stats.check(n)?;
    let need = |v: &Option<Vec<T>>, what| {
        v.clone().ok_or(QuantError::MissingAux { criterion, what })
    };
    let scores: Vec<T> = match criterion {
        Criterion::AbsoluteValue => stats.mean_abs.iter().map(|v| v.abs()).collect(),
        Criterion::Random => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..n).map(|_| T::lit(rng.random::<f64>())).collect()
        }
        Criterion::Gradient => need(&stats.gradient, "gradient statistics")?.iter().map(|g| g.abs()).collect(),
        Criterion::Hessian => need(&stats.hessian, "Hessian statistics")?.iter().map(|h| h.abs()).collect(),
        Criterion::GradientTimesAbsvalue => need(&stats.gradient, "gradient statistics")?
            .iter()
            .zip(&stats.mean_abs)
            .map(|(g, a)| g.abs() * a.abs())
            .collect(),
    };
    Ok(scores)
}

/// Number of channels each slot of the layout receives for `n` channels.
///
/// Channels are packed in groups of `k = bit_combo.len()`; the final group
/// may be partial and then fills only its leading slots.
pub fn slot_counts(k: usize, n: usize) -> Vec<usize> {
    let groups = n.div_ceil(k);
    let r = n - groups.saturating_sub(1) * k;
    (0..k).map(|s| groups.saturating_sub(1) + usize::from(s < r)).collect()
}

/// Bit-width per channel: channels ranked by score (ties to the lower index)
/// fill the widest slots first.
pub fn assign_bitwidths<T: Real>(scores: &[T], bit_combo: &[u32], n: usize) -> Result<Vec<u32>, QuantError> {
    if scores.len() != n {
        return Err(QuantError::Shape {
            expected: format!("{n} scores"),
            got: scores.len().to_string(),
        });
    }
    if bit_combo.is_empty() {
        return Err(QuantError::Assignment {
            combo: vec![],
            detail: "empty combination".into(),
        });
    }
    let counts = slot_counts(bit_combo.len(), n);
    let mut slots: Vec<usize> = (0..bit_combo.len()).collect();
    slots.sort_by(|&a, &b| bit_combo[b].cmp(&bit_combo[a]));
    let widths: Vec<u32> = slots
        .iter()
        .flat_map(|&s| std::iter::repeat_n(bit_combo[s], counts[s]))
        .collect();

    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut bits = vec![0u32; n];
    for (&ch, &w) in ranked.iter().zip(&widths) {
        bits[ch] = w;
    }
    Ok(bits)
}

/// `π[k]` is the original channel placed at position `k`; within each width
/// class the original order is kept.
pub fn build_permutation(channel_bits: &[u32], bit_combo: &[u32]) -> Result<Vec<usize>, QuantError> {
    let k = bit_combo.len();
    let err = |detail: String| QuantError::Assignment {
        combo: bit_combo.to_vec(),
        detail,
    };
    if k == 0 {
        return Err(err("empty combination".into()));
    }
    let mut classes: std::collections::BTreeMap<u32, std::collections::VecDeque<usize>> = Default::default();
    for (c, &b) in channel_bits.iter().enumerate() {
        classes.entry(b).or_default().push_back(c);
    }
    let mut perm = Vec::with_capacity(channel_bits.len());
    for pos in 0..channel_bits.len() {
        let want = bit_combo[pos % k];
        let ch = classes
            .get_mut(&want)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| err(format!("no {want}-bit channel left for position {pos}")))?;
        perm.push(ch);
    }
    Ok(perm)
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Reorder the channel columns of a token-major table: column `k` of the
/// result is column `perm[k]` of `w`.
pub fn permute_columns<T: Clone>(w: ArrayView2<'_, T>, perm: &[usize]) -> Array2<T> {
    w.select(Axis(1), perm)
}

/// Reorder rows the same way, e.g. the rows of a QKV projection matrix.
pub fn permute_rows<T: Clone>(w: ArrayView2<'_, T>, perm: &[usize]) -> Array2<T> {
    w.select(Axis(0), perm)
}

fn value_range(bits: u32) -> (i32, i32) {
    let half = 1i32 << (bits - 1);
    (-half, half - 1)
}

/// Symmetric scale `max_abs / (2^(b-1) - 1)`, optionally rounded to the
/// nearest power of two in the log domain (half up). Zero channels get 1.
pub fn channel_scale<T: Real>(max_abs: T, bits: u32, pow2: bool) -> T {
    if max_abs == T::zero() {
        return T::one();
    }
    let raw = max_abs / T::from_i32(value_range(bits).1).unwrap();
    if pow2 {
        T::lit(2.0).powf((raw.log2() + T::lit(0.5)).floor())
    } else {
        raw
    }
}

/// Round half away from zero, then clamp to the signed `bits` range.
pub fn quantize_value<T: Real>(v: T, scale: T, bits: u32) -> i8 {
    let (lo, hi) = value_range(bits);
    let r = (v / scale).round();
    let r = r.max(T::from_i32(lo).unwrap()).min(T::from_i32(hi).unwrap());
    r.to_i32().unwrap() as i8
}

fn check_bits(bits: &[u32]) -> Result<(), QuantError> {
    match bits.iter().find(|b| !(2..=8).contains(*b)) {
        Some(&b) => Err(QuantError::Bits(b)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTable<T> {
    /// Channel-major `n x m` integer values, in permuted channel order.
    pub values: Array2<i8>,
    /// Bit-width of each stored (permuted) channel.
    pub channel_bits: Vec<u32>,
    /// Scale of each stored (permuted) channel.
    pub scales: Vec<T>,
    /// Stored channel `k` is original channel `permutation[k]`.
    pub permutation: Vec<usize>,
    pub bit_combo: Vec<u32>,
    pub pow2_scales: bool,
}

impl<T: Real> QuantizedTable<T> {
    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn tokens(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        let n = self.channels();
        if self.channel_bits.len() != n || self.scales.len() != n || self.permutation.len() != n {
            return Err(QuantError::Shape {
                expected: format!("{n} channel entries"),
                got: format!(
                    "bits {}, scales {}, permutation {}",
                    self.channel_bits.len(),
                    self.scales.len(),
                    self.permutation.len()
                ),
            });
        }
        check_bits(&self.channel_bits)?;
        if !is_permutation(&self.permutation) {
            return Err(QuantError::Permutation);
        }
        if let Some(i) = self.scales.iter().position(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(QuantError::Scale(i));
        }
        for ((channel, token), &v) in self.values.indexed_iter() {
            let bits = self.channel_bits[channel];
            let (lo, hi) = value_range(bits);
            if (v as i32) < lo || (v as i32) > hi {
                return Err(QuantError::ValueRange { value: v, bits, channel, token });
            }
        }
        Ok(())
    }

    /// Whether consecutive channel groups follow the bit combination.
    pub fn matches_layout(&self) -> bool {
        let k = self.bit_combo.len();
        k > 0 && self.channel_bits.iter().enumerate().all(|(c, &b)| b == self.bit_combo[c % k])
    }

    /// Token-major reconstruction; `unpermute` restores original channel order.
    pub fn dequantize(&self, unpermute: bool) -> Array2<T> {
        let (n, m) = self.values.dim();
        let mut out = Array2::<T>::zeros((m, n));
        for ((c, t), &v) in self.values.indexed_iter() {
            let col = if unpermute { self.permutation[c] } else { c };
            out[[t, col]] = T::from_i8(v).unwrap() * self.scales[c];
        }
        out
    }

    /// Stored integer values of token `t`, one per permuted channel.
    pub fn token_values(&self, t: usize) -> Vec<i8> {
        self.values.column(t).to_vec()
    }

    pub fn layout(&self, p_bits: u32) -> Result<SlotLayout, QuantError> {
        Ok(make_layout(&self.bit_combo, p_bits)?)
    }

    /// Slot-packed `ceil(n / k) x m` coefficient table.
    pub fn pack(&self, p_bits: u32) -> Result<Array2<u32>, QuantError> {
        let layout = self.layout(p_bits)?;
        Ok(pack_table(self.values.view(), &self.channel_bits, &layout)?)
    }
}

/// Quantize every channel of a token-major table at its own width.
pub fn quantize_per_channel<T: Real>(w: ArrayView2<'_, T>, channel_bits: &[u32], pow2_scales: bool) -> Result<QuantizedTable<T>, QuantError> {
    check_finite(w)?;
    if channel_bits.len() != w.ncols() {
        return Err(QuantError::Shape {
            expected: format!("{} channel bit-widths", w.ncols()),
            got: channel_bits.len().to_string(),
        });
    }
    check_bits(channel_bits)?;
    let scales: Vec<T> = w
        .axis_iter(Axis(1))
        .zip(channel_bits)
        .map(|(col, &b)| channel_scale(col.iter().fold(T::zero(), |a, v| a.max(v.abs())), b, pow2_scales))
        .collect();
    Ok(quantize_with_scales(w, channel_bits, scales, pow2_scales))
}

fn quantize_with_scales<T: Real>(w: ArrayView2<'_, T>, channel_bits: &[u32], scales: Vec<T>, pow2_scales: bool) -> QuantizedTable<T> {
    let (m, n) = w.dim();
    let values = Array2::from_shape_fn((n, m), |(c, t)| quantize_value(w[[t, c]], scales[c], channel_bits[c]));
    QuantizedTable {
        values,
        channel_bits: channel_bits.to_vec(),
        scales,
        permutation: (0..n).collect(),
        bit_combo: Vec::new(),
        pow2_scales,
    }
}

/// Round-to-nearest with a single scale from the global maximum.
pub fn quantize_per_tensor<T: Real>(w: ArrayView2<'_, T>, bits: u32, pow2_scales: bool) -> Result<QuantizedTable<T>, QuantError> {
    let channel_bits = vec![bits; w.ncols()];
    quantize_shared_scale(w, &channel_bits, bits, pow2_scales)
}

fn quantize_shared_scale<T: Real>(w: ArrayView2<'_, T>, channel_bits: &[u32], scale_bits: u32, pow2_scales: bool) -> Result<QuantizedTable<T>, QuantError> {
    check_finite(w)?;
    check_bits(channel_bits)?;
    check_bits(&[scale_bits])?;
    let max_abs = w.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let scale = channel_scale(max_abs, scale_bits, pow2_scales);
    Ok(quantize_with_scales(w, channel_bits, vec![scale; w.ncols()], pow2_scales))
}

/// Full pipeline: saliency, bit assignment, channel permutation, quantization.
///
/// Under per-tensor granularity every channel shares one scale chosen for
/// the narrowest width in the combination.
pub fn quantize_table<T: Real>(w: ArrayView2<'_, T>, config: &QuantConfig, aux: Option<&ChannelStats<T>>) -> Result<QuantizedTable<T>, QuantError> {
    config.validate()?;
    let scores = channel_saliency(w, config.criterion, aux, config.seed)?;
    let bits = assign_bitwidths(&scores, &config.bit_combo, w.ncols())?;
    quantize_with_bits(w, &bits, config)
}

/// Permute and quantize with an already chosen per-channel bit assignment
/// (indexed by original channel).
pub fn quantize_with_bits<T: Real>(w: ArrayView2<'_, T>, bits: &[u32], config: &QuantConfig) -> Result<QuantizedTable<T>, QuantError> {
    let perm = build_permutation(bits, &config.bit_combo)?;
    let wp = permute_columns(w, &perm);
    let pbits: Vec<u32> = perm.iter().map(|&c| bits[c]).collect();
    let mut table = match config.granularity {
        Granularity::PerChannel => quantize_per_channel(wp.view(), &pbits, config.pow2_scales)?,
        Granularity::PerTensor => {
            let narrow = *config.bit_combo.iter().min().expect("validated combination");
            quantize_shared_scale(wp.view(), &pbits, narrow, config.pow2_scales)?
        }
    };
    table.permutation = perm;
    table.bit_combo = config.bit_combo.clone();
    Ok(table)
}

/// Mean squared error between `w` and the unpermuted reconstruction of `q`,
/// optionally weighting each token's row.
pub fn reconstruction_error<T: Real>(w: ArrayView2<'_, T>, q: &QuantizedTable<T>, weights: Option<&[T]>) -> Result<T, QuantError> {
    let deq = q.dequantize(true);
    if deq.dim() != w.dim() {
        return Err(QuantError::Shape {
            expected: format!("{:?}", w.dim()),
            got: format!("{:?}", deq.dim()),
        });
    }
    if let Some(f) = weights {
        if f.len() != w.nrows() {
            return Err(QuantError::Shape {
                expected: format!("{} token weights", w.nrows()),
                got: f.len().to_string(),
            });
        }
    }
    let n = T::from_usize_lossy(w.ncols().max(1));
    let mut num = T::zero();
    let mut den = T::zero();
    for (t, (row, qrow)) in w.outer_iter().zip(deq.outer_iter()).enumerate() {
        let f = weights.map_or(T::one(), |f| f[t]);
        let sq = row.iter().zip(qrow.iter()).fold(T::zero(), |a, (x, y)| a + (*x - *y) * (*x - *y));
        num = num + f * sq;
        den = den + f * n;
    }
    Ok(if den == T::zero() { T::zero() } else { num / den })
}

/// Weighted reconstruction error of one criterion and bit combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub criterion: Criterion,
    pub bit_combo: Vec<u32>,
    pub error: f64,
}

/// Quantize `w` under every criterion and combination and report the
/// (optionally token-weighted) reconstruction error of each.
pub fn compare_criteria<T: Real>(
    w: ArrayView2<'_, T>,
    criteria: &[Criterion],
    combos: &[Vec<u32>],
    aux: Option<&ChannelStats<T>>,
    weights: Option<&[T]>,
    seed: u64,
) -> Result<Vec<ComparisonRow>, QuantError> {
    let mut rows = Vec::with_capacity(criteria.len() * combos.len());
    for &criterion in criteria {
        for combo in combos {
            let config = QuantConfig {
                criterion,
                bit_combo: combo.clone(),
                seed,
                ..QuantConfig::default()
            };
            let q = quantize_table(w, &config, aux)?;
            let error = reconstruction_error(w, &q, weights)?.to_f64().unwrap_or(f64::NAN);
            rows.push(ComparisonRow {
                criterion,
                bit_combo: combo.clone(),
                error,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn saliency_constant_channel() {
        let w = array![[2.0f64, -0.5], [-2.0, 0.5]];
        let s = channel_saliency(w.view(), Criterion::AbsoluteValue, None, 0).unwrap();
        assert_eq!(s, vec![2.0, 0.5]);
        assert!(matches!(
            channel_saliency(w.view(), Criterion::Gradient, None, 0),
            Err(QuantError::MissingAux { .. })
        ));
    }

    #[test]
    fn bitwidth_examples() {
        let bits = assign_bitwidths(&[5.0f64, 1.0, 2.0, 9.0, 0.0, 3.0], &[4, 3, 3], 6).unwrap();
        assert_eq!(bits, vec![4, 3, 3, 4, 3, 3]);
        let bits = assign_bitwidths(&[1.0f64; 6], &[4, 3, 3], 6).unwrap();
        assert_eq!(bits, vec![4, 4, 3, 3, 3, 3]);
        let bits = assign_bitwidths(&[0.1f64, 0.3, 0.2], &[5, 3, 2], 3).unwrap();
        assert_eq!(bits, vec![2, 5, 3]);
        assert_eq!(slot_counts(3, 4), vec![2, 1, 1]);
        assert_eq!(slot_counts(3, 4096), vec![1366, 1365, 1365]);
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(build_permutation(&[3, 4, 3, 4, 3, 3], &[4, 3, 3]).unwrap(), vec![1, 0, 2, 3, 4, 5]);
        assert_eq!(build_permutation(&[4, 3, 3, 4, 3, 3], &[4, 3, 3]).unwrap(), (0..6).collect::<Vec<_>>());
        assert!(build_permutation(&[3, 3, 3], &[4, 3, 3]).is_err());
    }

    #[test]
    fn scale_examples() {
        let q = quantize_per_channel(array![[0.0f64], [0.0], [0.0]].view(), &[4], true).unwrap();
        assert_eq!(q.scales, vec![1.0]);
        assert!(q.values.iter().all(|&v| v == 0));
        let q = quantize_per_channel(array![[-7.0f64], [7.0]].view(), &[4], true).unwrap();
        assert_eq!(q.scales, vec![1.0]);
        assert_eq!(q.values.row(0).to_vec(), vec![-7, 7]);
        let q = quantize_per_channel(array![[0.3f64], [-0.9]].view(), &[3], true).unwrap();
        assert_eq!(q.scales, vec![0.25]);
        assert_eq!(q.values.row(0).to_vec(), vec![1, -4]);
    }

    #[test]
    fn non_finite_rejected() {
        let w = array![[1.0f64, f64::NAN]];
        assert!(matches!(
            quantize_per_channel(w.view(), &[4, 3], true),
            Err(QuantError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn pipeline_groups_match_layout() {
        let w = array![[0.1f64, 3.0, 0.2, 2.0, 0.3, 0.05], [-0.1, -3.0, 0.2, 1.0, 0.3, 0.05]];
        let q = quantize_table(w.view(), &QuantConfig::default(), None).unwrap();
        q.validate().unwrap();
        assert!(q.matches_layout());
        assert_eq!(q.permutation, vec![1, 0, 2, 3, 4, 5]);
        assert_eq!(q.pack(13).unwrap().dim(), (2, 2));
    }
}
