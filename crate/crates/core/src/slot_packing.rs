//! Several signed low-bit channel values inside one plaintext coefficient.
//!
//! Slot `i` is `b_i + 1` bits wide: `b_i` value bits in offset-binary plus
//! one guard bit on top. Slots are laid out LSB first in the order of the
//! bit combination, so with `(4, 3, 3)` the 4-bit slot sits at offset 0.
//! A mask drawn from `[0, 2^b_i)` per slot can be added to a fresh packed
//! coefficient without any carry crossing a slot boundary.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SlotError {
    #[error("bit combination {combo:?} needs {needed} bits but the coefficient has {p_bits}")]
    LayoutOverflow { combo: Vec<u32>, needed: u32, p_bits: u32 },
    #[error("bit combination must be non-empty with every width in 1..=31, got {0:?}")]
    InvalidCombo(Vec<u32>),
    #[error("expected {expected} slot values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("value {value} does not fit a signed {bits}-bit slot")]
    ValueRange { value: i64, bits: u32 },
    #[error("coefficient {coeff:#x} has a set guard bit in slot {slot}")]
    GuardBit { coeff: u64, slot: usize },
    #[error("coefficient {coeff:#x} exceeds the layout's {total_bits} bits")]
    CoefficientRange { coeff: u64, total_bits: u32 },
    #[error("reconstructed value {value} lies outside the signed {bits}-bit range")]
    Corrupt { value: i64, bits: u32 },
    #[error("channel {channel} has {got} bits but its slot expects {expected}")]
    BitPattern { channel: usize, expected: u32, got: u32 },
    #[error("table has {channels} channels but {bits} channel bit-widths were given")]
    ChannelCount { channels: usize, bits: usize },
}

/// Slot widths and offsets for one bit combination.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotLayout {
    value_bits: Vec<u32>,
    offsets: Vec<u32>,
    total_bits: u32,
    p_bits: u32,
}

pub fn make_layout(bit_combo: &[u32], p_bits: u32) -> Result<SlotLayout, SlotError> {
    if bit_combo.is_empty() || bit_combo.iter().any(|&b| b == 0 || b > 31) {
        return Err(SlotError::InvalidCombo(bit_combo.to_vec()));
    }
    let needed: u32 = bit_combo.iter().map(|b| b + 1).sum();
    if needed > p_bits || p_bits > 63 {
        return Err(SlotError::LayoutOverflow {
            combo: bit_combo.to_vec(),
            needed,
            p_bits,
        });
    }
    let offsets = bit_combo
        .iter()
        .scan(0u32, |acc, &b| {
            let o = *acc;
            *acc += b + 1;
            Some(o)
        })
        .collect();
    Ok(SlotLayout {
        value_bits: bit_combo.to_vec(),
        offsets,
        total_bits: needed,
        p_bits,
    })
}

impl SlotLayout {
    pub fn value_bits(&self) -> &[u32] {
        &self.value_bits
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    /// Slot widths `b_i + 1`.
    pub fn slot_widths(&self) -> Vec<u32> {
        self.value_bits.iter().map(|b| b + 1).collect()
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn p_bits(&self) -> u32 {
        self.p_bits
    }

    pub fn slots(&self) -> usize {
        self.value_bits.len()
    }

    /// Offset-binary constant `2^(b_i - 1)` of slot `i`.
    pub fn value_offset(&self, slot: usize) -> u64 {
        1u64 << (self.value_bits[slot] - 1)
    }

    /// Packed value of an all-zero channel group.
    pub fn zero_coefficient(&self) -> u64 {
        (0..self.slots()).map(|i| self.value_offset(i) << self.offsets[i]).sum()
    }

    fn value_range(&self, slot: usize) -> (i64, i64) {
        let half = 1i64 << (self.value_bits[slot] - 1);
        (-half, half - 1)
    }
}

/// A packed plaintext coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackedCoefficient(pub u64);

/// Offset-binary encode each value into its slot.
pub fn pack_signed(values: &[i64], layout: &SlotLayout) -> Result<PackedCoefficient, SlotError> {
    if values.len() != layout.slots() {
        return Err(SlotError::Arity {
            expected: layout.slots(),
            got: values.len(),
        });
    }
    let mut packed = 0u64;
    for (i, &v) in values.iter().enumerate() {
        let (lo, hi) = layout.value_range(i);
        if v < lo || v > hi {
            return Err(SlotError::ValueRange {
                value: v,
                bits: layout.value_bits[i],
            });
        }
        let u = (v - lo) as u64;
        packed |= u << layout.offsets[i];
    }
    Ok(PackedCoefficient(packed))
}

/// Inverse of [`pack_signed`]; refuses coefficients with a set guard bit.
pub fn unpack_signed(c: PackedCoefficient, layout: &SlotLayout) -> Result<Vec<i64>, SlotError> {
    if c.0 >> layout.total_bits != 0 {
        return Err(SlotError::CoefficientRange {
            coeff: c.0,
            total_bits: layout.total_bits,
        });
    }
    (0..layout.slots())
        .map(|i| {
            let b = layout.value_bits[i];
            let slot = (c.0 >> layout.offsets[i]) & ((1u64 << (b + 1)) - 1);
            if slot >> b != 0 {
                return Err(SlotError::GuardBit { coeff: c.0, slot: i });
            }
            Ok(slot as i64 - (1i64 << (b - 1)))
        })
        .collect()
}

/// Pack a channel-major `n x m` table into `ceil(n / slots) x m` coefficients.
///
/// Consecutive groups of `slots` channels are packed together; channel `c`
/// must carry exactly the bit-width of slot `c % slots`. A trailing partial
/// group is padded with zero channels.
pub fn pack_table(values: ArrayView2<'_, i8>, channel_bits: &[u32], layout: &SlotLayout) -> Result<Array2<u32>, SlotError> {
    let (n, m) = values.dim();
    if channel_bits.len() != n {
        return Err(SlotError::ChannelCount {
            channels: n,
            bits: channel_bits.len(),
        });
    }
    let k = layout.slots();
    for (c, &bits) in channel_bits.iter().enumerate() {
        let expected = layout.value_bits[c % k];
        if bits != expected {
            return Err(SlotError::BitPattern {
                channel: c,
                expected,
                got: bits,
            });
        }
    }
    let n_eff = n.div_ceil(k);
    let mut out = Array2::<u32>::zeros((n_eff, m));
    let mut group = vec![0i64; k];
    for g in 0..n_eff {
        for j in 0..m {
            for (s, slot) in group.iter_mut().enumerate() {
                let c = g * k + s;
                *slot = if c < n { values[[c, j]] as i64 } else { 0 };
            }
            out[[g, j]] = pack_signed(&group, layout)?.0 as u32;
        }
    }
    Ok(out)
}

/// Additive mask with `r_i` uniform in `[0, 2^b_i)` per slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMask {
    pub packed: u64,
    pub per_slot: Vec<u64>,
}

pub fn sample_slot_mask<R: Rng + ?Sized>(layout: &SlotLayout, rng: &mut R) -> SlotMask {
    let per_slot: Vec<u64> = layout
        .value_bits
        .iter()
        .map(|&b| rng.random_range(0..1u64 << b))
        .collect();
    let packed = per_slot
        .iter()
        .zip(&layout.offsets)
        .map(|(r, o)| r << o)
        .sum();
    SlotMask { packed, per_slot }
}

/// Raw slot contents `(coeff >> o_i) mod 2^(b_i + 1)`.
pub fn extract_client_shares(decrypted_coeff: u64, layout: &SlotLayout) -> Vec<u64> {
    layout
        .value_bits
        .iter()
        .zip(&layout.offsets)
        .map(|(&b, &o)| (decrypted_coeff >> o) & ((1u64 << (b + 1)) - 1))
        .collect()
}

/// `v = (c - r) - 2^(b - 1)`, checked against the signed `b`-bit range.
pub fn reconstruct(client: u64, server: u64, bits: u32) -> Result<i64, SlotError> {
    let value = client as i64 - server as i64 - (1i64 << (bits - 1));
    let half = 1i64 << (bits - 1);
    if value < -half || value >= half {
        return Err(SlotError::Corrupt { value, bits });
    }
    Ok(value)
}
