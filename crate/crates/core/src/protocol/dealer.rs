//! Trusted-dealer stand-in for share bit-width extension.
//!
//! The dealer sees both shares, recovers the signed value and hands out a
//! fresh uniformly random sharing over `Z_{2^ℓ}`. Its traffic is not real;
//! each extension is charged `2ℓ + λ` bits as an estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DealerConfig {
    /// Target share width `ℓ`.
    pub ell: u32,
    /// Security parameter `λ` in the per-extension charge.
    pub lambda_bits: u32,
}

impl Default for DealerConfig {
    fn default() -> Self {
        Self { ell: 16, lambda_bits: 128 }
    }
}

impl DealerConfig {
    /// Estimated bytes for `count` extensions.
    pub fn charge_bytes(&self, count: usize) -> u64 {
        (count as u64 * (2 * self.ell as u64 + self.lambda_bits as u64)).div_ceil(8)
    }
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Interpret `v mod 2^bits` as a signed integer.
pub fn to_signed(v: u64, bits: u32) -> i64 {
    let v = v & mask(bits);
    if bits < 64 && v >> (bits - 1) == 1 {
        v as i64 - (1i64 << bits)
    } else {
        v as i64
    }
}

/// Additive shares over `Z_{2^(b+1)}` from a slot share pair, where the
/// client holds the raw slot content `c` and the server its mask `r`, so
/// that `c + r' ≡ v`.
pub fn slot_to_additive(client: u64, server_mask: u64, value_bits: u32) -> (u64, u64) {
    let width = value_bits + 1;
    let offset = 1u64 << (value_bits - 1);
    let r = 0u64.wrapping_sub(server_mask).wrapping_sub(offset) & mask(width);
    (client & mask(width), r)
}

/// Re-share each `v = signed((c + r) mod 2^w)` as `(c', r')` over `Z_{2^ℓ}`
/// with `c'` uniform and `c' + r' ≡ v`.
pub fn align_bitwidth<R: Rng + ?Sized>(
    client: &[u64],
    server: &[u64],
    widths: &[u32],
    ell: u32,
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<u64>), ProtocolError> {
    if client.len() != server.len() || client.len() != widths.len() {
        return Err(ProtocolError::Shape(format!(
            "{} client shares, {} server shares, {} widths",
            client.len(),
            server.len(),
            widths.len()
        )));
    }
    let needed = widths.iter().copied().max().unwrap_or(0);
    if ell < needed || ell > 63 || widths.contains(&0) {
        return Err(ProtocolError::AlignWidth { ell, needed });
    }
    let m = mask(ell);
    let mut out_c = Vec::with_capacity(client.len());
    let mut out_r = Vec::with_capacity(client.len());
    for ((&c, &r), &w) in client.iter().zip(server).zip(widths) {
        let v = to_signed(c.wrapping_add(r), w);
        let c2 = rng.random::<u64>() & m;
        let r2 = (v as u64).wrapping_sub(c2) & m;
        out_c.push(c2);
        out_r.push(r2);
    }
    Ok((out_c, out_r))
}
