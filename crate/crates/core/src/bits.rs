//! Fixed-width little-endian bit packing.

/// Pack each value into exactly `width` bits, LSB first, zero-padding the
/// final byte.
pub fn pack_bits<I: IntoIterator<Item = u64>>(values: I, width: u32) -> Vec<u8> {
    assert!((1..=64).contains(&width));
    let mut out = Vec::new();
    let mut acc: u128 = 0;
    let mut filled = 0u32;
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    for v in values {
        debug_assert_eq!(v & !mask, 0, "value {v} wider than {width} bits");
        acc |= ((v & mask) as u128) << filled;
        filled += width;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    out
}

/// Inverse of [`pack_bits`]; `None` when `bytes` is shorter than needed.
pub fn unpack_bits(bytes: &[u8], width: u32, count: usize) -> Option<Vec<u64>> {
    assert!((1..=64).contains(&width));
    if bytes.len() < packed_len(count, width) {
        return None;
    }
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut out = Vec::with_capacity(count);
    let mut acc: u128 = 0;
    let mut filled = 0u32;
    let mut iter = bytes.iter();
    for _ in 0..count {
        while filled < width {
            acc |= (*iter.next()? as u128) << filled;
            filled += 8;
        }
        out.push(acc as u64 & mask);
        acc >>= width;
        filled -= width;
    }
    Some(out)
}

/// Bytes occupied by `count` values of `width` bits.
pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}
