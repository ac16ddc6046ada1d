use rand::Rng;

use super::{Poly, RingParams};

/// Coefficients uniform in `[0, q)`.
pub fn sample_uniform<R: Rng + ?Sized>(params: &RingParams, rng: &mut R) -> Poly {
    let mask = params.q_mask();
    Poly::from_raw_masked(
        (0..params.degree()).map(|_| rng.random::<u64>() & mask).collect(),
        params,
    )
}

/// Coefficients uniform over `{-1, 0, 1}` (stored mod q).
pub fn sample_ternary<R: Rng + ?Sized>(params: &RingParams, rng: &mut R) -> Poly {
    let minus_one = params.q_mask();
    Poly::from_raw_masked(
        (0..params.degree())
            .map(|_| match rng.random_range(0u8..3) {
                0 => minus_one,
                1 => 0,
                _ => 1,
            })
            .collect(),
        params,
    )
}

/// Centered binomial noise: the difference of two sums of `B` coin flips,
/// so every coefficient lies in `[-B, B]`.
pub fn sample_error<R: Rng + ?Sized>(params: &RingParams, rng: &mut R) -> Poly {
    let b = params.error_bound();
    let coeffs = (0..params.degree())
        .map(|_| {
            let mut v = 0i64;
            let mut remaining = b;
            while remaining > 0 {
                let take = remaining.min(32);
                let mask = if take == 32 { u32::MAX } else { (1u32 << take) - 1 };
                let plus = (rng.random::<u32>() & mask).count_ones() as i64;
                let minus = (rng.random::<u32>() & mask).count_ones() as i64;
                v += plus - minus;
                remaining -= take;
            }
            params.reduce_signed(v)
        })
        .collect();
    Poly::from_raw_masked(coeffs, params)
}
