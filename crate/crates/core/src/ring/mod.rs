//! Arithmetic in the negacyclic ring `Z_q[X]/(X^N + 1)` with `q = 2^q_bits`.
//!
//! Because `q` is a power of two, every operation is carried out in wrapping
//! `u64` arithmetic and reduced by masking. Products use exact schoolbook
//! convolution for small degrees and a multi-prime NTT with CRT
//! reconstruction otherwise; both agree bit-for-bit.

mod ntt;
mod sample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ntt::{CrtNtt, NttPoly};
pub use sample::{sample_error, sample_ternary, sample_uniform};

/// Degrees at or below this use schoolbook multiplication.
const SCHOOLBOOK_MAX_DEGREE: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("polynomial degree {0} is not a power of two")]
    DegreeNotPowerOfTwo(usize),
    #[error("q_bits must lie in 1..=62, got {0}")]
    ModulusOutOfRange(u32),
    #[error("p_bits ({p_bits}) must be positive and below q_bits ({q_bits})")]
    PlaintextModulus { p_bits: u32, q_bits: u32 },
    #[error("error bound must be positive")]
    ZeroErrorBound,
    #[error("dimension mismatch: expected {expected} coefficients, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("coefficient {value} at index {index} is not reduced mod 2^{q_bits}")]
    Unreduced { index: usize, value: u64, q_bits: u32 },
}

/// Ring and scheme parameters: degree `N`, ciphertext modulus `2^q_bits`,
/// plaintext modulus `2^p_bits` and the fresh-error magnitude bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRingParams", into = "RawRingParams")]
pub struct RingParams {
    degree_n: usize,
    q_bits: u32,
    p_bits: u32,
    error_bound: u32,
}

#[derive(Serialize, Deserialize)]
struct RawRingParams {
    degree_n: usize,
    q_bits: u32,
    p_bits: u32,
    error_bound: u32,
}

impl TryFrom<RawRingParams> for RingParams {
    type Error = RingError;

    fn try_from(raw: RawRingParams) -> Result<Self, Self::Error> {
        RingParams::new(raw.degree_n, raw.q_bits, raw.p_bits, raw.error_bound)
    }
}

impl From<RingParams> for RawRingParams {
    fn from(p: RingParams) -> Self {
        RawRingParams {
            degree_n: p.degree_n,
            q_bits: p.q_bits,
            p_bits: p.p_bits,
            error_bound: p.error_bound,
        }
    }
}

impl Default for RingParams {
    /// `N = 4096`, `q = 2^48`, `p = 2^13`, `B = 8`.
    fn default() -> Self {
        RingParams {
            degree_n: 4096,
            q_bits: 48,
            p_bits: 13,
            error_bound: 8,
        }
    }
}

impl RingParams {
    pub fn new(degree_n: usize, q_bits: u32, p_bits: u32, error_bound: u32) -> Result<Self, RingError> {
        if degree_n == 0 || !degree_n.is_power_of_two() {
            return Err(RingError::DegreeNotPowerOfTwo(degree_n));
        }
        if !(1..=62).contains(&q_bits) {
            return Err(RingError::ModulusOutOfRange(q_bits));
        }
        if p_bits == 0 || p_bits >= q_bits {
            return Err(RingError::PlaintextModulus { p_bits, q_bits });
        }
        if error_bound == 0 {
            return Err(RingError::ZeroErrorBound);
        }
        Ok(RingParams {
            degree_n,
            q_bits,
            p_bits,
            error_bound,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree_n
    }

    pub fn q_bits(&self) -> u32 {
        self.q_bits
    }

    pub fn p_bits(&self) -> u32 {
        self.p_bits
    }

    pub fn error_bound(&self) -> u32 {
        self.error_bound
    }

    pub fn q(&self) -> u64 {
        1u64 << self.q_bits
    }

    pub fn q_mask(&self) -> u64 {
        self.q() - 1
    }

    pub fn p(&self) -> u64 {
        1u64 << self.p_bits
    }

    pub fn p_mask(&self) -> u64 {
        self.p() - 1
    }

    /// Plaintext scaling factor `q / p`.
    pub fn delta(&self) -> u64 {
        1u64 << (self.q_bits - self.p_bits)
    }

    pub fn with_p_bits(self, p_bits: u32) -> Result<Self, RingError> {
        RingParams::new(self.degree_n, self.q_bits, p_bits, self.error_bound)
    }

    /// Lift a residue mod q to its centered representative in `[-q/2, q/2)`.
    pub fn center(&self, value: u64) -> i64 {
        let half = 1u64 << (self.q_bits - 1);
        if value >= half {
            value as i64 - self.q() as i64
        } else {
            value as i64
        }
    }

    /// Reduce a signed integer into `[0, q)`.
    pub fn reduce_signed(&self, value: i64) -> u64 {
        (value as u64) & self.q_mask()
    }
}

/// Element of `Z_q[X]/(X^N + 1)`; coefficient `i` multiplies `X^i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    coeffs: Vec<u64>,
}

impl Poly {
    pub fn zero(params: &RingParams) -> Self {
        Poly {
            coeffs: vec![0; params.degree()],
        }
    }

    /// Constant polynomial `c`.
    pub fn constant(c: u64, params: &RingParams) -> Self {
        let mut p = Poly::zero(params);
        p.coeffs[0] = c & params.q_mask();
        p
    }

    /// The monomial `X^k` for `k < N`.
    pub fn monomial(k: usize, params: &RingParams) -> Self {
        let mut p = Poly::zero(params);
        p.coeffs[k] = 1;
        p
    }

    /// Checked constructor: length must be `N` and every coefficient below q.
    pub fn from_coeffs(coeffs: Vec<u64>, params: &RingParams) -> Result<Self, RingError> {
        check_len(coeffs.len(), params)?;
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, &c)| c >= params.q()) {
            return Err(RingError::Unreduced {
                index,
                value,
                q_bits: params.q_bits(),
            });
        }
        Ok(Poly { coeffs })
    }

    /// Build from signed coefficients, reducing each mod q.
    pub fn from_signed(values: &[i64], params: &RingParams) -> Result<Self, RingError> {
        check_len(values.len(), params)?;
        Ok(Poly {
            coeffs: values.iter().map(|&v| params.reduce_signed(v)).collect(),
        })
    }

    /// Reduce arbitrary `u64` coefficients mod q.
    pub(crate) fn from_raw_masked(mut coeffs: Vec<u64>, params: &RingParams) -> Self {
        debug_assert_eq!(coeffs.len(), params.degree());
        let mask = params.q_mask();
        coeffs.iter_mut().for_each(|c| *c &= mask);
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Largest centered magnitude among the coefficients.
    pub fn max_centered_abs(&self, params: &RingParams) -> u64 {
        self.coeffs
            .iter()
            .map(|&c| params.center(c).unsigned_abs())
            .max()
            .unwrap_or(0)
    }
}

fn check_len(len: usize, params: &RingParams) -> Result<(), RingError> {
    if len != params.degree() {
        return Err(RingError::Dimension {
            expected: params.degree(),
            got: len,
        });
    }
    Ok(())
}

fn check_pair(a: &Poly, b: &Poly, params: &RingParams) -> Result<(), RingError> {
    check_len(a.len(), params)?;
    check_len(b.len(), params)
}

pub fn poly_add(a: &Poly, b: &Poly, params: &RingParams) -> Result<Poly, RingError> {
    check_pair(a, b, params)?;
    let mask = params.q_mask();
    Ok(Poly {
        coeffs: a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| x.wrapping_add(*y) & mask)
            .collect(),
    })
}

pub fn poly_sub(a: &Poly, b: &Poly, params: &RingParams) -> Result<Poly, RingError> {
    check_pair(a, b, params)?;
    let mask = params.q_mask();
    Ok(Poly {
        coeffs: a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| x.wrapping_sub(*y) & mask)
            .collect(),
    })
}

pub fn poly_neg(a: &Poly, params: &RingParams) -> Poly {
    let mask = params.q_mask();
    Poly {
        coeffs: a.coeffs.iter().map(|x| x.wrapping_neg() & mask).collect(),
    }
}

/// Multiply every coefficient by a scalar mod q.
pub fn poly_scale(a: &Poly, scalar: u64, params: &RingParams) -> Poly {
    let mask = params.q_mask();
    Poly {
        coeffs: a.coeffs.iter().map(|x| x.wrapping_mul(scalar) & mask).collect(),
    }
}

/// Product in `Z_q[X]/(X^N + 1)`.
pub fn poly_negacyclic_mul(a: &Poly, b: &Poly, params: &RingParams) -> Result<Poly, RingError> {
    check_pair(a, b, params)?;
    if params.degree() <= SCHOOLBOOK_MAX_DEGREE {
        return Ok(schoolbook(a, b, params));
    }
    let bound_bits = product_bound_bits(
        params.degree(),
        a.max_centered_abs(params),
        b.max_centered_abs(params),
        1,
    );
    let engine = CrtNtt::for_degree(params.degree());
    let primes = CrtNtt::primes_for_bound(bound_bits);
    let fa = engine.forward(a, params, primes);
    let fb = engine.forward(b, params, primes);
    let prod = engine.mul(&fa, &fb);
    Ok(engine.inverse(&prod, bound_bits, params))
}

/// Reference negacyclic product: `O(N^2)` wrapping convolution with
/// `X^N = -1` sign folding. Exact mod `2^64`, hence mod q.
pub fn negacyclic_mul_schoolbook(a: &Poly, b: &Poly, params: &RingParams) -> Result<Poly, RingError> {
    check_pair(a, b, params)?;
    Ok(schoolbook(a, b, params))
}

fn schoolbook(a: &Poly, b: &Poly, params: &RingParams) -> Poly {
    let n = params.degree();
    let mut out = vec![0u64; n];
    for (i, &ai) in a.coeffs.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.coeffs.iter().enumerate() {
            let prod = ai.wrapping_mul(bj);
            let k = i + j;
            if k < n {
                out[k] = out[k].wrapping_add(prod);
            } else {
                out[k - n] = out[k - n].wrapping_sub(prod);
            }
        }
    }
    Poly::from_raw_masked(out, params)
}

/// Bits needed to bound `|sum of terms products|` over one negacyclic
/// convolution: `terms * N * max_a * max_b`.
pub fn product_bound_bits(degree: usize, max_a: u64, max_b: u64, terms: usize) -> u32 {
    let bits = |x: u128| 128 - x.leading_zeros();
    bits(degree as u128 - 1)
        + bits(max_a as u128)
        + bits(max_b as u128)
        + bits(terms.max(1) as u128 - 1)
        + 1
}
