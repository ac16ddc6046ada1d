//! Symmetric BFV-style RLWE encryption with worst-case noise tracking.
//!
//! A ciphertext `(a, b)` satisfies `b = a*s + e + delta*m (mod q)` with
//! `delta = q/p`. Only the operations the query protocol needs are offered:
//! ciphertext/plaintext addition, subtraction and multiplication, and
//! ciphertext addition. Decryption refuses once the tracked noise bound
//! reaches `delta/2`.

use rand::Rng;
use thiserror::Error;

use crate::bits::{pack_bits, packed_len, unpack_bits};
use crate::ring::{
    poly_add, poly_negacyclic_mul, poly_sub, product_bound_bits, sample_error, sample_ternary,
    sample_uniform, CrtNtt, NttPoly, Poly, RingError, RingParams,
};

pub const CT_MAGIC: [u8; 4] = *b"FQCT";
pub const CT_VERSION: u8 = 1;
/// magic(4) + version(1) + degree_n(u32) + q_bits(1) + p_bits(1)
pub const CT_HEADER_LEN: usize = 11;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeError {
    #[error("plaintext coefficient {value} at index {index} is not below p = 2^{p_bits}")]
    PlaintextRange { index: usize, value: u64, p_bits: u32 },
    #[error("noise budget exhausted: bound {noise_bound} >= delta/2 = {limit}")]
    BudgetExhausted { noise_bound: u128, limit: u128 },
    #[error("parameter mismatch between operands")]
    ParamsMismatch,
    #[error("ring error: {0}")]
    Ring(#[from] RingError),
    #[error("ciphertext wire format: {0}")]
    Wire(String),
    #[error("inner product over {0} terms is unsupported (1..={MAX_INNER_PRODUCT_TERMS})")]
    InnerProductTerms(usize),
}

/// Ternary secret key.
#[derive(Clone)]
pub struct SecretKey {
    s: Poly,
    params: RingParams,
    s_ntt: NttPoly,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey").field("params", &self.params).finish_non_exhaustive()
    }
}

impl SecretKey {
    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn poly(&self) -> &Poly {
        &self.s
    }

    fn mul_by_secret(&self, a: &Poly) -> Poly {
        let bits = secret_product_bits(&self.params);
        let engine = CrtNtt::for_degree(self.params.degree());
        let fa = engine.forward(a, &self.params, self.s_ntt.primes());
        engine.inverse(&engine.mul(&fa, &self.s_ntt), bits, &self.params)
    }
}

fn secret_product_bits(params: &RingParams) -> u32 {
    product_bound_bits(params.degree(), params.q() / 2, 1, 1)
}

/// Plaintext polynomial with coefficients in `[0, p)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlaintextPoly {
    coeffs: Vec<u64>,
}

impl PlaintextPoly {
    pub fn new(coeffs: Vec<u64>, params: &RingParams) -> Result<Self, HeError> {
        if coeffs.len() != params.degree() {
            return Err(RingError::Dimension {
                expected: params.degree(),
                got: coeffs.len(),
            }
            .into());
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, &c)| c >= params.p()) {
            return Err(HeError::PlaintextRange {
                index,
                value,
                p_bits: params.p_bits(),
            });
        }
        Ok(PlaintextPoly { coeffs })
    }

    pub fn zero(params: &RingParams) -> Self {
        PlaintextPoly {
            coeffs: vec![0; params.degree()],
        }
    }

    pub fn constant(c: u64, params: &RingParams) -> Result<Self, HeError> {
        let mut coeffs = vec![0; params.degree()];
        coeffs[0] = c;
        PlaintextPoly::new(coeffs, params)
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn max_coeff(&self) -> u64 {
        self.coeffs.iter().copied().max().unwrap_or(0)
    }

    fn lift(&self, params: &RingParams) -> Poly {
        Poly::from_raw_masked(self.coeffs.clone(), params)
    }

    fn scaled(&self, params: &RingParams) -> Poly {
        let delta = params.delta();
        Poly::from_raw_masked(self.coeffs.iter().map(|&c| c.wrapping_mul(delta)).collect(), params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    a: Poly,
    b: Poly,
    noise_bound: u128,
    params: RingParams,
}

impl Ciphertext {
    pub fn a(&self) -> &Poly {
        &self.a
    }

    pub fn b(&self) -> &Poly {
        &self.b
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    /// Tracked worst-case magnitude of the noise term.
    pub fn noise_bound(&self) -> u128 {
        self.noise_bound
    }

    /// Replace the tracked bound, e.g. after deserialization when the
    /// receiver knows the pipeline that produced the ciphertext.
    pub fn with_noise_bound(mut self, noise_bound: u128) -> Self {
        self.noise_bound = noise_bound;
        self
    }
}

fn half_delta(params: &RingParams) -> u128 {
    (params.delta() / 2) as u128
}

fn check_budget(noise_bound: u128, params: &RingParams) -> Result<(), HeError> {
    let limit = half_delta(params);
    if noise_bound >= limit {
        return Err(HeError::BudgetExhausted { noise_bound, limit });
    }
    Ok(())
}

fn check_plaintext(pt: &PlaintextPoly, params: &RingParams) -> Result<(), HeError> {
    if pt.coeffs.len() != params.degree() {
        return Err(RingError::Dimension {
            expected: params.degree(),
            got: pt.coeffs.len(),
        }
        .into());
    }
    if let Some((index, &value)) = pt.coeffs.iter().enumerate().find(|(_, &c)| c >= params.p()) {
        return Err(HeError::PlaintextRange {
            index,
            value,
            p_bits: params.p_bits(),
        });
    }
    Ok(())
}

pub fn keygen<R: Rng + ?Sized>(params: &RingParams, rng: &mut R) -> SecretKey {
    let s = sample_ternary(params, rng);
    let engine = CrtNtt::for_degree(params.degree());
    let primes = CrtNtt::primes_for_bound(secret_product_bits(params));
    let mut s_ntt = engine.forward(&s, params, primes);
    engine.precompute_shoup(&mut s_ntt);
    SecretKey {
        s,
        params: *params,
        s_ntt,
    }
}

pub fn encrypt<R: Rng + ?Sized>(m: &PlaintextPoly, sk: &SecretKey, rng: &mut R) -> Result<Ciphertext, HeError> {
    let params = sk.params;
    check_plaintext(m, &params)?;
    let a = sample_uniform(&params, rng);
    let e = sample_error(&params, rng);
    let b = poly_add(&poly_add(&sk.mul_by_secret(&a), &e, &params)?, &m.scaled(&params), &params)?;
    Ok(Ciphertext {
        a,
        b,
        noise_bound: params.error_bound() as u128,
        params,
    })
}

/// `b - a*s` as centered phase values.
fn phase(ct: &Ciphertext, sk: &SecretKey) -> Result<Poly, HeError> {
    if ct.params != sk.params {
        return Err(HeError::ParamsMismatch);
    }
    Ok(poly_sub(&ct.b, &sk.mul_by_secret(&ct.a), &ct.params)?)
}

fn round_phase(x: u64, params: &RingParams) -> u64 {
    let shift = params.q_bits() - params.p_bits();
    (x.wrapping_add(params.delta() / 2) & params.q_mask()) >> shift & params.p_mask()
}

pub fn decrypt(ct: &Ciphertext, sk: &SecretKey) -> Result<PlaintextPoly, HeError> {
    check_budget(ct.noise_bound, &ct.params)?;
    let params = ct.params;
    let x = phase(ct, sk)?;
    Ok(PlaintextPoly {
        coeffs: x.coeffs().iter().map(|&c| round_phase(c, &params)).collect(),
    })
}

/// Largest true noise magnitude, measured with the key.
pub fn measured_noise(ct: &Ciphertext, sk: &SecretKey) -> Result<u64, HeError> {
    let params = ct.params;
    let x = phase(ct, sk)?;
    Ok(x.coeffs()
        .iter()
        .map(|&c| {
            let m = round_phase(c, &params);
            let noise = c.wrapping_sub(m.wrapping_mul(params.delta())) & params.q_mask();
            params.center(noise).unsigned_abs()
        })
        .max()
        .unwrap_or(0))
}

/// Remaining noise headroom in bits: `floor(log2(delta/2) - log2(max |noise|))`.
/// Debugging and test aid; requires the key.
pub fn noise_budget(ct: &Ciphertext, sk: &SecretKey) -> Result<i64, HeError> {
    let noise = measured_noise(ct, sk)?.max(1) as f64;
    let half = (ct.params.delta() / 2) as f64;
    Ok((half.log2() - noise.log2()).floor() as i64)
}

pub fn ct_add_ct(c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext, HeError> {
    if c1.params != c2.params {
        return Err(HeError::ParamsMismatch);
    }
    let params = c1.params;
    Ok(Ciphertext {
        a: poly_add(&c1.a, &c2.a, &params)?,
        b: poly_add(&c1.b, &c2.b, &params)?,
        noise_bound: c1.noise_bound.saturating_add(c2.noise_bound),
        params,
    })
}

pub fn ct_add_pt(ct: &Ciphertext, u: &PlaintextPoly) -> Result<Ciphertext, HeError> {
    check_plaintext(u, &ct.params)?;
    Ok(Ciphertext {
        b: poly_add(&ct.b, &u.scaled(&ct.params), &ct.params)?,
        ..ct.clone()
    })
}

pub fn ct_sub_pt(ct: &Ciphertext, u: &PlaintextPoly) -> Result<Ciphertext, HeError> {
    check_plaintext(u, &ct.params)?;
    Ok(Ciphertext {
        b: poly_sub(&ct.b, &u.scaled(&ct.params), &ct.params)?,
        ..ct.clone()
    })
}

fn mul_noise(noise_bound: u128, params: &RingParams, w_max: u64) -> u128 {
    noise_bound
        .saturating_mul(params.degree() as u128)
        .saturating_mul(w_max as u128)
}

/// Multiply by a plaintext; the bound grows by `N * max|w|`.
pub fn ct_mul_pt(ct: &Ciphertext, w: &PlaintextPoly) -> Result<Ciphertext, HeError> {
    let params = ct.params;
    check_plaintext(w, &params)?;
    let noise_bound = mul_noise(ct.noise_bound, &params, w.max_coeff());
    check_budget(noise_bound, &params)?;
    let wl = w.lift(&params);
    Ok(Ciphertext {
        a: poly_negacyclic_mul(&ct.a, &wl, &params)?,
        b: poly_negacyclic_mul(&ct.b, &wl, &params)?,
        noise_bound,
        params,
    })
}

/// Largest number of products a prepared inner product may sum.
pub const MAX_INNER_PRODUCT_TERMS: usize = 1 << 10;

fn prepared_primes(params: &RingParams) -> usize {
    CrtNtt::primes_for_bound(inner_product_bits(params, MAX_INNER_PRODUCT_TERMS))
}

fn inner_product_bits(params: &RingParams, terms: usize) -> u32 {
    product_bound_bits(params.degree(), params.q() / 2, params.p() - 1, terms)
}

/// Ciphertext held in NTT form for repeated plaintext products.
#[derive(Debug, Clone)]
pub struct PreparedCiphertext {
    a: NttPoly,
    b: NttPoly,
    noise_bound: u128,
    params: RingParams,
}

impl PreparedCiphertext {
    pub fn new(ct: &Ciphertext) -> Self {
        let params = ct.params;
        let engine = CrtNtt::for_degree(params.degree());
        let primes = prepared_primes(&params);
        PreparedCiphertext {
            a: engine.forward(&ct.a, &params, primes),
            b: engine.forward(&ct.b, &params, primes),
            noise_bound: ct.noise_bound,
            params,
        }
    }
}

/// Plaintext held in NTT form for repeated products.
#[derive(Debug, Clone)]
pub struct PreparedPlaintext {
    w: NttPoly,
    max_coeff: u64,
    params: RingParams,
}

impl PreparedPlaintext {
    pub fn new(pt: &PlaintextPoly, params: &RingParams) -> Result<Self, HeError> {
        check_plaintext(pt, params)?;
        let engine = CrtNtt::for_degree(params.degree());
        let mut w = engine.forward(&pt.lift(params), params, prepared_primes(params));
        engine.precompute_shoup(&mut w);
        Ok(PreparedPlaintext {
            w,
            max_coeff: pt.max_coeff(),
            params: *params,
        })
    }

    /// Approximate heap footprint, for cache sizing.
    pub fn size_bytes(&self) -> usize {
        2 * self.w.primes() * self.params.degree() * std::mem::size_of::<u64>()
    }
}

/// `sum_i ct_i * w_i`, equal to folding [`ct_mul_pt`] results with
/// [`ct_add_ct`] but computed with a single inverse transform.
pub fn ct_inner_product_pt(terms: &[(&PreparedCiphertext, &PreparedPlaintext)]) -> Result<Ciphertext, HeError> {
    let (first, _) = terms.first().ok_or(HeError::InnerProductTerms(0))?;
    let params = first.params;
    if terms.len() > MAX_INNER_PRODUCT_TERMS {
        return Err(HeError::InnerProductTerms(terms.len()));
    }
    if terms.iter().any(|(c, w)| c.params != params || w.params != params) {
        return Err(HeError::ParamsMismatch);
    }
    let noise_bound = terms
        .iter()
        .map(|(c, w)| mul_noise(c.noise_bound, &params, w.max_coeff))
        .fold(0u128, u128::saturating_add);
    check_budget(noise_bound, &params)?;
    let engine = CrtNtt::for_degree(params.degree());
    let primes = prepared_primes(&params);
    let mut acc_a = engine.zero(primes);
    let mut acc_b = engine.zero(primes);
    for (c, w) in terms {
        engine.mul_acc(&mut acc_a, &c.a, &w.w);
        engine.mul_acc(&mut acc_b, &c.b, &w.w);
    }
    let bits = inner_product_bits(&params, terms.len());
    Ok(Ciphertext {
        a: engine.inverse(&acc_a, bits, &params),
        b: engine.inverse(&acc_b, bits, &params),
        noise_bound,
        params,
    })
}

/// Size in bytes of one serialized ciphertext.
pub fn ct_wire_len(params: &RingParams) -> usize {
    CT_HEADER_LEN + packed_len(2 * params.degree(), params.q_bits())
}

/// Header then `a` and `b` coefficients, each in exactly `q_bits` bits,
/// little-endian bit order, zero-padded to a byte boundary.
pub fn serialize_ct(ct: &Ciphertext) -> Vec<u8> {
    let params = ct.params;
    let mut out = Vec::with_capacity(ct_wire_len(&params));
    out.extend_from_slice(&CT_MAGIC);
    out.push(CT_VERSION);
    out.extend_from_slice(&(params.degree() as u32).to_le_bytes());
    out.push(params.q_bits() as u8);
    out.push(params.p_bits() as u8);
    out.extend(pack_bits(
        ct.a.coeffs().iter().chain(ct.b.coeffs()).copied(),
        params.q_bits(),
    ));
    out
}

/// Inverse of [`serialize_ct`]. The noise bound is not on the wire; the
/// result carries the fresh-encryption bound and receivers that know the
/// producing pipeline should set it with [`Ciphertext::with_noise_bound`].
pub fn deserialize_ct(bytes: &[u8], params: &RingParams) -> Result<Ciphertext, HeError> {
    if bytes.len() < CT_HEADER_LEN {
        return Err(HeError::Wire(format!("truncated header: {} bytes", bytes.len())));
    }
    if bytes[..4] != CT_MAGIC {
        return Err(HeError::Wire("bad magic".into()));
    }
    if bytes[4] != CT_VERSION {
        return Err(HeError::Wire(format!("unsupported version {}", bytes[4])));
    }
    let degree = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let (q_bits, p_bits) = (bytes[9] as u32, bytes[10] as u32);
    if degree != params.degree() || q_bits != params.q_bits() || p_bits != params.p_bits() {
        return Err(HeError::Wire(format!(
            "parameter mismatch: wire (N={degree}, q_bits={q_bits}, p_bits={p_bits}) vs expected (N={}, q_bits={}, p_bits={})",
            params.degree(),
            params.q_bits(),
            params.p_bits()
        )));
    }
    let payload = &bytes[CT_HEADER_LEN..];
    let expected = packed_len(2 * degree, q_bits);
    if payload.len() != expected {
        return Err(HeError::Wire(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut coeffs = unpack_bits(payload, q_bits, 2 * degree).expect("length checked");
    let b = coeffs.split_off(degree);
    Ok(Ciphertext {
        a: Poly::from_coeffs(coeffs, params)?,
        b: Poly::from_coeffs(b, params)?,
        noise_bound: params.error_bound() as u128,
        params: *params,
    })
}
