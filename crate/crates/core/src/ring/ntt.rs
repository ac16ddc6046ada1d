//! Multi-prime negacyclic NTT with CRT reconstruction modulo `2^64`.
//!
//! Integer products are computed exactly in `Z[X]/(X^N + 1)` through up to
//! [`MAX_PRIMES`] NTT-friendly primes below `2^61`, then reduced to the
//! power-of-two modulus. The caller supplies a bound on the magnitude of
//! the result so the CRT range is never exceeded.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::{Poly, RingParams};

const MAX_PRIMES: usize = 4;
/// All primes are `1 mod 2^17`, which supports degrees up to `2^16`.
const MAX_LOG_DEGREE: u32 = 16;
const PRIME_CEILING: u64 = 1 << 61;

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for small in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % small == 0 {
            return n == small;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    // Deterministic witness set for 64-bit integers.
    'witness: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn ntt_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let step = 1u64 << (MAX_LOG_DEGREE + 1);
        let mut candidate = (PRIME_CEILING / step) * step + 1;
        let mut found = Vec::with_capacity(MAX_PRIMES);
        while found.len() < MAX_PRIMES {
            candidate -= step;
            if is_prime(candidate) {
                found.push(candidate);
            }
        }
        found
    })
}

#[inline(always)]
fn shoup(w: u64, p: u64) -> u64 {
    (((w as u128) << 64) / p as u128) as u64
}

/// `x * w mod p` given `w_shoup = floor(w * 2^64 / p)`.
#[inline(always)]
fn mul_shoup(x: u64, w: u64, w_shoup: u64, p: u64) -> u64 {
    let q = ((x as u128 * w_shoup as u128) >> 64) as u64;
    let r = x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p));
    if r >= p {
        r - p
    } else {
        r
    }
}

/// As [`mul_shoup`] but leaves the result in `[0, 2p)`.
#[inline(always)]
fn mul_shoup_lazy(x: u64, w: u64, w_shoup: u64, p: u64) -> u64 {
    let q = ((x as u128 * w_shoup as u128) >> 64) as u64;
    x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p))
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

struct PrimeTable {
    p: u64,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    ipsi_rev: Vec<u64>,
    ipsi_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl PrimeTable {
    fn new(p: u64, n: usize) -> Self {
        let log_n = n.trailing_zeros();
        let two_n = 2 * n as u64;
        let psi = (2u64..)
            .map(|g| pow_mod(g, (p - 1) / two_n, p))
            .find(|&psi| pow_mod(psi, n as u64, p) == p - 1)
            .expect("an NTT prime has a primitive 2N-th root");
        let psi_inv = inv_mod(psi, p);
        let mut psi_rev = vec![0; n];
        let mut ipsi_rev = vec![0; n];
        let (mut pw, mut ipw) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            ipsi_rev[r] = ipw;
            pw = mul_mod(pw, psi, p);
            ipw = mul_mod(ipw, psi_inv, p);
        }
        let n_inv = inv_mod(n as u64 % p, p);
        PrimeTable {
            p,
            psi_rev_shoup: psi_rev.iter().map(|&w| shoup(w, p)).collect(),
            ipsi_rev_shoup: ipsi_rev.iter().map(|&w| shoup(w, p)).collect(),
            psi_rev,
            ipsi_rev,
            n_inv,
            n_inv_shoup: shoup(n_inv, p),
        }
    }

    /// Cooley-Tukey with Harvey's lazy reduction: values stay in `[0, 4p)`
    /// between stages and are normalized at the end.
    fn forward(&self, a: &mut [u64]) {
        let n = a.len();
        let p = self.p;
        let two_p = 2 * p;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_p {
                        u -= two_p;
                    }
                    let v = mul_shoup_lazy(*y, w, ws, p);
                    *x = u + v;
                    *y = u + two_p - v;
                }
            }
            m *= 2;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_p {
                v -= two_p;
            }
            if v >= p {
                v -= p;
            }
            *x = v;
        }
    }

    /// Gentleman-Sande with lazy reduction: values stay in `[0, 2p)`.
    fn inverse(&self, a: &mut [u64]) {
        let n = a.len();
        let p = self.p;
        let two_p = 2 * p;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.ipsi_rev[h + i];
                let ws = self.ipsi_rev_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let mut s = u + v;
                    if s >= two_p {
                        s -= two_p;
                    }
                    *x = s;
                    *y = mul_shoup_lazy(u + two_p - v, w, ws, p);
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_shoup(*x, self.n_inv, self.n_inv_shoup, p);
        }
    }
}

/// Residues of a polynomial in NTT form, one length-`N` block per prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NttPoly {
    primes: usize,
    residues: Vec<u64>,
    /// Shoup companions of `residues`, present for operands reused many times.
    shoup: Option<Vec<u64>>,
}

impl NttPoly {
    pub fn primes(&self) -> usize {
        self.primes
    }

    pub fn has_shoup(&self) -> bool {
        self.shoup.is_some()
    }
}

/// Transform tables for one degree across every CRT prime.
pub struct CrtNtt {
    n: usize,
    tables: Vec<PrimeTable>,
    /// `garner_inv[i] = (p_0 ... p_{i-1})^{-1} mod p_i`, with Shoup companion
    garner_inv: Vec<(u64, u64)>,
    /// `garner_prefix[i][j] = (p_0 ... p_{j-1}) mod p_i` for `j < i`, with Shoup companion
    garner_prefix: Vec<Vec<(u64, u64)>>,
    /// `p_0 ... p_{i-1} mod 2^64`
    prefix_wrapping: Vec<u64>,
}

impl std::fmt::Debug for CrtNtt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrtNtt")
            .field("n", &self.n)
            .field("primes", &self.tables.iter().map(|t| t.p).collect::<Vec<_>>())
            .finish()
    }
}

impl CrtNtt {
    /// Shared, lazily built engine for a degree.
    pub fn for_degree(n: usize) -> Arc<CrtNtt> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CrtNtt>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("ntt cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(CrtNtt::new(n)))
            .clone()
    }

    fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n.trailing_zeros() <= MAX_LOG_DEGREE);
        let primes = ntt_primes();
        let tables = primes.iter().map(|&p| PrimeTable::new(p, n)).collect();
        let mut garner_inv = Vec::with_capacity(primes.len());
        let mut garner_prefix = Vec::with_capacity(primes.len());
        let mut prefix_wrapping = Vec::with_capacity(primes.len());
        let mut wrap = 1u64;
        for (i, &pi) in primes.iter().enumerate() {
            let mut row = Vec::with_capacity(i);
            let mut acc = 1u64;
            for &pj in &primes[..i] {
                row.push((acc, shoup(acc, pi)));
                acc = mul_mod(acc, pj % pi, pi);
            }
            let inv = inv_mod(acc, pi);
            garner_inv.push((inv, shoup(inv, pi)));
            garner_prefix.push(row);
            prefix_wrapping.push(wrap);
            wrap = wrap.wrapping_mul(pi);
        }
        CrtNtt {
            n,
            tables,
            garner_inv,
            garner_prefix,
            prefix_wrapping,
        }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    /// Smallest prime count whose product exceeds `2^(bound_bits + 1)`.
    pub fn primes_for_bound(bound_bits: u32) -> usize {
        let mut bits = 0u32;
        for (k, &p) in ntt_primes().iter().enumerate() {
            bits += 63 - p.leading_zeros();
            if bits > bound_bits + 1 {
                return k + 1;
            }
        }
        panic!("product bound of {bound_bits} bits exceeds the CRT range");
    }

    /// Forward transform of the centered lift of `poly` under `primes` moduli.
    pub fn forward(&self, poly: &Poly, params: &RingParams, primes: usize) -> NttPoly {
        assert_eq!(poly.len(), self.n);
        let mut residues = Vec::with_capacity(primes * self.n);
        for table in &self.tables[..primes] {
            let p = table.p;
            let start = residues.len();
            residues.extend(poly.coeffs().iter().map(|&c| {
                let v = params.center(c);
                let mag = v.unsigned_abs();
                let r = if mag >= p { mag % p } else { mag };
                if v >= 0 || r == 0 {
                    r
                } else {
                    p - r
                }
            }));
            table.forward(&mut residues[start..]);
        }
        NttPoly {
            primes,
            residues,
            shoup: None,
        }
    }

    /// Precompute Shoup companions so later products with this operand
    /// avoid 128-bit division.
    pub fn precompute_shoup(&self, x: &mut NttPoly) {
        let n = self.n;
        let mut companions = Vec::with_capacity(x.residues.len());
        for (k, table) in self.tables[..x.primes].iter().enumerate() {
            companions.extend(x.residues[k * n..(k + 1) * n].iter().map(|&w| shoup(w, table.p)));
        }
        x.shoup = Some(companions);
    }

    pub fn zero(&self, primes: usize) -> NttPoly {
        NttPoly {
            primes,
            residues: vec![0; primes * self.n],
            shoup: None,
        }
    }

    pub fn mul(&self, x: &NttPoly, y: &NttPoly) -> NttPoly {
        let mut out = self.zero(x.primes.min(y.primes));
        self.mul_acc(&mut out, x, y);
        out
    }

    /// `acc += x * y` pointwise.
    pub fn mul_acc(&self, acc: &mut NttPoly, x: &NttPoly, y: &NttPoly) {
        assert!(x.primes >= acc.primes && y.primes >= acc.primes);
        let (x, y) = if x.shoup.is_some() { (y, x) } else { (x, y) };
        let n = self.n;
        for (k, table) in self.tables[..acc.primes].iter().enumerate() {
            let p = table.p;
            let range = k * n..(k + 1) * n;
            let acc_block = &mut acc.residues[range.clone()];
            let xs = &x.residues[range.clone()];
            let ys = &y.residues[range.clone()];
            match &y.shoup {
                Some(companions) => {
                    let cs = &companions[range];
                    for (((a, &u), &v), &vs) in acc_block.iter_mut().zip(xs).zip(ys).zip(cs) {
                        let s = *a + mul_shoup(u, v, vs, p);
                        *a = if s >= p { s - p } else { s };
                    }
                }
                None => {
                    for ((a, &u), &v) in acc_block.iter_mut().zip(xs).zip(ys) {
                        let s = *a + mul_mod(u, v, p);
                        *a = if s >= p { s - p } else { s };
                    }
                }
            }
        }
    }

    /// Inverse transform and CRT-reconstruct to `Z_q`, given that every exact
    /// integer coefficient lies in `(-2^bound_bits, 2^bound_bits)`.
    pub fn inverse(&self, x: &NttPoly, bound_bits: u32, params: &RingParams) -> Poly {
        let primes = x.primes;
        assert!(
            primes >= Self::primes_for_bound(bound_bits),
            "{primes} primes cannot hold a {bound_bits}-bit result"
        );
        let n = self.n;
        let mut residues = x.residues.clone();
        for (k, table) in self.tables[..primes].iter().enumerate() {
            let block = &mut residues[k * n..(k + 1) * n];
            table.inverse(block);
            // Shift into [0, 2^(bound_bits+1)) so Garner sees a non-negative value.
            let offset = pow_mod(2, bound_bits as u64, table.p);
            for r in block.iter_mut() {
                let s = *r + offset;
                *r = if s >= table.p { s - table.p } else { s };
            }
        }
        let offset_wrapping = if bound_bits >= 64 { 0 } else { 1u64 << bound_bits };
        let mut out = vec![0u64; n];
        let mut digits = [0u64; MAX_PRIMES];
        for (idx, o) in out.iter_mut().enumerate() {
            let mut value = 0u64;
            for i in 0..primes {
                let p = self.tables[i].p;
                let r = residues[i * n + idx];
                // Mixed-radix value of earlier digits mod p_i.
                let mut partial = 0u64;
                for (j, &(w, ws)) in self.garner_prefix[i].iter().enumerate() {
                    partial += mul_shoup(digits[j], w, ws, p);
                    if partial >= p {
                        partial -= p;
                    }
                }
                let diff = if r >= partial { r - partial } else { r + p - partial };
                let (inv, inv_s) = self.garner_inv[i];
                digits[i] = mul_shoup(diff, inv, inv_s, p);
                value = value.wrapping_add(digits[i].wrapping_mul(self.prefix_wrapping[i]));
            }
            *o = value.wrapping_sub(offset_wrapping);
        }
        Poly::from_raw_masked(out, params)
    }
}
