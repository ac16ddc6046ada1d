//! Coefficient encoding that turns one plaintext-ciphertext polynomial
//! product into a block matrix-vector product.
//!
//! The input vector is split into chunks of `k_c` entries laid out in
//! natural order; each `k_o x k_c` weight block is laid out row by row with
//! every row reversed. Output row `i` of a block then lands at coefficient
//! `i*k_c + (k_c - 1)` of the product, with no negacyclic wraparound.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ring::RingParams;
use crate::rlwe::{ct_inner_product_pt, Ciphertext, HeError, PlaintextPoly, PreparedCiphertext, PreparedPlaintext};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackingError {
    #[error("matrix-vector plan needs m >= 1 and n_eff >= 1 (got m={m}, n_eff={n_eff})")]
    EmptyDimension { m: usize, n_eff: usize },
    #[error("degree {degree} does not match the plan's degree {plan}")]
    Degree { degree: usize, plan: usize },
    #[error("value {value} does not fit the plaintext modulus 2^{p_bits}")]
    ValueRange { value: u64, p_bits: u32 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error(transparent)]
    He(#[from] HeError),
}

/// Placement of an `n_eff x m` matrix-vector product in degree-`N` polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatVecPlan {
    pub m: usize,
    pub n_eff: usize,
    pub degree: usize,
    /// `k_c`: matrix columns (input entries) per polynomial chunk.
    pub chunk_cols: usize,
    /// `k_o`: output rows carried by one product polynomial.
    pub rows_per_poly: usize,
    pub num_input_polys: usize,
    pub num_output_polys: usize,
}

/// `k_c = min(m, N)`, `k_o = floor(N / k_c)`; partial products over input
/// chunks are folded by ciphertext addition.
pub fn plan_matvec(m: usize, n_eff: usize, degree: usize) -> Result<MatVecPlan, PackingError> {
    if m == 0 || n_eff == 0 {
        return Err(PackingError::EmptyDimension { m, n_eff });
    }
    let chunk_cols = m.min(degree);
    let rows_per_poly = degree / chunk_cols;
    Ok(MatVecPlan {
        m,
        n_eff,
        degree,
        chunk_cols,
        rows_per_poly,
        num_input_polys: m.div_ceil(chunk_cols),
        num_output_polys: n_eff.div_ceil(rows_per_poly),
    })
}

impl MatVecPlan {
    /// Polynomial products before folding: one per (output poly, input chunk).
    pub fn num_partial_products(&self) -> usize {
        self.num_output_polys * self.num_input_polys
    }

    /// Coefficient of a product polynomial holding its `row`-th output.
    pub fn extraction_index(&self, row: usize) -> usize {
        row * self.chunk_cols + (self.chunk_cols - 1)
    }

    /// `(output polynomial, coefficient)` holding global output row `i`.
    pub fn locate_output(&self, i: usize) -> (usize, usize) {
        (i / self.rows_per_poly, self.extraction_index(i % self.rows_per_poly))
    }

    /// Output rows actually present in output polynomial `poly`.
    pub fn rows_in_poly(&self, poly: usize) -> usize {
        (self.n_eff - poly * self.rows_per_poly).min(self.rows_per_poly)
    }

    fn check_degree(&self, params: &RingParams) -> Result<(), PackingError> {
        if params.degree() != self.degree {
            return Err(PackingError::Degree {
                degree: params.degree(),
                plan: self.degree,
            });
        }
        Ok(())
    }
}

fn check_value(value: u64, params: &RingParams) -> Result<u64, PackingError> {
    if value >= params.p() {
        return Err(PackingError::ValueRange {
            value,
            p_bits: params.p_bits(),
        });
    }
    Ok(value)
}

/// Chunk `c` holds `x[c*k_c + j]` at coefficient `j`.
pub fn encode_input_vector(x: &[u64], plan: &MatVecPlan, params: &RingParams) -> Result<Vec<PlaintextPoly>, PackingError> {
    plan.check_degree(params)?;
    if x.len() != plan.m {
        return Err(PackingError::Shape {
            expected: format!("input of length {}", plan.m),
            got: format!("length {}", x.len()),
        });
    }
    x.chunks(plan.chunk_cols)
        .map(|chunk| {
            let mut coeffs = vec![0u64; plan.degree];
            for (slot, &v) in coeffs.iter_mut().zip(chunk) {
                *slot = check_value(v, params)?;
            }
            Ok(PlaintextPoly::new(coeffs, params)?)
        })
        .collect()
}

pub fn decode_input_vector(polys: &[PlaintextPoly], plan: &MatVecPlan) -> Vec<u64> {
    polys
        .iter()
        .flat_map(|p| p.coeffs()[..plan.chunk_cols].iter().copied())
        .take(plan.m)
        .collect()
}

/// Coefficient `i*k_c + (k_c - 1 - j)` holds `block[i][j]`. The block may be
/// smaller than `k_o x k_c` (edge blocks); missing entries are zero.
pub fn encode_weight_block<T>(block: ArrayView2<'_, T>, plan: &MatVecPlan, params: &RingParams) -> Result<PlaintextPoly, PackingError>
where
    T: Copy + Into<u64>,
{
    plan.check_degree(params)?;
    let (rows, cols) = block.dim();
    if rows > plan.rows_per_poly || cols > plan.chunk_cols {
        return Err(PackingError::Shape {
            expected: format!("block of at most {} x {}", plan.rows_per_poly, plan.chunk_cols),
            got: format!("{rows} x {cols}"),
        });
    }
    let k_c = plan.chunk_cols;
    let mut coeffs = vec![0u64; plan.degree];
    for ((i, j), &v) in block.indexed_iter() {
        coeffs[i * k_c + (k_c - 1 - j)] = check_value(v.into(), params)?;
    }
    Ok(PlaintextPoly::new(coeffs, params)?)
}

/// Weight block for output polynomial `poly` and input chunk `chunk` of an
/// `n_eff x m` matrix.
pub fn weight_block<T>(
    w: ArrayView2<'_, T>,
    plan: &MatVecPlan,
    poly: usize,
    chunk: usize,
    params: &RingParams,
) -> Result<PlaintextPoly, PackingError>
where
    T: Copy + Into<u64>,
{
    check_matrix_shape(w, plan)?;
    let r0 = poly * plan.rows_per_poly;
    let c0 = chunk * plan.chunk_cols;
    let r1 = (r0 + plan.rows_per_poly).min(plan.n_eff);
    let c1 = (c0 + plan.chunk_cols).min(plan.m);
    encode_weight_block(w.slice(ndarray::s![r0..r1, c0..c1]), plan, params)
}

fn check_matrix_shape<T>(w: ArrayView2<'_, T>, plan: &MatVecPlan) -> Result<(), PackingError> {
    if w.dim() != (plan.n_eff, plan.m) {
        return Err(PackingError::Shape {
            expected: format!("{} x {} matrix", plan.n_eff, plan.m),
            got: format!("{} x {}", w.nrows(), w.ncols()),
        });
    }
    Ok(())
}

/// Read every output row at its extraction index.
pub fn extract_output(result_polys: &[PlaintextPoly], plan: &MatVecPlan) -> Result<Vec<u64>, PackingError> {
    if result_polys.len() != plan.num_output_polys {
        return Err(PackingError::Shape {
            expected: format!("{} output polynomials", plan.num_output_polys),
            got: result_polys.len().to_string(),
        });
    }
    Ok((0..plan.n_eff)
        .map(|i| {
            let (poly, idx) = plan.locate_output(i);
            result_polys[poly].coeffs()[idx]
        })
        .collect())
}

/// Reference `W x mod p` by a direct double loop.
pub fn matvec_oracle<T>(w: ArrayView2<'_, T>, x: &[u64], p_bits: u32) -> Vec<u64>
where
    T: Copy + Into<u64>,
{
    let mask = (1u128 << p_bits) - 1;
    w.axis_iter(Axis(0))
        .map(|row| {
            let acc = row
                .iter()
                .zip(x)
                .fold(0u128, |acc, (&wij, &xj)| acc + wij.into() as u128 * xj as u128);
            (acc & mask) as u64
        })
        .collect()
}

/// Encoded weight blocks kept in NTT form when they fit in `cache_bytes`,
/// otherwise re-encoded per evaluation.
#[derive(Debug, Clone)]
pub struct PreparedWeights {
    plan: MatVecPlan,
    params: RingParams,
    cached: Option<Vec<Vec<PreparedPlaintext>>>,
}

/// Default cache budget for prepared weight blocks.
pub const DEFAULT_WEIGHT_CACHE_BYTES: usize = 512 << 20;

impl PreparedWeights {
    pub fn new<T>(w: ArrayView2<'_, T>, plan: &MatVecPlan, params: &RingParams, cache_bytes: usize) -> Result<Self, PackingError>
    where
        T: Copy + Into<u64>,
    {
        check_matrix_shape(w, plan)?;
        plan.check_degree(params)?;
        // Two NTT primes, value plus Shoup companion per coefficient.
        let per_block = 2 * 2 * plan.degree * std::mem::size_of::<u64>();
        let cached = if plan.num_partial_products().saturating_mul(per_block) <= cache_bytes {
            let mut out = Vec::with_capacity(plan.num_output_polys);
            for poly in 0..plan.num_output_polys {
                let row = (0..plan.num_input_polys)
                    .map(|chunk| {
                        let pt = weight_block(w, plan, poly, chunk, params)?;
                        Ok(PreparedPlaintext::new(&pt, params)?)
                    })
                    .collect::<Result<Vec<_>, PackingError>>()?;
                out.push(row);
            }
            Some(out)
        } else {
            None
        };
        Ok(PreparedWeights {
            plan: *plan,
            params: *params,
            cached,
        })
    }

    pub fn plan(&self) -> &MatVecPlan {
        &self.plan
    }

    pub fn is_cached(&self) -> bool {
        self.cached.is_some()
    }

    /// Homomorphic `W x`: one ciphertext per output polynomial, each the
    /// sum over input chunks of `query[chunk] * block[poly][chunk]`.
    /// `w` must be the matrix the weights were prepared from; it is only
    /// read when blocks are not cached.
    pub fn evaluate<T>(&self, w: ArrayView2<'_, T>, query: &[Ciphertext]) -> Result<Vec<Ciphertext>, PackingError>
    where
        T: Copy + Into<u64>,
    {
        let plan = &self.plan;
        if query.len() != plan.num_input_polys {
            return Err(PackingError::Shape {
                expected: format!("{} query ciphertexts", plan.num_input_polys),
                got: query.len().to_string(),
            });
        }
        let prepared: Vec<_> = query.iter().map(PreparedCiphertext::new).collect();
        (0..plan.num_output_polys)
            .map(|poly| {
                let owned;
                let blocks: &[PreparedPlaintext] = match &self.cached {
                    Some(c) => &c[poly],
                    None => {
                        owned = (0..plan.num_input_polys)
                            .map(|chunk| {
                                let pt = weight_block(w, plan, poly, chunk, &self.params)?;
                                Ok(PreparedPlaintext::new(&pt, &self.params)?)
                            })
                            .collect::<Result<Vec<_>, PackingError>>()?;
                        &owned
                    }
                };
                let terms: Vec<_> = prepared.iter().zip(blocks).collect();
                Ok(ct_inner_product_pt(&terms)?)
            })
            .collect()
    }
}
