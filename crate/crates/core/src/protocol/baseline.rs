//! Offline/online baseline at reduced scale.
//!
//! Offline, the client sends `Enc(R)` for a random vector `R` and receives
//! `Enc(W R - S)`; online it sends `X - R` in the clear and the server adds
//! `W (X - R) + S`. Both shares live in `Z_p` with `p` sized for a
//! non-one-hot accumulation, which caps the supported table size.

use std::sync::{Arc, Mutex};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::channel::{memory_pair, Endpoint};
use super::frame::{Message, MessageKind};
use super::transcript::{Direction, Stage, TrafficMeta, Transcript};
use super::{required_plaintext_bits, ProtocolError};
use crate::bits::{pack_bits, unpack_bits};
use crate::coeff_packing::{encode_input_vector, plan_matvec, PreparedWeights, DEFAULT_WEIGHT_CACHE_BYTES};
use crate::ring::RingParams;
use crate::rlwe::{ct_sub_pt, decrypt, deserialize_ct, encrypt, keygen, serialize_ct, PlaintextPoly};

pub const BASELINE_MAX_M: usize = 256;
pub const BASELINE_MAX_WEIGHT_BITS: u32 = 4;
pub const BASELINE_DEGREE: usize = 4096;
pub const BASELINE_Q_BITS: u32 = 48;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub token: usize,
    pub p_bits: u32,
    /// Client share `W R - S`.
    pub client: Vec<u64>,
    /// Server share `W (X - R) + S`.
    pub server: Vec<u64>,
}

impl BaselineResult {
    /// Centered `(c + s) mod p`.
    pub fn reconstruct(&self) -> Vec<i64> {
        let p = 1u64 << self.p_bits;
        self.client
            .iter()
            .zip(&self.server)
            .map(|(c, s)| {
                let v = (c + s) & (p - 1);
                if v >= p / 2 {
                    v as i64 - p as i64
                } else {
                    v as i64
                }
            })
            .collect()
    }
}

/// Parameters for an `m`-token table of `weight_bits`-bit entries.
pub fn baseline_params(m: usize, weight_bits: u32) -> Result<RingParams, ProtocolError> {
    if m == 0 || m > BASELINE_MAX_M || weight_bits == 0 || weight_bits > BASELINE_MAX_WEIGHT_BITS {
        return Err(ProtocolError::UnsupportedScale(format!(
            "baseline runs need 1 <= m <= {BASELINE_MAX_M} and weight bits <= {BASELINE_MAX_WEIGHT_BITS} (got m={m}, bits={weight_bits})"
        )));
    }
    let p_bits = required_plaintext_bits(false, weight_bits, 1, m);
    RingParams::new(BASELINE_DEGREE, BASELINE_Q_BITS, p_bits, 8).map_err(|e| ProtocolError::Config(e.to_string()))
}

/// Run both stages for one token of a channel-major `n x m` table.
pub fn run_baseline_offline(values: ArrayView2<'_, i8>, weight_bits: u32, token: usize, seed: u64) -> Result<(BaselineResult, Transcript), ProtocolError> {
    let (n, m) = values.dim();
    let params = baseline_params(m, weight_bits)?;
    if token >= m {
        return Err(ProtocolError::TokenRange { token, m });
    }
    let half = 1i32 << (weight_bits - 1);
    if let Some(v) = values.iter().find(|&&v| (v as i32) < -half || (v as i32) >= half) {
        return Err(ProtocolError::Shape(format!("value {v} exceeds {weight_bits} bits")));
    }
    let p = params.p();
    let w: Array2<u64> = values.mapv(|v| params.reduce_signed(v as i64) & params.p_mask());
    let plan = plan_matvec(m, n, params.degree())?;
    let weights = PreparedWeights::new(w.view(), &plan, &params, DEFAULT_WEIGHT_CACHE_BYTES)?;
    let transcript = Arc::new(Mutex::new(Transcript::new(Some(TrafficMeta {
        degree_n: params.degree(),
        q_bits: params.q_bits(),
        p_bits: params.p_bits(),
        m,
        n,
        n_eff: n,
    }))));
    let p_bits = params.p_bits();
    let (c_ep, s_ep) = memory_pair();

    let (client_res, server_res) = std::thread::scope(|scope| {
        let log = Arc::clone(&transcript);
        let (w, plan, weights, params) = (&w, &plan, &weights, &params);
        let server = scope.spawn(move || -> Result<Vec<u64>, ProtocolError> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(2);
            let mut ep = Endpoint::new(s_ep, Direction::ServerToClient, log);
            ep.set_stage(Stage::Offline);
            let query = ep.recv_many(MessageKind::QueryCiphertexts, plan.num_input_polys)?;
            let cts = query
                .iter()
                .map(|q| deserialize_ct(&q.payload, params))
                .collect::<Result<Vec<_>, _>>()?;
            let products = weights.evaluate(w.view(), &cts)?;
            let s: Vec<u64> = (0..n).map(|_| rng.random::<u64>() & params.p_mask()).collect();
            for (poly, ct) in products.iter().enumerate() {
                let mut coeffs: Vec<u64> = (0..params.degree()).map(|_| rng.random::<u64>() & params.p_mask()).collect();
                for row in 0..plan.rows_in_poly(poly) {
                    coeffs[plan.extraction_index(row)] = s[poly * plan.rows_per_poly + row];
                }
                let masked = ct_sub_pt(ct, &PlaintextPoly::new(coeffs, params)?)?;
                ep.send(Message::new(MessageKind::ResponseCiphertexts, serialize_ct(&masked)))?;
            }
            let sync = ep.recv_kind(MessageKind::ShareSync)?;
            let diff = unpack_bits(&sync.payload, p_bits, m)
                .filter(|_| sync.payload.len() == crate::bits::packed_len(m, p_bits))
                .ok_or_else(|| ProtocolError::CorruptFrame("share payload length".into()))?;
            Ok((0..n)
                .map(|i| {
                    let acc = w.row(i).iter().zip(&diff).fold(0u128, |a, (&wij, &d)| a + wij as u128 * d as u128);
                    ((acc as u64).wrapping_add(s[i])) & (p - 1)
                })
                .collect())
        });

        let log = Arc::clone(&transcript);
        let client = (move || -> Result<Vec<u64>, ProtocolError> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let mut ep = Endpoint::new(c_ep, Direction::ClientToServer, log);
            ep.set_stage(Stage::Offline);
            let sk = keygen(params, &mut rng);
            let r: Vec<u64> = (0..m).map(|_| rng.random::<u64>() & params.p_mask()).collect();
            for pt in encode_input_vector(&r, plan, params)? {
                ep.send(Message::new(MessageKind::QueryCiphertexts, serialize_ct(&encrypt(&pt, &sk, &mut rng)?)))?;
            }
            let resp = ep.recv_many(MessageKind::ResponseCiphertexts, plan.num_output_polys)?;
            let bound = plan.num_input_polys as u128 * params.error_bound() as u128 * params.degree() as u128 * (p - 1) as u128;
            let mut share = Vec::with_capacity(n);
            for (poly, msg) in resp.iter().enumerate() {
                let pt = decrypt(&deserialize_ct(&msg.payload, params)?.with_noise_bound(bound), &sk)?;
                for row in 0..plan.rows_in_poly(poly) {
                    share.push(pt.coeffs()[plan.extraction_index(row)]);
                }
            }
            ep.set_stage(Stage::Online);
            let diff: Vec<u64> = (0..m)
                .map(|j| (u64::from(j == token)).wrapping_sub(r[j]) & (p - 1))
                .collect();
            ep.send(Message::new(MessageKind::ShareSync, pack_bits(diff, p_bits)))?;
            Ok(share)
        })();
        (client, server.join().expect("server thread panicked"))
    });
    let (client, server) = match (client_res, server_res) {
        (Ok(c), Ok(s)) => (c, s),
        (Err(e), Ok(_)) | (Err(e), Err(ProtocolError::ChannelClosed)) => return Err(e),
        (_, Err(e)) => return Err(e),
    };
    let transcript = transcript.lock().expect("transcript lock").clone();
    Ok((
        BaselineResult {
            token,
            p_bits,
            client,
            server,
        },
        transcript,
    ))
}
