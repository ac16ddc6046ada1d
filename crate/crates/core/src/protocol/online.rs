//! Online-only query: the client encrypts a one-hot selector, the server
//! multiplies it into the slot-packed table and masks the result, and each
//! party ends with additive shares of the selected embedding row.

use std::sync::{Arc, Mutex};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::channel::{memory_pair, Endpoint, Transport};
use super::dealer::{align_bitwidth, slot_to_additive, to_signed, DealerConfig};
use super::frame::{Message, MessageKind};
use super::transcript::{Direction, Stage, TrafficMeta, Transcript};
use super::ProtocolError;
use crate::coeff_packing::{encode_input_vector, plan_matvec, MatVecPlan, PreparedWeights, DEFAULT_WEIGHT_CACHE_BYTES};
use crate::quantizer::QuantizedTable;
use crate::ring::RingParams;
use crate::rlwe::{
    ct_add_pt, decrypt, deserialize_ct, encrypt, keygen, serialize_ct, Ciphertext, HeError, PlaintextPoly, SecretKey,
};
use crate::scalar::Real;
use crate::slot_packing::{extract_client_shares, make_layout, pack_table, reconstruct, sample_slot_mask, SlotError, SlotLayout};

/// Public parameters the server announces before a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicConfig {
    pub degree_n: usize,
    pub q_bits: u32,
    pub p_bits: u32,
    pub error_bound: u32,
    pub m: usize,
    pub n: usize,
    pub n_eff: usize,
    pub bit_combo: Vec<u32>,
}

impl PublicConfig {
    pub fn params(&self) -> Result<RingParams, ProtocolError> {
        RingParams::new(self.degree_n, self.q_bits, self.p_bits, self.error_bound)
            .map_err(|e| ProtocolError::Config(e.to_string()))
    }

    pub fn plan(&self) -> Result<MatVecPlan, ProtocolError> {
        Ok(plan_matvec(self.m, self.n_eff, self.degree_n)?)
    }

    pub fn layout(&self) -> Result<SlotLayout, ProtocolError> {
        Ok(make_layout(&self.bit_combo, self.p_bits)?)
    }
}

/// The server's private input: the slot-packed table with prepared weights.
#[derive(Debug, Clone)]
pub struct ServerTable {
    params: RingParams,
    plan: MatVecPlan,
    layout: SlotLayout,
    packed: Array2<u32>,
    channel_bits: Vec<u32>,
    weights: PreparedWeights,
}

impl ServerTable {
    pub fn new<T: Real>(table: &QuantizedTable<T>, params: &RingParams) -> Result<Self, ProtocolError> {
        Self::from_parts(table.values.view(), &table.channel_bits, &table.bit_combo, params, DEFAULT_WEIGHT_CACHE_BYTES)
    }

    /// Build from channel-major `n x m` values already in slot order.
    pub fn from_parts(
        values: ArrayView2<'_, i8>,
        channel_bits: &[u32],
        bit_combo: &[u32],
        params: &RingParams,
        cache_bytes: usize,
    ) -> Result<Self, ProtocolError> {
        let layout = make_layout(bit_combo, params.p_bits())?;
        let packed = pack_table(values, channel_bits, &layout)?;
        let plan = plan_matvec(packed.ncols(), packed.nrows(), params.degree())?;
        let weights = PreparedWeights::new(packed.view(), &plan, params, cache_bytes)?;
        Ok(Self {
            params: *params,
            plan,
            layout,
            packed,
            channel_bits: channel_bits.to_vec(),
            weights,
        })
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn plan(&self) -> &MatVecPlan {
        &self.plan
    }

    pub fn layout(&self) -> &SlotLayout {
        &self.layout
    }

    pub fn packed(&self) -> &Array2<u32> {
        &self.packed
    }

    pub fn channel_bits(&self) -> &[u32] {
        &self.channel_bits
    }

    pub fn m(&self) -> usize {
        self.plan.m
    }

    pub fn n(&self) -> usize {
        self.channel_bits.len()
    }

    pub fn public_config(&self) -> PublicConfig {
        PublicConfig {
            degree_n: self.params.degree(),
            q_bits: self.params.q_bits(),
            p_bits: self.params.p_bits(),
            error_bound: self.params.error_bound(),
            m: self.plan.m,
            n: self.n(),
            n_eff: self.plan.n_eff,
            bit_combo: self.layout.value_bits().to_vec(),
        }
    }

    pub fn meta(&self) -> TrafficMeta {
        TrafficMeta {
            degree_n: self.params.degree(),
            q_bits: self.params.q_bits(),
            p_bits: self.params.p_bits(),
            m: self.plan.m,
            n: self.n(),
            n_eff: self.plan.n_eff,
        }
    }
}

fn decode_ct(msg: &Message, params: &RingParams) -> Result<Ciphertext, ProtocolError> {
    deserialize_ct(&msg.payload, params).map_err(|e| match e {
        HeError::Wire(s) => ProtocolError::CorruptFrame(format!("ciphertext payload: {s}")),
        HeError::ParamsMismatch => ProtocolError::CorruptFrame("ciphertext header parameters do not match".into()),
        other => other.into(),
    })
}

fn check_kinds(msgs: &[Message], kind: MessageKind, count: usize) -> Result<(), ProtocolError> {
    if msgs.len() != count {
        return Err(ProtocolError::CorruptFrame(format!("expected {count} {kind:?} messages, got {}", msgs.len())));
    }
    if let Some(m) = msgs.iter().find(|m| m.kind != kind) {
        return Err(ProtocolError::CorruptFrame(format!("expected {kind:?}, got {:?}", m.kind)));
    }
    Ok(())
}

/// What the client keeps between sending its query and reading the reply.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub token: usize,
    pub plan: MatVecPlan,
    pub params: RingParams,
}

/// Encrypt the one-hot selector for `token`: `ceil(m / N)` ciphertexts.
pub fn client_build_query<R: Rng + ?Sized>(
    token: usize,
    m: usize,
    plan: &MatVecPlan,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<(Vec<Message>, ClientState), ProtocolError> {
    if token >= m || m != plan.m {
        return Err(ProtocolError::TokenRange { token, m });
    }
    let mut x = vec![0u64; m];
    x[token] = 1;
    let msgs = encrypt_query_vector(&x, plan, sk, rng)?;
    Ok((
        msgs,
        ClientState {
            token,
            plan: *plan,
            params: *sk.params(),
        },
    ))
}

/// Encrypt an arbitrary selector vector. Only meaningful for tests of
/// malformed queries; honest clients use [`client_build_query`].
pub fn encrypt_query_vector<R: Rng + ?Sized>(x: &[u64], plan: &MatVecPlan, sk: &SecretKey, rng: &mut R) -> Result<Vec<Message>, ProtocolError> {
    let polys = encode_input_vector(x, plan, sk.params())?;
    polys
        .iter()
        .map(|pt| Ok(Message::new(MessageKind::QueryCiphertexts, serialize_ct(&encrypt(pt, sk, rng)?))))
        .collect()
}

/// Server options; masking is only ever disabled by test harnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerOptions {
    pub mask: bool,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { mask: true }
    }
}

/// Server's shares: the slot mask `r_i` of every (permuted) channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerShares {
    pub masks: Vec<u64>,
}

/// Multiply the query into the packed table and add a fresh mask polynomial
/// to every output ciphertext.
pub fn server_eval<R: Rng + ?Sized>(
    query_msgs: &[Message],
    table: &ServerTable,
    options: ServerOptions,
    rng: &mut R,
) -> Result<(Vec<Message>, ServerShares), ProtocolError> {
    let plan = &table.plan;
    let params = &table.params;
    check_kinds(query_msgs, MessageKind::QueryCiphertexts, plan.num_input_polys)?;
    let query = query_msgs.iter().map(|m| decode_ct(m, params)).collect::<Result<Vec<_>, _>>()?;
    let products = table.weights.evaluate(table.packed.view(), &query)?;

    let k = table.layout.slots();
    let n = table.n();
    let mut masks = vec![0u64; n];
    let limit = (params.delta() / 2) as u128;
    let mut out = Vec::with_capacity(products.len());
    for (poly, ct) in products.iter().enumerate() {
        if ct.noise_bound() >= limit {
            return Err(HeError::BudgetExhausted {
                noise_bound: ct.noise_bound(),
                limit,
            }
            .into());
        }
        let mut coeffs: Vec<u64> = if options.mask {
            (0..params.degree()).map(|_| rng.random::<u64>() & params.p_mask()).collect()
        } else {
            vec![0; params.degree()]
        };
        for row in 0..plan.rows_in_poly(poly) {
            let g = poly * plan.rows_per_poly + row;
            let idx = plan.extraction_index(row);
            if options.mask {
                let mask = sample_slot_mask(&table.layout, rng);
                coeffs[idx] = mask.packed;
                for (s, r) in mask.per_slot.into_iter().enumerate() {
                    if let Some(slot) = masks.get_mut(g * k + s) {
                        *slot = r;
                    }
                }
            } else {
                coeffs[idx] = 0;
            }
        }
        let masked = ct_add_pt(ct, &PlaintextPoly::new(coeffs, params)?)?;
        out.push(Message::new(MessageKind::ResponseCiphertexts, serialize_ct(&masked)));
    }
    Ok((out, ServerShares { masks }))
}

/// Client's shares: raw slot contents `c_i` per channel, plus the decrypted
/// extraction coefficients they were read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShares {
    pub shares: Vec<u64>,
    pub coefficients: Vec<u64>,
}

impl ClientShares {
    /// Decode the coefficients directly, which is only valid when the server
    /// did not mask them.
    pub fn unpack_unmasked(&self, layout: &SlotLayout) -> Result<Vec<i64>, SlotError> {
        let mut out = Vec::new();
        for &c in &self.coefficients {
            out.extend(crate::slot_packing::unpack_signed(crate::slot_packing::PackedCoefficient(c), layout)?);
        }
        Ok(out)
    }
}

/// Decrypt the responses and slot-extract one share per channel.
pub fn client_finish(
    response_msgs: &[Message],
    state: &ClientState,
    sk: &SecretKey,
    layout: &SlotLayout,
    n: usize,
) -> Result<ClientShares, ProtocolError> {
    let plan = &state.plan;
    let params = &state.params;
    check_kinds(response_msgs, MessageKind::ResponseCiphertexts, plan.num_output_polys)?;
    let bound = plan.num_input_polys as u128 * params.error_bound() as u128 * params.degree() as u128 * (params.p() - 1) as u128;
    let mut coefficients = Vec::with_capacity(plan.n_eff);
    for (poly, msg) in response_msgs.iter().enumerate() {
        let ct = decode_ct(msg, params)?.with_noise_bound(bound);
        let pt = decrypt(&ct, sk)?;
        for row in 0..plan.rows_in_poly(poly) {
            coefficients.push(pt.coeffs()[plan.extraction_index(row)]);
        }
    }
    let shares: Vec<u64> = coefficients.iter().flat_map(|&c| extract_client_shares(c, layout)).take(n).collect();
    if shares.len() != n {
        return Err(ProtocolError::Shape(format!("{} channel shares for {n} channels", shares.len())));
    }
    Ok(ClientShares { shares, coefficients })
}

/// Shares re-randomized over `Z_{2^ℓ}` by the dealer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedShares {
    pub ell: u32,
    pub client: Vec<u64>,
    pub server: Vec<u64>,
}

impl AlignedShares {
    pub fn reconstruct(&self) -> Vec<i64> {
        self.client
            .iter()
            .zip(&self.server)
            .map(|(c, r)| to_signed(c.wrapping_add(*r), self.ell))
            .collect()
    }
}

/// Both parties' outputs, joined for verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub token: usize,
    /// Value bit-width `b_i` of each permuted channel.
    pub bits: Vec<u32>,
    /// Client slot contents `c_i`, each `b_i + 1` bits.
    pub client: Vec<u64>,
    /// Server masks `r_i`, each `b_i` bits.
    pub server: Vec<u64>,
    pub aligned: Option<AlignedShares>,
}

impl QueryResult {
    /// `c_i - r_i - 2^(b_i - 1)` for every channel.
    pub fn reconstruct(&self) -> Result<Vec<i64>, SlotError> {
        self.client
            .iter()
            .zip(&self.server)
            .zip(&self.bits)
            .map(|((&c, &r), &b)| reconstruct(c, r, b))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    pub seed: u64,
    pub server: ServerOptions,
    /// Extend shares to a common width through the dealer.
    pub align: Option<DealerConfig>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            server: ServerOptions::default(),
            align: Some(DealerConfig::default()),
        }
    }
}

fn party_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run both parties over an in-process channel.
pub fn run_online_query(table: &ServerTable, token: usize, config: &OnlineConfig) -> Result<(QueryResult, Transcript), ProtocolError> {
    let (c, s) = memory_pair();
    run_online_query_over(c, s, table, token, config)
}

/// Run both parties over the given transports, the server on its own thread.
pub fn run_online_query_over<C: Transport, S: Transport>(
    client_transport: C,
    server_transport: S,
    table: &ServerTable,
    token: usize,
    config: &OnlineConfig,
) -> Result<(QueryResult, Transcript), ProtocolError> {
    let transcript = Arc::new(Mutex::new(Transcript::new(Some(table.meta()))));
    let (client_res, server_res) = std::thread::scope(|scope| {
        let server_log = Arc::clone(&transcript);
        let server = scope.spawn(move || -> Result<ServerShares, ProtocolError> {
            let mut rng = party_rng(config.seed, 2);
            let mut ep = Endpoint::new(server_transport, Direction::ServerToClient, server_log);
            let cfg = serde_json::to_vec(&table.public_config()).expect("config serializes");
            ep.send(Message::new(MessageKind::Config, cfg))?;
            let query = ep.recv_many(MessageKind::QueryCiphertexts, table.plan.num_input_polys)?;
            let (resp, shares) = server_eval(&query, table, config.server, &mut rng)?;
            ep.send_all(resp)?;
            Ok(shares)
        });
        let client_log = Arc::clone(&transcript);
        let client = (move || -> Result<(ClientShares, Vec<u32>), ProtocolError> {
            let mut rng = party_rng(config.seed, 1);
            let mut ep = Endpoint::new(client_transport, Direction::ClientToServer, client_log);
            let cfg_msg = ep.recv_kind(MessageKind::Config)?;
            let public: PublicConfig = serde_json::from_slice(&cfg_msg.payload)
                .map_err(|e| ProtocolError::CorruptFrame(format!("config payload: {e}")))?;
            let params = public.params()?;
            let plan = public.plan()?;
            let layout = public.layout()?;
            let sk = keygen(&params, &mut rng);
            let (query, state) = client_build_query(token, public.m, &plan, &sk, &mut rng)?;
            ep.send_all(query)?;
            let resp = ep.recv_many(MessageKind::ResponseCiphertexts, plan.num_output_polys)?;
            let shares = client_finish(&resp, &state, &sk, &layout, public.n)?;
            let k = layout.slots();
            let bits = (0..public.n).map(|c| layout.value_bits()[c % k]).collect();
            Ok((shares, bits))
        })();
        (client, server.join().expect("server thread panicked"))
    });
    let ((client, bits), server) = match (client_res, server_res) {
        (Ok(c), Ok(s)) => (c, s),
        (Err(e), Ok(_)) | (Err(e), Err(ProtocolError::ChannelClosed)) => return Err(e),
        (_, Err(e)) => return Err(e),
    };
    let mut transcript = transcript.lock().expect("transcript lock").clone();
    let mut result = QueryResult {
        token,
        bits,
        client: client.shares,
        server: server.masks,
        aligned: None,
    };
    if let Some(dealer) = config.align {
        let mut rng = party_rng(config.seed, 3);
        let (ac, ar): (Vec<u64>, Vec<u64>) = result
            .client
            .iter()
            .zip(&result.server)
            .zip(&result.bits)
            .map(|((&c, &r), &b)| slot_to_additive(c, r, b))
            .unzip();
        let widths: Vec<u32> = result.bits.iter().map(|b| b + 1).collect();
        let (client, server) = align_bitwidth(&ac, &ar, &widths, dealer.ell, &mut rng)?;
        transcript.record_estimate(Direction::Dealer, MessageKind::AlignResponse, Stage::Online, dealer.charge_bytes(widths.len()));
        result.aligned = Some(AlignedShares {
            ell: dealer.ell,
            client,
            server,
        });
    }
    Ok((result, transcript))
}
