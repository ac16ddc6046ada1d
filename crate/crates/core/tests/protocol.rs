use fastquery::bits::packed_len;
use fastquery::coeff_packing::DEFAULT_WEIGHT_CACHE_BYTES;
use fastquery::protocol::baseline::{baseline_params, run_baseline_offline};
use fastquery::protocol::dealer::{align_bitwidth, slot_to_additive, to_signed};
use fastquery::protocol::online::{
    client_build_query, client_finish, encrypt_query_vector, run_online_query, run_online_query_over, server_eval, OnlineConfig,
    ServerOptions, ServerTable,
};
use fastquery::protocol::{
    memory_pair, required_plaintext_bits, tcp_loopback_pair, Frame, MemoryTransport, MessageKind, Phase, ProtocolError, Stage,
    Transcript, Transport, FRAME_HEADER_LEN,
};
use fastquery::quantizer::{quantize_table, QuantConfig};
use fastquery::ring::RingParams;
use fastquery::rlwe::{ct_wire_len, keygen};
use fastquery::slot_packing::SlotError;
use fastquery::synth::lognormal_table;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const COMBO: [u32; 3] = [4, 3, 3];

fn params(n: usize) -> RingParams {
    RingParams::new(n, 48, 13, 8).unwrap()
}

fn random_values(n: usize, m: usize, rng: &mut impl Rng) -> (Array2<i8>, Vec<u32>) {
    let bits: Vec<u32> = (0..n).map(|c| COMBO[c % 3]).collect();
    let values = Array2::from_shape_fn((n, m), |(c, _)| {
        let half = 1i8 << (bits[c] - 1);
        rng.random_range(-half..half)
    });
    (values, bits)
}

fn table(n: usize, m: usize, degree: usize, seed: u64) -> (ServerTable, Array2<i8>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (values, bits) = random_values(n, m, &mut rng);
    let t = ServerTable::from_parts(values.view(), &bits, &COMBO, &params(degree), DEFAULT_WEIGHT_CACHE_BYTES).unwrap();
    (t, values)
}

fn column(values: &Array2<i8>, t: usize) -> Vec<i64> {
    values.column(t).iter().map(|&v| v as i64).collect()
}

#[test]
fn toy_single_chunk_matches_lookup() {
    let (t, values) = table(3, 8, 16, 1);
    assert_eq!(t.plan().num_input_polys, 1);
    for token in 0..8 {
        let (res, transcript) = run_online_query(&t, token, &OnlineConfig { seed: token as u64, ..OnlineConfig::default() }).unwrap();
        assert_eq!(res.reconstruct().unwrap(), column(&values, token));
        assert_eq!(res.aligned.as_ref().unwrap().reconstruct(), column(&values, token));
        assert_eq!(transcript.count(MessageKind::QueryCiphertexts), 1);
    }
}

#[test]
fn multi_chunk_edges_and_message_counts() {
    let (t, values) = table(20, 300, 64, 2);
    let plan = *t.plan();
    assert_eq!(plan.num_input_polys, 5);
    let wire = ct_wire_len(t.params()) as u64;
    for token in [0, 63, 64, 255, 256, 299] {
        let (res, tr) = run_online_query(&t, token, &OnlineConfig { seed: 9, ..OnlineConfig::default() }).unwrap();
        assert_eq!(res.reconstruct().unwrap(), column(&values, token), "token {token}");
        assert_eq!(tr.count(MessageKind::ResponseCiphertexts), plan.n_eff.div_ceil(plan.rows_per_poly));
        assert_eq!(tr.phase_bytes(Phase::Query), 5 * (wire + FRAME_HEADER_LEN as u64));
        assert_eq!(
            tr.phase_bytes(Phase::Response),
            plan.num_output_polys as u64 * (wire + FRAME_HEADER_LEN as u64)
        );
    }
    assert!(matches!(
        run_online_query(&t, 300, &OnlineConfig::default()),
        Err(ProtocolError::TokenRange { token: 300, m: 300 })
    ));
}

#[test]
fn quantized_table_end_to_end() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let w: Array2<f32> = lognormal_table(1000, 48, 1.0, &mut rng);
    let q = quantize_table(w.view(), &QuantConfig::default(), None).unwrap();
    let t = ServerTable::new(&q, &RingParams::default()).unwrap();
    for token in [0, 517, 999] {
        let (res, _) = run_online_query(&t, token, &OnlineConfig { seed: 4, ..OnlineConfig::default() }).unwrap();
        let expected: Vec<i64> = q.token_values(token).iter().map(|&v| v as i64).collect();
        assert_eq!(res.reconstruct().unwrap(), expected);
    }
}

#[test]
fn zero_table_reconstructs_zero() {
    let bits: Vec<u32> = (0..7).map(|c| COMBO[c % 3]).collect();
    let zero = Array2::<i8>::zeros((7, 40));
    let t = ServerTable::from_parts(zero.view(), &bits, &COMBO, &params(32), DEFAULT_WEIGHT_CACHE_BYTES).unwrap();
    let (res, _) = run_online_query(&t, 13, &OnlineConfig::default()).unwrap();
    assert_eq!(res.reconstruct().unwrap(), vec![0; 7]);
}

#[test]
fn fixed_seed_is_deterministic_and_transport_independent() {
    let (t, _) = table(9, 100, 64, 5);
    let config = OnlineConfig { seed: 77, ..OnlineConfig::default() };
    let (r1, t1) = run_online_query(&t, 42, &config).unwrap();
    let (r2, t2) = run_online_query(&t, 42, &config).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(t1.to_json(), t2.to_json());
    let (c, s) = tcp_loopback_pair().unwrap();
    let (r3, t3) = run_online_query_over(c, s, &t, 42, &config).unwrap();
    assert_eq!(r1, r3);
    assert_eq!(t1.to_json(), t3.to_json());
    let (r4, _) = run_online_query(&t, 42, &OnlineConfig { seed: 78, ..config }).unwrap();
    assert_ne!(r1.server, r4.server);
}

#[test]
fn transcript_conservation_and_replay() {
    let (t, _) = table(9, 100, 64, 6);
    let (_, tr) = run_online_query(&t, 1, &OnlineConfig::default()).unwrap();
    let sum: u64 = tr.entries().iter().map(|e| e.byte_len).sum();
    assert_eq!(tr.total_bytes(), sum);
    assert_eq!(tr.subtotals().values().sum::<u64>(), sum);
    assert!(tr.entries().iter().filter(|e| !e.estimated).all(|e| e.byte_len == e.payload_len as u64 + FRAME_HEADER_LEN as u64));
    let replay = Transcript::from_json(&tr.to_json()).unwrap();
    assert_eq!(replay.subtotals(), tr.subtotals());
    assert_eq!(replay.total_bytes(), tr.total_bytes());
    assert!(tr.phase_bytes(Phase::Alignment) > 0);
}

/// Applies `tamper` to the `index`-th frame this side sends.
struct Tamper<F> {
    inner: MemoryTransport,
    index: usize,
    sent: usize,
    tamper: F,
}

impl<F: FnMut(&mut Vec<u8>) + Send> Transport for Tamper<F> {
    fn send_bytes(&mut self, mut frame: Vec<u8>) -> Result<(), ProtocolError> {
        if self.sent == self.index {
            (self.tamper)(&mut frame);
        }
        self.sent += 1;
        self.inner.send_bytes(frame)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.inner.recv_bytes()
    }
}

fn run_tampered(index: usize, tamper: impl FnMut(&mut Vec<u8>) + Send) -> Result<(), ProtocolError> {
    let (t, _) = table(6, 40, 16, 7);
    let (c, s) = memory_pair();
    let s = Tamper { inner: s, index, sent: 0, tamper };
    run_online_query_over(c, s, &t, 3, &OnlineConfig::default()).map(|_| ())
}

#[test]
fn tampered_responses_are_rejected() {
    let cases: Vec<(&str, Box<dyn FnMut(&mut Vec<u8>) + Send>)> = vec![
        ("kind", Box::new(|f: &mut Vec<u8>| f[4] = MessageKind::ShareSync as u8)),
        ("unknown kind", Box::new(|f: &mut Vec<u8>| f[4] = 0xee)),
        ("sequence", Box::new(|f: &mut Vec<u8>| f[5] ^= 1)),
        ("length", Box::new(|f: &mut Vec<u8>| f[0] = f[0].wrapping_add(1))),
        ("truncated", Box::new(|f: &mut Vec<u8>| {
            f.truncate(f.len() - 3);
            let len = (f.len() - FRAME_HEADER_LEN) as u32;
            f[..4].copy_from_slice(&len.to_le_bytes());
        })),
        ("magic", Box::new(|f: &mut Vec<u8>| f[FRAME_HEADER_LEN] ^= 0xff)),
        ("ciphertext params", Box::new(|f: &mut Vec<u8>| f[FRAME_HEADER_LEN + 9] ^= 1)),
    ];
    for (name, tamper) in cases {
        let err = run_tampered(1, tamper).unwrap_err();
        assert!(matches!(err, ProtocolError::CorruptFrame(_)), "{name}: {err:?}");
    }
    let err = run_tampered(0, |f| f.push(0)).unwrap_err();
    assert!(matches!(err, ProtocolError::CorruptFrame(_)), "{err:?}");
}

#[test]
fn two_hot_query_trips_guard_bits() {
    let bits: Vec<u32> = (0..3).map(|c| COMBO[c % 3]).collect();
    let mut values = Array2::<i8>::zeros((3, 8));
    values.column_mut(2).assign(&ndarray::arr1(&[7, 3, 3]));
    values.column_mut(5).assign(&ndarray::arr1(&[7, 3, 3]));
    let p = params(16);
    let t = ServerTable::from_parts(values.view(), &bits, &COMBO, &p, DEFAULT_WEIGHT_CACHE_BYTES).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let sk = keygen(&p, &mut rng);
    let layout = t.layout().clone();

    let (msgs, state) = client_build_query(2, 8, t.plan(), &sk, &mut rng).unwrap();
    let (resp, _) = server_eval(&msgs, &t, ServerOptions { mask: false }, &mut rng).unwrap();
    let shares = client_finish(&resp, &state, &sk, &layout, 3).unwrap();
    assert_eq!(shares.unpack_unmasked(&layout).unwrap(), vec![7, 3, 3]);

    let mut x = vec![0u64; 8];
    x[2] = 1;
    x[5] = 1;
    let msgs = encrypt_query_vector(&x, t.plan(), &sk, &mut rng).unwrap();
    let (resp, _) = server_eval(&msgs, &t, ServerOptions { mask: false }, &mut rng).unwrap();
    let shares = client_finish(&resp, &state, &sk, &layout, 3).unwrap();
    assert!(matches!(shares.unpack_unmasked(&layout), Err(SlotError::GuardBit { .. })));
}

#[test]
fn dealer_extension_exhaustive() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for b in 2..=6u32 {
        let half = 1i64 << (b - 1);
        for v in -half..half {
            let u = (v + half) as u64;
            for r in 0..1u64 << b {
                let (c, s) = slot_to_additive(u + r, r, b);
                assert_eq!(to_signed(c.wrapping_add(s), b + 1), v);
                for ell in [b + 1, 8, 16, 32] {
                    let (c2, s2) = align_bitwidth(&[c], &[s], &[b + 1], ell, &mut rng).unwrap();
                    assert_eq!(to_signed(c2[0].wrapping_add(s2[0]), ell), v);
                }
            }
        }
    }
    assert!(matches!(
        align_bitwidth(&[0], &[0], &[5], 4, &mut rng),
        Err(ProtocolError::AlignWidth { ell: 4, needed: 5 })
    ));
}

#[test]
fn dealer_shares_are_uniform() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let draws = 100_000;
    let mut hist = [0u64; 256];
    for i in 0..draws {
        let (c, s) = slot_to_additive(11 + (i % 5), i % 5, 4);
        let (c2, _) = align_bitwidth(&[c], &[s], &[5], 8, &mut rng).unwrap();
        hist[c2[0] as usize] += 1;
    }
    let expected = draws as f64 / 256.0;
    let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // 255 degrees of freedom: mean 255, standard deviation about 22.6.
    assert!(chi2 < 255.0 + 5.0 * 22.6, "chi-square {chi2}");
}

#[test]
fn baseline_reconstructs_over_100_runs() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let values = Array2::from_shape_simple_fn((8, 64), || rng.random_range(-8i8..8));
    let p_bits = baseline_params(64, 4).unwrap().p_bits();
    assert_eq!(p_bits, required_plaintext_bits(false, 4, 1, 64));
    for run in 0..100u64 {
        let token = rng.random_range(0..64);
        let (res, tr) = run_baseline_offline(values.view(), 4, token, run).unwrap();
        assert_eq!(res.reconstruct(), column(&values, token), "run {run}");
        let offline = tr.stage_bytes(Stage::Offline);
        let online = tr.stage_bytes(Stage::Online);
        assert!(offline > online);
        assert_eq!(online, (packed_len(64, p_bits) + FRAME_HEADER_LEN) as u64);
        assert!(tr.entries().iter().all(|e| (e.kind == MessageKind::ShareSync) == (e.stage == Stage::Online)));
    }
}

#[test]
fn baseline_refuses_large_scale() {
    let big = Array2::<i8>::zeros((2, 257));
    assert!(matches!(run_baseline_offline(big.view(), 4, 0, 0), Err(ProtocolError::UnsupportedScale(_))));
    let small = Array2::<i8>::zeros((2, 16));
    assert!(matches!(run_baseline_offline(small.view(), 5, 0, 0), Err(ProtocolError::UnsupportedScale(_))));
}

#[test]
fn plaintext_width_analyzer() {
    assert_eq!(required_plaintext_bits(true, 12, 1, 32000), 13);
    assert_eq!(required_plaintext_bits(false, 12, 1, 32000), 29);
    assert_eq!(required_plaintext_bits(false, 12, 1, 1), 14);
}

#[test]
fn frames_roundtrip() {
    let f = Frame { kind: MessageKind::AlignRequest, seq: 0x01020304, payload: vec![9, 8, 7] };
    let bytes = f.encode();
    assert_eq!(&bytes[..9], &[3, 0, 0, 0, MessageKind::AlignRequest as u8, 4, 3, 2, 1]);
    assert_eq!(Frame::decode(&bytes).unwrap(), f);
}
