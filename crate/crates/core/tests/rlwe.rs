use fastquery::ring::{negacyclic_mul_schoolbook, Poly, RingParams};
use fastquery::rlwe::{
    ct_add_ct, ct_add_pt, ct_mul_pt, ct_sub_pt, ct_wire_len, decrypt, deserialize_ct, encrypt, keygen, measured_noise,
    noise_budget, serialize_ct, Ciphertext, PlaintextPoly, SecretKey, CT_HEADER_LEN,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_pt(params: &RingParams, rng: &mut impl Rng) -> PlaintextPoly {
    PlaintextPoly::new((0..params.degree()).map(|_| rng.random_range(0..params.p())).collect(), params).unwrap()
}

/// `m * w` in `Z_p[X]/(X^N + 1)` via the ring multiply at modulus `p`.
fn plain_mul(m: &PlaintextPoly, w: &PlaintextPoly, params: &RingParams) -> Vec<u64> {
    let pp = RingParams::new(params.degree(), params.p_bits(), params.p_bits() - 1, 1).unwrap();
    let a = Poly::from_coeffs(m.coeffs().to_vec(), &pp).unwrap();
    let b = Poly::from_coeffs(w.coeffs().to_vec(), &pp).unwrap();
    negacyclic_mul_schoolbook(&a, &b, &pp).unwrap().into_coeffs()
}

fn plain_add(a: &[u64], b: &[u64], params: &RingParams) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| (x + y) & params.p_mask()).collect()
}

fn assert_tracked(ct: &Ciphertext, sk: &SecretKey) {
    assert!(measured_noise(ct, sk).unwrap() as u128 <= ct.noise_bound());
}

#[test]
fn default_pipeline_exact_over_1000_trials() {
    let params = RingParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let sk = keygen(&params, &mut rng);
    for trial in 0..1000 {
        let m = random_pt(&params, &mut rng);
        let w = random_pt(&params, &mut rng);
        let u = random_pt(&params, &mut rng);
        let prod = ct_mul_pt(&encrypt(&m, &sk, &mut rng).unwrap(), &w).unwrap();
        let ct = ct_add_pt(&prod, &u).unwrap();
        assert!(ct.noise_bound() < (params.delta() / 2) as u128);
        let expected = plain_add(&plain_mul(&m, &w, &params), u.coeffs(), &params);
        assert_eq!(decrypt(&ct, &sk).unwrap().coeffs(), &expected[..], "trial {trial}");
        if trial % 100 == 0 {
            assert_tracked(&ct, &sk);
        }
    }
}

#[test]
fn fresh_ciphertexts_roundtrip_with_budget() {
    let params = RingParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let sk = keygen(&params, &mut rng);
    let floor = params.q_bits() as i64 - params.p_bits() as i64 - (2.0 * params.error_bound() as f64).log2() as i64 - 1;
    for _ in 0..1000 {
        let m = random_pt(&params, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        assert_eq!(decrypt(&ct, &sk).unwrap(), m);
        assert_eq!(ct.noise_bound(), params.error_bound() as u128);
        let budget = noise_budget(&ct, &sk).unwrap();
        assert!(budget >= floor && budget >= 30, "budget {budget}");
        assert_tracked(&ct, &sk);
    }
    let zero = encrypt(&PlaintextPoly::zero(&params), &sk, &mut rng).unwrap();
    assert_eq!(decrypt(&zero, &sk).unwrap(), PlaintextPoly::zero(&params));
}

#[test]
fn budget_moves_as_documented() {
    let params = RingParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let sk = keygen(&params, &mut rng);
    let ct = encrypt(&random_pt(&params, &mut rng), &sk, &mut rng).unwrap();
    let before = noise_budget(&ct, &sk).unwrap();
    let masked = ct_add_pt(&ct, &random_pt(&params, &mut rng)).unwrap();
    assert_eq!(noise_budget(&masked, &sk).unwrap(), before);
    assert_eq!(measured_noise(&masked, &sk).unwrap(), measured_noise(&ct, &sk).unwrap());
    assert_eq!(masked.noise_bound(), ct.noise_bound());
    let dense = PlaintextPoly::new(vec![params.p() - 1; params.degree()], &params).unwrap();
    let prod = ct_mul_pt(&ct, &dense).unwrap();
    assert!(noise_budget(&prod, &sk).unwrap() < before);
    assert_tracked(&prod, &sk);
    let one = PlaintextPoly::constant(1, &params).unwrap();
    assert_eq!(decrypt(&ct_mul_pt(&ct, &one).unwrap(), &sk).unwrap(), decrypt(&ct, &sk).unwrap());
}

#[test]
fn keys_are_ternary_and_seeded() {
    let params = RingParams::default();
    let a = keygen(&params, &mut ChaCha20Rng::seed_from_u64(5));
    let b = keygen(&params, &mut ChaCha20Rng::seed_from_u64(5));
    let c = keygen(&params, &mut ChaCha20Rng::seed_from_u64(6));
    assert_eq!(a.poly(), b.poly());
    assert_ne!(a.poly(), c.poly());
    assert!(a.poly().coeffs().iter().all(|&x| x <= 1 || x == params.q() - 1));
}

fn small_params() -> RingParams {
    RingParams::new(8, 40, 13, 8).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mul_pt_matches_ring_oracle(seed in any::<u64>()) {
        let params = small_params();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = keygen(&params, &mut rng);
        let m = random_pt(&params, &mut rng);
        let w = random_pt(&params, &mut rng);
        let ct = ct_mul_pt(&encrypt(&m, &sk, &mut rng).unwrap(), &w).unwrap();
        prop_assert!(measured_noise(&ct, &sk).unwrap() as u128 <= ct.noise_bound());
        prop_assert_eq!(decrypt(&ct, &sk).unwrap().into_coeffs(), plain_mul(&m, &w, &params));
    }

    #[test]
    fn ct_addition_is_homomorphic(seed in any::<u64>()) {
        let params = small_params();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = keygen(&params, &mut rng);
        let m1 = random_pt(&params, &mut rng);
        let m2 = random_pt(&params, &mut rng);
        let c1 = encrypt(&m1, &sk, &mut rng).unwrap();
        let c2 = encrypt(&m2, &sk, &mut rng).unwrap();
        let sum = ct_add_ct(&c1, &c2).unwrap();
        prop_assert_eq!(sum.noise_bound(), c1.noise_bound() + c2.noise_bound());
        prop_assert!(measured_noise(&sum, &sk).unwrap() as u128 <= sum.noise_bound());
        prop_assert_eq!(decrypt(&sum, &sk).unwrap().into_coeffs(), plain_add(m1.coeffs(), m2.coeffs(), &params));
        let z = encrypt(&PlaintextPoly::zero(&params), &sk, &mut rng).unwrap();
        prop_assert_eq!(decrypt(&ct_add_ct(&c1, &z).unwrap(), &sk).unwrap(), m1);
    }

    #[test]
    fn plaintext_add_sub_inverse(seed in any::<u64>()) {
        let params = small_params();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = keygen(&params, &mut rng);
        let m = random_pt(&params, &mut rng);
        let u = random_pt(&params, &mut rng);
        let ct = encrypt(&m, &sk, &mut rng).unwrap();
        let added = ct_add_pt(&ct, &u).unwrap();
        prop_assert_eq!(decrypt(&added, &sk).unwrap().into_coeffs(), plain_add(m.coeffs(), u.coeffs(), &params));
        prop_assert_eq!(decrypt(&ct_sub_pt(&added, &u).unwrap(), &sk).unwrap(), m);
    }

    #[test]
    fn wire_roundtrip(seed in any::<u64>(), q_bits in 20u32..=62) {
        let params = RingParams::new(16, q_bits, 13, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = keygen(&params, &mut rng);
        let ct = encrypt(&random_pt(&params, &mut rng), &sk, &mut rng).unwrap();
        let bytes = serialize_ct(&ct);
        prop_assert_eq!(bytes.len(), CT_HEADER_LEN + (2 * 16 * q_bits as usize).div_ceil(8));
        let back = deserialize_ct(&bytes, &params).unwrap();
        prop_assert_eq!(back.a(), ct.a());
        prop_assert_eq!(back.b(), ct.b());
    }
}

#[test]
fn default_wire_size() {
    let params = RingParams::default();
    assert_eq!(ct_wire_len(&params), CT_HEADER_LEN + 49152);
}

#[test]
fn serialized_ciphertext_pinned() {
    let params = RingParams::new(16, 48, 13, 8).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let sk = keygen(&params, &mut rng);
    let m = PlaintextPoly::new((0..16).collect(), &params).unwrap();
    let bytes = serialize_ct(&encrypt(&m, &sk, &mut rng).unwrap());
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ct_n16_seed42.bin");
    if std::env::var_os("FASTQUERY_BLESS").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    let expected = std::fs::read(&path).unwrap();
    assert_eq!(bytes, expected);
    assert_eq!(&bytes[..4], b"FQCT");
    let ct = deserialize_ct(&expected, &params).unwrap();
    assert_eq!(decrypt(&ct, &sk).unwrap(), m);
}
