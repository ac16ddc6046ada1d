use fastquery::io::{read_quantized_table, write_quantized_table};
use fastquery::quantizer::{
    assign_bitwidths, build_permutation, channel_saliency, compare_criteria, invert_permutation, is_permutation, permute_columns,
    permute_rows, quantize_per_channel, quantize_per_tensor, quantize_table, reconstruction_error, ChannelStats, Criterion,
    QuantConfig, QuantizedTable,
};
use fastquery::synth::{gaussian_matrix, lognormal_table, sample_zipf_counts};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn synthetic(seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = lognormal_table(512, 96, 1.0, &mut rng);
    let f = sample_zipf_counts(512, 1.1, 20 * 512, &mut rng);
    (w, f)
}

fn weighted_error(w: &Array2<f64>, f: &[f64], criterion: Criterion, combo: &[u32], seed: u64) -> f64 {
    let config = QuantConfig {
        criterion,
        bit_combo: combo.to_vec(),
        seed,
        ..QuantConfig::default()
    };
    let q = quantize_table(w.view(), &config, None).unwrap();
    reconstruction_error(w.view(), &q, Some(f)).unwrap()
}

#[test]
fn absolute_value_beats_random() {
    let wins = (0..20u64)
        .filter(|&seed| {
            let (w, f) = synthetic(seed);
            weighted_error(&w, &f, Criterion::AbsoluteValue, &[4, 3, 3], seed)
                <= weighted_error(&w, &f, Criterion::Random, &[4, 3, 3], seed)
        })
        .count();
    assert!(wins >= 18, "absolute value won {wins}/20");
}

#[test]
fn wider_minimum_width_wins() {
    let combos: [&[u32]; 3] = [&[4, 3, 3], &[5, 3, 2], &[6, 2, 2]];
    let mut means = [0.0; 3];
    for seed in 0..20u64 {
        let (w, f) = synthetic(100 + seed);
        for (k, combo) in combos.iter().enumerate() {
            means[k] += weighted_error(&w, &f, Criterion::Random, combo, seed) / 20.0;
        }
    }
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}

#[test]
fn comparison_grid_covers_all_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let w: Array2<f64> = lognormal_table(64, 12, 1.0, &mut rng);
    let stats = fastquery::synth::synthetic_channel_stats(w.view(), 0.3, &mut rng);
    let combos = vec![vec![4, 3, 3], vec![5, 3, 2], vec![6, 2, 2]];
    let rows = compare_criteria(w.view(), &Criterion::ALL, &combos, Some(&stats), None, 1).unwrap();
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r.error.is_finite() && r.error > 0.0));
    assert!(compare_criteria(w.view(), &[Criterion::Hessian], &combos, None, None, 1).is_err());
}

/// Direct evaluation of the quantization formula.
fn oracle_mse(w: &Array2<f64>, bits: &[u32]) -> f64 {
    let mut total = 0.0;
    for c in 0..w.ncols() {
        let hi = (1i32 << (bits[c] - 1)) - 1;
        let max_abs = w.column(c).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = if max_abs == 0.0 { 1.0 } else { 2f64.powf(((max_abs / hi as f64).log2() + 0.5).floor()) };
        for &v in w.column(c) {
            let q = (v / scale).round().clamp(-(hi as f64) - 1.0, hi as f64);
            total += (v - q * scale).powi(2);
        }
    }
    total / w.len() as f64
}

#[test]
fn three_by_three_matches_oracle() {
    let w = array![[0.3, -1.7, 0.02], [-0.9, 2.5, 0.05], [0.11, 0.4, -0.07]];
    let bits = [3, 4, 2];
    let q = quantize_per_channel(w.view(), &bits, true).unwrap();
    let got = reconstruction_error(w.view(), &q, None).unwrap();
    assert!((got - oracle_mse(&w, &bits)).abs() < 1e-15);
    assert_eq!(q.scales[0], 0.25);
    assert_eq!(q.values.row(0).to_vec(), vec![1, -4, 0]);
}

#[test]
fn representable_grid_is_exact() {
    let w = array![[-7.0, 0.75, 0.0], [7.0, -0.5, 0.0], [3.0, 0.25, 0.0]];
    let q = quantize_per_channel(w.view(), &[4, 3, 2], true).unwrap();
    assert_eq!(q.scales, vec![1.0, 0.25, 1.0]);
    assert_eq!(q.dequantize(true), w);
    assert_eq!(reconstruction_error(w.view(), &q, None).unwrap(), 0.0);
}

#[test]
fn per_tensor_outlier_costs_accuracy() {
    let w = array![[0.1, 40.0], [-0.2, -35.0], [0.15, 20.0], [-0.05, 3.0]];
    let tensor = quantize_per_tensor(w.view(), 4, true).unwrap();
    let channel = quantize_per_channel(w.view(), &[4, 4], true).unwrap();
    let e_t = reconstruction_error(w.view(), &tensor, None).unwrap();
    let e_c = reconstruction_error(w.view(), &channel, None).unwrap();
    assert!(e_t > e_c, "{e_t} vs {e_c}");

    let shared = array![[2.0, -2.0], [-0.5, 2.0], [0.25, 1.5]];
    let t = quantize_per_tensor(shared.view(), 4, true).unwrap();
    let c = quantize_per_channel(shared.view(), &[4, 4], true).unwrap();
    assert_eq!(t.values, c.values);
    assert_eq!(t.scales, c.scales);
    let zero = Array2::<f64>::zeros((3, 2));
    assert!(quantize_per_tensor(zero.view(), 4, true).unwrap().values.iter().all(|&v| v == 0));
}

#[test]
fn error_falls_with_width() {
    for seed in 0..20u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let w: Array2<f64> = gaussian_matrix(256, 4, 1.0, &mut rng);
        let errors: Vec<f64> = (2..=8)
            .map(|b| {
                let q = quantize_per_channel(w.view(), &[b; 4], false).unwrap();
                reconstruction_error(w.view(), &q, None).unwrap()
            })
            .collect();
        assert!(errors.windows(2).all(|e| e[1] < e[0]), "seed {seed}: {errors:?}");
    }
}

#[test]
fn saliency_examples() {
    let w = array![[2.0, 0.5, -1.0], [-2.0, 0.5, 1.0]];
    let s = channel_saliency(w.view(), Criterion::AbsoluteValue, None, 0).unwrap();
    assert_eq!(s, vec![2.0, 0.5, 1.0]);
    let mut scaled = w.clone();
    scaled.column_mut(1).mapv_inplace(|v| v * 10.0);
    let s2 = channel_saliency(scaled.view(), Criterion::AbsoluteValue, None, 0).unwrap();
    assert!(s2[1] > s2[0]);
    let r1 = channel_saliency(w.view(), Criterion::Random, None, 17).unwrap();
    let r2 = channel_saliency(w.view(), Criterion::Random, None, 17).unwrap();
    assert_eq!(r1, r2);
    assert!(channel_saliency(w.view(), Criterion::Gradient, None, 0).is_err());
    let stats = ChannelStats::from_table(w.view()).with_gradient(vec![1.0, 3.0, 2.0]);
    assert_eq!(channel_saliency(w.view(), Criterion::Gradient, Some(&stats), 0).unwrap(), vec![1.0, 3.0, 2.0]);
}

#[test]
fn random_criterion_ranking_pinned() {
    let w = Array2::<f64>::ones((2, 9));
    let scores = channel_saliency(w.view(), Criterion::Random, None, 2024).unwrap();
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/random_ranking_seed2024.txt");
    let text = format!("{order:?}\n");
    if std::env::var_os("FASTQUERY_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn assignment_and_permutation_examples() {
    let bits = assign_bitwidths(&[5.0, 1.0, 2.0, 9.0, 0.0, 3.0], &[4, 3, 3], 6).unwrap();
    assert_eq!(bits, vec![4, 3, 3, 4, 3, 3]);
    assert_eq!(assign_bitwidths(&[1.0; 6], &[4, 3, 3], 6).unwrap(), vec![4, 4, 3, 3, 3, 3]);
    assert_eq!(assign_bitwidths(&[0.1, 0.9, 0.5], &[4, 3, 3], 3).unwrap(), vec![3, 4, 3]);
    assert_eq!(build_permutation(&[3, 4, 3, 4, 3, 3], &[4, 3, 3]).unwrap(), vec![1, 0, 2, 3, 4, 5]);
    assert_eq!(build_permutation(&[4, 3, 3, 4, 3, 3], &[4, 3, 3]).unwrap(), (0..6).collect::<Vec<_>>());
    assert!(build_permutation(&[4, 4, 3], &[4, 3, 3]).is_err());
}

#[test]
fn table_file_roundtrip() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let w: Array2<f32> = lognormal_table(32, 9, 1.0, &mut rng);
    let q = quantize_table(w.view(), &QuantConfig::default(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("table");
    write_quantized_table(&stem, &q).unwrap();
    let back: QuantizedTable<f32> = read_quantized_table(&stem).unwrap();
    assert_eq!(back, q);
}

fn dyadic_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-64i32..64) as f64 / 8.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_preserves_projection(seed in any::<u64>(), groups in 1usize..6, d in 1usize..6) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = 3 * groups;
        let w = dyadic_matrix(10, n, &mut rng);
        let wqkv = dyadic_matrix(n, d, &mut rng);
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let bits = assign_bitwidths(&scores, &[4, 3, 3], n).unwrap();
        let perm = build_permutation(&bits, &[4, 3, 3]).unwrap();
        prop_assert!(is_permutation(&perm));
        let pb: Vec<u32> = perm.iter().map(|&c| bits[c]).collect();
        prop_assert!(pb.iter().enumerate().all(|(k, &b)| b == [4, 3, 3][k % 3]));
        let wp = permute_columns(w.view(), &perm);
        let qp = permute_rows(wqkv.view(), &perm);
        prop_assert_eq!(wp.dot(&qp), w.dot(&wqkv));
        let inv = invert_permutation(&perm);
        prop_assert_eq!(permute_columns(wp.view(), &inv), w);
    }

    #[test]
    fn dequantize_within_half_step(seed in any::<u64>(), bits in prop::collection::vec(2u32..=8, 6), pow2 in any::<bool>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let w: Array2<f64> = gaussian_matrix(40, 6, 1.0, &mut rng);
        let q = quantize_per_channel(w.view(), &bits, pow2).unwrap();
        let deq = q.dequantize(true);
        for ((t, c), &v) in w.indexed_iter() {
            let s = q.scales[c];
            let hi = ((1i32 << (bits[c] - 1)) - 1) as f64;
            if (v / s).abs() <= hi {
                prop_assert!((deq[[t, c]] - v).abs() <= s / 2.0 + 1e-12);
            }
            if pow2 {
                prop_assert_eq!(s.log2().fract(), 0.0);
            }
        }
    }

    #[test]
    fn table_pipeline_is_consistent(seed in any::<u64>(), combo in prop::sample::select(vec![vec![4u32, 3, 3], vec![5, 3, 2], vec![6, 2, 2]])) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let w: Array2<f64> = lognormal_table(20, 9, 1.0, &mut rng);
        let config = QuantConfig { bit_combo: combo, seed, ..QuantConfig::default() };
        let q = quantize_table(w.view(), &config, None).unwrap();
        q.validate().unwrap();
        prop_assert!(q.matches_layout());
        prop_assert_eq!(q.dequantize(false), permute_columns(q.dequantize(true).view(), &q.permutation));
    }
}
