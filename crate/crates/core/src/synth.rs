//! Seeded synthetic tables, projections, frequencies and channel statistics.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use crate::quantizer::ChannelStats;
use crate::scalar::Real;

/// Token-major `m x n` table whose channel `i` is Gaussian with standard
/// deviation `exp(sigma * z_i)`, `z_i` standard normal.
pub fn lognormal_table<T: Real, R: Rng + ?Sized>(m: usize, n: usize, sigma: f64, rng: &mut R) -> Array2<T> {
    let dist = LogNormal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let scales: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    let mut w = Array2::<T>::zeros((m, n));
    for t in 0..m {
        for (c, s) in scales.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            w[[t, c]] = T::lit(z * s);
        }
    }
    w
}

/// `rows x cols` matrix of independent `N(0, std^2)` entries.
pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z * std)
    })
}

/// Expected Zipf counts `total * (t+1)^-s / H`, rounded, for tokens in rank
/// order.
pub fn zipf_frequencies<T: Real>(m: usize, exponent: f64, total: f64) -> Vec<T> {
    let weights: Vec<f64> = (1..=m).map(|r| (r as f64).powf(-exponent)).collect();
    let h: f64 = weights.iter().sum();
    weights.iter().map(|w| T::lit((total * w / h).round())).collect()
}

/// Token counts from `draws` samples of a Zipf law over `m` tokens, with the
/// rank-to-token assignment shuffled.
pub fn sample_zipf_counts<T: Real, R: Rng + ?Sized>(m: usize, exponent: f64, draws: usize, rng: &mut R) -> Vec<T> {
    let mut counts = vec![0u64; m];
    if m == 0 {
        return Vec::new();
    }
    let zipf = Zipf::new(m as f64, exponent).expect("valid Zipf parameters");
    let mut order: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for _ in 0..draws {
        let rank = zipf.sample(rng) as usize - 1;
        counts[order[rank.min(m - 1)]] += 1;
    }
    counts.into_iter().map(|c| T::lit(c as f64)).collect()
}

/// Gradient and Hessian-diagonal scores correlated with each channel's mean
/// absolute value through multiplicative log-normal noise.
pub fn synthetic_channel_stats<T: Real, R: Rng + ?Sized>(w: ArrayView2<'_, T>, noise: f64, rng: &mut R) -> ChannelStats<T> {
    let base = ChannelStats::from_table(w);
    let dist = LogNormal::new(0.0, noise).expect("noise is finite and non-negative");
    let gradient = base.mean_abs.iter().map(|a| *a * T::lit(dist.sample(rng))).collect();
    let hessian = base.mean_abs.iter().map(|a| *a * *a * T::lit(dist.sample(rng))).collect();
    base.with_gradient(gradient).with_hessian(hessian)
}

/// Embedding table, QKV projection and token frequencies for fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneInstance<T> {
    pub w: Array2<T>,
    pub wqkv: Array2<T>,
    pub freqs: Vec<T>,
}

/// `m x n` table, `n x d` projection with entries `N(0, 1/n)`, and Zipf
/// frequencies rescaled to mean 1.
pub fn finetune_instance<T: Real, R: Rng + ?Sized>(m: usize, n: usize, d: usize, rng: &mut R) -> FinetuneInstance<T> {
    let w = lognormal_table(m, n, 0.5, rng);
    let wqkv = gaussian_matrix(n, d, 1.0 / (n as f64).sqrt(), rng);
    let raw: Vec<f64> = sample_zipf_counts::<f64, _>(m, 1.1, 20 * m, rng);
    let mean = raw.iter().sum::<f64>() / m.max(1) as f64;
    let freqs = raw.iter().map(|f| T::lit(f / mean)).collect();
    FinetuneInstance { w, wqkv, freqs }
}
