//! Seeded random streams and Gaussian designs.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::covariance::Covariance;
use crate::linalg::Matrix;

/// Stream `index` of the ChaCha20 generator keyed by `seed`. Distinct
/// indices give independent streams, so work can be split across threads
/// without changing any draw.
pub fn stream(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A 64-bit seed derived from `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).next_u64()
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn rademacher_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// `n` rows `Xᵢ = Σ^{1/2} zᵢ` with `zᵢ ~ N(0, I)`; returns `(X, Z)`.
pub fn gaussian_design<R: Rng + ?Sized>(cov: &Covariance<f64>, n: usize, rng: &mut R) -> (Matrix<f64>, Matrix<f64>) {
    let p = cov.dim();
    let z = normal_vec(rng, n * p);
    let z = Matrix::from_vec(n, p, z).expect("length n*p");
    if cov.is_identity() {
        return (z.clone(), z);
    }
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        x.row_mut(i).copy_from_slice(&cov.sqrt_mul(z.row(i)));
    }
    (x, z)
}

/// Pairwise (tree) sum; the result depends only on the order of `v`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(v) / v.len() as f64
    }
}
