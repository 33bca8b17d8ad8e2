#![allow(dead_code)]

use minnorm::Matrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gauss_vec(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gauss_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, gauss_vec(rng, rows * cols)).unwrap()
}

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Row-major `rows × cols` view of a vector as an nalgebra matrix.
pub fn reshape(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

pub fn singular_values(v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut s: Vec<f64> = reshape(v, rows, cols).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn group_norm(v: &[f64], groups: &[Vec<usize>]) -> f64 {
    groups.iter().map(|g| g.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt()).sum()
}

pub fn group_dual(v: &[f64], groups: &[Vec<usize>]) -> f64 {
    groups.iter().map(|g| g.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Minimum ℓ1 norm of `Xh = y` by enumerating basic solutions: the linear
/// program attains its optimum at a vertex, which is supported on `n`
/// columns.
pub fn basis_pursuit_by_enumeration(x: &Matrix<f64>, y: &[f64]) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let xa = to_na(x);
    let ya = nalgebra::DVector::from_column_slice(y);
    let mut best = (f64::INFINITY, vec![0.0; p]);
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sub = xa.select_columns(&idx);
        if let Some(sol) = sub.clone().lu().solve(&ya) {
            if (&sub * &sol - &ya).norm() < 1e-9 * (1.0 + ya.norm()) {
                let val: f64 = sol.iter().map(|v| v.abs()).sum();
                if val < best.0 {
                    let mut h = vec![0.0; p];
                    for (k, &j) in idx.iter().enumerate() {
                        h[j] = sol[k];
                    }
                    best = (val, h);
                }
            }
        }
        // next n-subset in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < p - n + i {
                break;
            }
        }
        idx[i] += 1;
        for k in i + 1..n {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

/// `ℓ2(v)` with `v ~ N(0, s² I_p)` has mean `s √2 Γ((p+1)/2)/Γ(p/2)`.
pub fn chi_mean(p: usize, scale: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    scale * 2f64.sqrt() * (ln_gamma((p as f64 + 1.0) / 2.0) - ln_gamma(p as f64 / 2.0)).exp()
}
