//! Cholesky and Householder QR factorizations.

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
    /// Diagonal shift that was added before the factorization succeeded.
    pub jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`, rejecting it as rank deficient when a pivot falls below
    /// `rank_tol * max_i a_ii`.
    ///
    /// With `rank_tol == 0` a breakdown is retried once with
    /// `1e-12 * trace / n` added to the diagonal.
    pub fn factor(a: &Matrix<T>, rank_tol: T) -> Result<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "cholesky needs a square matrix");
        let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)]));
        let thresh = rank_tol * max_diag;
        match Self::try_factor(a, T::zero(), thresh) {
            Ok(c) => Ok(c),
            Err(_) if thresh == T::zero() => {
                let jitter = T::lit(1e-12) * a.trace() / T::from_usize_lossy(n.max(1));
                Self::try_factor(a, jitter, thresh).map_err(|rank_hint| Error::RankDeficient { rank_hint })
            }
            Err(rank_hint) => Err(Error::RankDeficient { rank_hint }),
        }
    }

    fn try_factor(a: &Matrix<T>, jitter: T, thresh: T) -> std::result::Result<Self, usize> {
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let d = a[(j, j)] + jitter - dot(&l.row(j)[..j], &l.row(j)[..j]);
            if !(d > thresh) {
                return Err(j);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l, jitter })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `L z` for a standard vector `z`; maps white noise to `N(0, A)`.
    pub fn mul_lower(&self, z: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n).map(|i| dot(&self.l.row(i)[..=i], &z[..=i])).collect()
    }
}

/// Householder QR of a tall matrix (rows ≥ cols).
#[derive(Debug, Clone)]
pub struct Qr<T> {
    /// Householder vectors below the diagonal, `R` on and above it.
    qr: Matrix<T>,
    rdiag: Vec<T>,
}

impl<T: Real> Qr<T> {
    pub fn factor(a: &Matrix<T>) -> Self {
        let (m, n) = a.shape();
        assert!(m >= n, "qr expects rows >= cols");
        let mut qr = a.clone();
        let mut rdiag = vec![T::zero(); n];
        for k in 0..n {
            let mut nrm = T::zero();
            for i in k..m {
                nrm = nrm.hypot(qr[(i, k)]);
            }
            if nrm != T::zero() {
                if qr[(k, k)] < T::zero() {
                    nrm = -nrm;
                }
                for i in k..m {
                    qr[(i, k)] = qr[(i, k)] / nrm;
                }
                qr[(k, k)] = qr[(k, k)] + T::one();
                for j in k + 1..n {
                    let mut s = T::zero();
                    for i in k..m {
                        s = s + qr[(i, k)] * qr[(i, j)];
                    }
                    s = -s / qr[(k, k)];
                    for i in k..m {
                        qr[(i, j)] = qr[(i, j)] + s * qr[(i, k)];
                    }
                }
            }
            rdiag[k] = -nrm;
        }
        Self { qr, rdiag }
    }

    /// True when every `|R_kk| > tol * max_k |R_kk|`.
    pub fn full_rank(&self, tol: T) -> bool {
        let max = self.rdiag.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        max > T::zero() && self.rdiag.iter().all(|v| v.abs() > tol * max)
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn solve_least_squares(&self, b: &[T]) -> Vec<T> {
        let (m, n) = self.qr.shape();
        assert_eq!(b.len(), m);
        let mut y = b.to_vec();
        for k in 0..n {
            let mut s = T::zero();
            for i in k..m {
                s = s + self.qr[(i, k)] * y[i];
            }
            if self.qr[(k, k)] != T::zero() {
                s = -s / self.qr[(k, k)];
                for i in k..m {
                    y[i] = y[i] + s * self.qr[(i, k)];
                }
            }
        }
        let mut x = y[..n].to_vec();
        self.back_substitute(&mut x);
        x
    }

    fn back_substitute(&self, x: &mut [T]) {
        let n = self.rdiag.len();
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s = s - self.qr[(k, j)] * x[j];
            }
            x[k] = s / self.rdiag[k];
        }
    }

    /// Solves `(AᵀA) c = r` using `AᵀA = RᵀR`.
    pub fn solve_normal(&self, r: &[T]) -> Vec<T> {
        let n = self.rdiag.len();
        assert_eq!(r.len(), n);
        let mut z = r.to_vec();
        // Rᵀ z = r
        for k in 0..n {
            let mut s = z[k];
            for j in 0..k {
                s = s - self.qr[(j, k)] * z[j];
            }
            z[k] = s / self.rdiag[k];
        }
        self.back_substitute(&mut z);
        z
    }
}
