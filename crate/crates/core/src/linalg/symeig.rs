//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `A = Q diag(values) Qᵀ`, eigenvalues in descending order, eigenvectors as
/// the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> SymEigen<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::DimensionMismatch { context: "symmetric eigen", expected: n, found: a.cols() });
        }
        let mut m = a.clone();
        let mut q = Matrix::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut diag = T::zero();
            for i in 0..n {
                diag = diag + m[(i, i)] * m[(i, i)];
                for j in 0..i {
                    off = off + m[(i, j)] * m[(i, j)];
                }
            }
            if off == T::zero() || off.sqrt() <= eps * (diag + off + off).sqrt() {
                return Ok(Self::sorted(m, q));
            }
            for p in 0..n {
                for r in p + 1..n {
                    let apr = m[(p, r)];
                    if apr.abs() <= eps * eps * (m[(p, p)].abs() + m[(r, r)].abs()) {
                        m[(p, r)] = T::zero();
                        m[(r, p)] = T::zero();
                        continue;
                    }
                    let theta = (m[(r, r)] - m[(p, p)]) / (T::lit(2.0) * apr);
                    let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                    let t = sgn / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkr = m[(k, r)];
                        m[(k, p)] = c * mkp - s * mkr;
                        m[(k, r)] = s * mkp + c * mkr;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mrk = m[(r, k)];
                        m[(p, k)] = c * mpk - s * mrk;
                        m[(r, k)] = s * mpk + c * mrk;
                    }
                    for k in 0..n {
                        let qkp = q[(k, p)];
                        let qkr = q[(k, r)];
                        q[(k, p)] = c * qkp - s * qkr;
                        q[(k, r)] = s * qkp + c * qkr;
                    }
                }
            }
        }
        Err(Error::NumericalBreakdown("jacobi eigenvalue iteration did not converge"))
    }

    fn sorted(m: Matrix<T>, q: Matrix<T>) -> Self {
        let n = m.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| m[(b, b)].partial_cmp(&m[(a, a)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| m[(i, i)]).collect();
        let mut vectors = Matrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, dst)] = q[(k, src)];
            }
        }
        Self { values, vectors }
    }

    /// `Q diag(f(λ)) Qᵀ`.
    pub fn apply_fn(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in 0..n {
                    s = s + self.vectors[(i, k)] * fv[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}
