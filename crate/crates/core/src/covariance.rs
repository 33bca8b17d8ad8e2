//! Population covariance of the Gaussian design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymEigen};
use crate::scalar::{norm2, Real};

/// Smallest eigenvalue accepted for a positive semidefinite matrix.
const PSD_TOL: f64 = 1e-10;

/// Covariance `Σ` with its symmetric square root.
#[derive(Debug, Clone)]
pub enum Covariance<T> {
    Identity(usize),
    Diagonal(Vec<T>),
    Dense(Box<DenseCovariance<T>>),
}

#[derive(Debug, Clone)]
pub struct DenseCovariance<T> {
    matrix: Matrix<T>,
    eig: SymEigen<T>,
    sqrt: Matrix<T>,
}

/// Serializable description of a covariance, resolved with [`CovarianceSpec::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Identity,
    /// `Σ_ij = rho^|i-j|`.
    Toeplitz { rho: f64 },
    /// Diagonal with entries `decay^i`, `i = 0..p`.
    GeometricDiagonal { decay: f64 },
    Diagonal { values: Vec<f64> },
}

impl Default for CovarianceSpec {
    fn default() -> Self {
        Self::Identity
    }
}

impl CovarianceSpec {
    pub fn build(&self, p: usize) -> Result<Covariance<f64>> {
        match self {
            Self::Identity => Ok(Covariance::Identity(p)),
            Self::Toeplitz { rho } => Covariance::toeplitz(p, *rho),
            Self::GeometricDiagonal { decay } => {
                if !(*decay > 0.0) {
                    return Err(Error::InvalidArgument(format!("decay must be positive, got {decay}")));
                }
                Covariance::diagonal((0..p).map(|i| decay.powi(i as i32)).collect())
            }
            Self::Diagonal { values } => {
                if values.len() != p {
                    return Err(Error::DimensionMismatch { context: "diagonal covariance", expected: p, found: values.len() });
                }
                Covariance::diagonal(values.clone())
            }
        }
    }
}

impl<T: Real> Covariance<T> {
    pub fn identity(p: usize) -> Self {
        Self::Identity(p)
    }

    pub fn diagonal(d: Vec<T>) -> Result<Self> {
        if let Some(v) = d.iter().find(|v| !(**v >= T::zero())) {
            return Err(Error::InvalidArgument(format!("covariance diagonal entries must be nonnegative, got {v}")));
        }
        Ok(Self::Diagonal(d))
    }

    /// Dense symmetric PSD matrix; asymmetry or eigenvalues below `-1e-10`
    /// are rejected.
    pub fn dense(matrix: Matrix<T>) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::DimensionMismatch { context: "covariance", expected: matrix.rows(), found: matrix.cols() });
        }
        let scale = matrix.as_slice().iter().fold(T::one(), |m, v| m.max(v.abs()));
        if !matrix.is_symmetric(T::lit(1e-12) * scale) {
            return Err(Error::InvalidArgument("covariance must be symmetric".into()));
        }
        let eig = SymEigen::new(&matrix)?;
        let min = eig.values.last().copied().unwrap_or_else(T::zero);
        if min < -T::lit(PSD_TOL) {
            return Err(Error::InvalidArgument(format!("covariance is not positive semidefinite (min eigenvalue {min})")));
        }
        let sqrt = eig.apply_fn(|l| l.max(T::zero()).sqrt());
        Ok(Self::Dense(Box::new(DenseCovariance { matrix, eig, sqrt })))
    }

    /// `Σ_ij = rho^|i-j|` with `|rho| < 1`.
    pub fn toeplitz(p: usize, rho: T) -> Result<Self> {
        if !(rho.abs() < T::one()) {
            return Err(Error::InvalidArgument(format!("toeplitz correlation must satisfy |rho| < 1, got {rho}")));
        }
        let mut m = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                m[(i, j)] = rho.powi(i.abs_diff(j) as i32);
            }
        }
        Self::dense(m)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Identity(p) => *p,
            Self::Diagonal(d) => d.len(),
            Self::Dense(d) => d.matrix.rows(),
        }
    }

    pub fn diag(&self, i: usize) -> T {
        match self {
            Self::Identity(_) => T::one(),
            Self::Diagonal(d) => d[i],
            Self::Dense(d) => d.matrix[(i, i)],
        }
    }

    pub fn max_diag(&self) -> T {
        (0..self.dim()).fold(T::zero(), |m, i| m.max(self.diag(i)))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity(_))
    }

    /// `Σ^{1/2} v`.
    pub fn sqrt_mul(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim(), "covariance dimension");
        match self {
            Self::Identity(_) => v.to_vec(),
            Self::Diagonal(d) => d.iter().zip(v).map(|(&di, &vi)| di.sqrt() * vi).collect(),
            Self::Dense(d) => d.sqrt.matvec(v),
        }
    }

    /// `‖Σ^{1/2} v‖₂`, the `L₂(μ)` norm of `⟨·, v⟩` under a centred design with covariance `Σ`.
    pub fn sqrt_norm(&self, v: &[T]) -> T {
        match self {
            Self::Identity(_) => norm2(v),
            _ => norm2(&self.sqrt_mul(v)),
        }
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        match self {
            Self::Identity(p) => vec![T::one(); *p],
            Self::Diagonal(d) => {
                let mut e = d.clone();
                e.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
                e
            }
            Self::Dense(d) => d.eig.values.clone(),
        }
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        match self {
            Self::Identity(p) => Matrix::identity(*p),
            Self::Diagonal(d) => Matrix::from_diag(d),
            Self::Dense(d) => d.matrix.clone(),
        }
    }

    /// `Σ^{-1/2}`; fails for singular `Σ`.
    pub fn inv_sqrt(&self) -> Result<Matrix<T>> {
        let tiny = T::lit(PSD_TOL);
        match self {
            Self::Identity(p) => Ok(Matrix::identity(*p)),
            Self::Diagonal(d) => {
                if d.iter().any(|&v| v <= tiny) {
                    return Err(Error::InvalidArgument("covariance is singular".into()));
                }
                Ok(Matrix::from_diag(&d.iter().map(|v| v.sqrt().recip()).collect::<Vec<_>>()))
            }
            Self::Dense(d) => {
                if d.eig.values.last().is_some_and(|&v| v <= tiny) {
                    return Err(Error::InvalidArgument("covariance is singular".into()));
                }
                Ok(d.eig.apply_fn(|l| l.sqrt().recip()))
            }
        }
    }

    /// `Σ^{-1/2} v`.
    pub fn inv_sqrt_mul(&self, v: &[T]) -> Result<Vec<T>> {
        match self {
            Self::Identity(_) => Ok(v.to_vec()),
            _ => Ok(self.inv_sqrt()?.matvec(v)),
        }
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().last().copied().unwrap_or_else(T::zero)
    }
}
