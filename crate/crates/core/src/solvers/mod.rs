//! Minimum-norm interpolation and regularized least squares.

mod min_norm;
mod rerm;

use serde::{Deserialize, Serialize};

pub use min_norm::{solve_min_l2_closed_form, solve_min_norm, AffineProjector};
pub(crate) use min_norm::rank_tol;
pub use rerm::{l1_lambda_max, solve_rerm, solve_rerm_from, solve_rerm_path};

use crate::covariance::Covariance;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{norm2, Real};

/// Design, responses and, when known, the ground truth of `Y = X h* + ξ`.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T> {
    pub design: Matrix<T>,
    pub responses: Vec<T>,
    pub truth: Option<Vec<T>>,
    pub noise: Option<Vec<T>>,
    pub covariance: Option<Covariance<T>>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(design: Matrix<T>, responses: Vec<T>) -> Result<Self> {
        if responses.len() != design.rows() {
            return Err(Error::DimensionMismatch { context: "responses", expected: design.rows(), found: responses.len() });
        }
        Ok(Self { design, responses, truth: None, noise: None, covariance: None })
    }

    /// Instance whose responses are the noise itself (`h* = 0`), the input to
    /// the interpolated-noise problem.
    pub fn noise_only(design: Matrix<T>, noise: Vec<T>) -> Result<Self> {
        let mut inst = Self::new(design, noise.clone())?;
        inst.noise = Some(noise);
        Ok(inst)
    }

    pub fn with_truth(mut self, truth: Vec<T>) -> Result<Self> {
        if truth.len() != self.p() {
            return Err(Error::DimensionMismatch { context: "truth", expected: self.p(), found: truth.len() });
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_noise(mut self, noise: Vec<T>) -> Result<Self> {
        if noise.len() != self.n() {
            return Err(Error::DimensionMismatch { context: "noise", expected: self.n(), found: noise.len() });
        }
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn with_covariance(mut self, cov: Covariance<T>) -> Result<Self> {
        if cov.dim() != self.p() {
            return Err(Error::DimensionMismatch { context: "covariance", expected: self.p(), found: cov.dim() });
        }
        self.covariance = Some(cov);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.design.rows()
    }

    pub fn p(&self) -> usize {
        self.design.cols()
    }

    /// `‖Y − X h* − ξ‖∞`, when both truth and noise are known.
    pub fn model_residual(&self) -> Option<T> {
        let (h, xi) = (self.truth.as_ref()?, self.noise.as_ref()?);
        let fit = self.design.matvec(h);
        Some(
            self.responses
                .iter()
                .zip(fit.iter().zip(xi))
                .fold(T::zero(), |m, (&y, (&f, &e))| m.max((y - f - e).abs())),
        )
    }

    /// Checks the model identity to `tol` (relative to the response scale).
    pub fn validate(&self, tol: T) -> Result<()> {
        if let Some(r) = self.model_residual() {
            let scale = self.responses.iter().fold(T::one(), |m, v| m.max(v.abs()));
            if r > tol * scale {
                return Err(Error::InvalidArgument(format!("responses differ from X h* + ξ by {r}")));
            }
        }
        Ok(())
    }
}

/// `‖Σ^{1/2}(estimate − h*)‖₂`.
pub fn prediction_error<T: Real>(inst: &ProblemInstance<T>, estimate: &[T]) -> Result<T> {
    let truth = inst.truth.as_ref().ok_or(Error::MissingInput("truth"))?;
    let cov = inst.covariance.as_ref().ok_or(Error::MissingInput("covariance"))?;
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch { context: "estimate", expected: truth.len(), found: estimate.len() });
    }
    let d: Vec<T> = estimate.iter().zip(truth).map(|(&a, &b)| a - b).collect();
    Ok(cov.sqrt_norm(&d))
}

/// `‖estimate − h*‖₂`.
pub fn l2_error<T: Real>(inst: &ProblemInstance<T>, estimate: &[T]) -> Result<T> {
    let truth = inst.truth.as_ref().ok_or(Error::MissingInput("truth"))?;
    let d: Vec<T> = estimate.iter().zip(truth).map(|(&a, &b)| a - b).collect();
    Ok(norm2(&d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig<T> {
    pub max_iters: usize,
    pub tol_primal: T,
    pub tol_dual: T,
    pub admm_rho: T,
    pub feasibility_tol: T,
    /// Re-solve with a perturbed penalty and compare supports.
    pub check_uniqueness: bool,
    /// Exact active-set refinement for the ℓ1 family.
    pub polish: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        // tolerances cannot go below what the scalar type resolves
        let floor = T::epsilon() * T::lit(100.0);
        Self {
            max_iters: 20_000,
            tol_primal: T::lit(1e-10).max(floor),
            tol_dual: T::lit(1e-10).max(floor),
            admm_rho: T::one(),
            feasibility_tol: T::lit(1e-9).max(floor),
            check_uniqueness: false,
            polish: true,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
            ("admm_rho", self.admm_rho),
            ("feasibility_tol", self.feasibility_tol),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult<T> {
    pub estimate: Vec<T>,
    /// `‖ĥ‖` for interpolators, the penalized empirical risk for RERM.
    pub objective: T,
    /// `‖Xĥ − Y‖₂`.
    pub constraint_residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// For interpolators, `w` with `‖Xᵀw‖* ≤ 1` (up to solver accuracy) and
    /// `⟨w, Y⟩ ≈ ‖ĥ‖`.
    pub dual: Option<Vec<T>>,
    /// Outcome of the uniqueness heuristic, `None` when it was not run.
    pub unique: Option<bool>,
}
