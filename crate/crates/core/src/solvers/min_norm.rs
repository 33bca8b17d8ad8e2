//! Minimum-norm interpolation by ADMM.
//!
//! The splitting alternates a Euclidean projection onto `{h : Xh = Y}` with
//! the proximal map of the norm:
//!
//! ```text
//! x ← Proj(z − u),  z ← prox_{‖·‖/ρ}(x + u),  u ← u + x − z
//! ```
//!
//! At a fixed point `ρu = Xᵀw` for a dual certificate `w`.

use super::{EstimatorResult, ProblemInstance, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix, Qr};
use crate::norms::NormFamily;
use crate::scalar::{axpy, dot, norm2, sub, Real};

const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e4;
const BALANCE_EVERY: usize = 10;
const POLISH_EVERY: usize = 50;

/// Projection onto `{h : Xh = y}` through a Cholesky factor of `XXᵀ`.
#[derive(Debug, Clone)]
pub struct AffineProjector<'a, T> {
    x: &'a Matrix<T>,
    chol: Cholesky<T>,
}

impl<'a, T: Real> AffineProjector<'a, T> {
    /// Fails with [`Error::RankDeficient`] when the rows of `x` are
    /// numerically dependent.
    pub fn new(x: &'a Matrix<T>) -> Result<Self> {
        let (n, p) = x.shape();
        if n > p {
            return Err(Error::Underparameterized { n, p });
        }
        let chol = Cholesky::factor(&x.row_gram(), rank_tol::<T>())?;
        Ok(Self { x, chol })
    }

    /// `(XXᵀ)⁻¹ r` with one step of iterative refinement.
    pub fn gram_solve(&self, r: &[T]) -> Vec<T> {
        let mut c = self.chol.solve(r);
        let back = self.x.matvec(&self.x.matvec_t(&c));
        let resid: Vec<T> = r.iter().zip(&back).map(|(&a, &b)| a - b).collect();
        let dc = self.chol.solve(&resid);
        axpy(T::one(), &dc, &mut c);
        c
    }

    /// Euclidean projection of `w` onto `{h : Xh = y}`.
    pub fn project(&self, w: &[T], y: &[T]) -> Vec<T> {
        let r: Vec<T> = self.x.matvec(w).iter().zip(y).map(|(&a, &b)| a - b).collect();
        let c = self.chol.solve(&r);
        let mut out = w.to_vec();
        axpy(-T::one(), &self.x.matvec_t(&c), &mut out);
        out
    }

    /// `Xᵀ(XXᵀ)⁻¹ y`, the minimum ℓ2-norm solution.
    pub fn least_norm(&self, y: &[T]) -> Vec<T> {
        self.x.matvec_t(&self.gram_solve(y))
    }

    /// Least-squares `w` with `Xᵀw ≈ v`.
    pub fn multiplier(&self, v: &[T]) -> Vec<T> {
        self.gram_solve(&self.x.matvec(v))
    }
}

pub(crate) fn rank_tol<T: Real>() -> T {
    T::epsilon() * T::lit(1e3)
}

fn residual_norm<T: Real>(x: &Matrix<T>, h: &[T], y: &[T]) -> T {
    norm2(&sub(&x.matvec(h), y))
}

/// `argmin ‖h‖` subject to `Xh = Y`.
pub fn solve_min_norm<T: Real>(
    inst: &ProblemInstance<T>,
    norm: &NormFamily,
    cfg: &SolverConfig<T>,
) -> Result<EstimatorResult<T>> {
    cfg.validate()?;
    norm.check_dim(inst.p())?;
    let proj = AffineProjector::new(&inst.design)?;
    let mut res = admm(inst, norm, cfg, &proj, cfg.admm_rho)?;
    if cfg.check_uniqueness {
        res.unique = Some(match norm {
            NormFamily::L2 => true,
            _ => {
                let alt = admm(inst, norm, cfg, &proj, cfg.admm_rho * T::lit(4.0))?;
                same_solution(norm, &res.estimate, &alt.estimate)?
            }
        });
    }
    Ok(res)
}

fn admm<T: Real>(
    inst: &ProblemInstance<T>,
    norm: &NormFamily,
    cfg: &SolverConfig<T>,
    proj: &AffineProjector<'_, T>,
    rho0: T,
) -> Result<EstimatorResult<T>> {
    let x_mat = &inst.design;
    let y = &inst.responses;
    let p = inst.p();
    let y_norm = norm2(y);
    if y_norm == T::zero() {
        return Ok(EstimatorResult {
            estimate: vec![T::zero(); p],
            objective: T::zero(),
            constraint_residual: T::zero(),
            iterations: 0,
            converged: true,
            dual: Some(vec![T::zero(); inst.n()]),
            unique: None,
        });
    }
    let feas_bound = cfg.feasibility_tol * (T::one() + y_norm);
    let (rho_min, rho_max) = (T::lit(RHO_MIN), T::lit(RHO_MAX));
    let two = T::lit(2.0);
    let ten = T::lit(10.0);

    let mut rho = rho0;
    let mut z = proj.least_norm(y);
    let mut u = vec![T::zero(); p];
    let mut iterations = 0;
    let mut converged = false;
    let mut polished = None;

    for k in 1..=cfg.max_iters {
        iterations = k;
        let x = proj.project(&sub(&z, &u), y);
        let mut v = x.clone();
        axpy(T::one(), &u, &mut v);
        let z_new = norm.prox(&v, rho.recip())?;
        let r = sub(&x, &z_new);
        axpy(T::one(), &r, &mut u);
        let dz = norm2(&sub(&z_new, &z));
        z = z_new;

        let r_norm = norm2(&r);
        let s_norm = rho * dz;
        let scale = T::one() + norm2(&z);
        let stalled = dz <= cfg.tol_primal * scale && r_norm <= cfg.tol_primal * scale;
        if stalled && residual_norm(x_mat, &z, y) <= feas_bound {
            converged = true;
        }
        if cfg.polish && matches!(norm, NormFamily::L1) && (converged || k % POLISH_EVERY == 0) {
            let w0 = proj.multiplier(&u.iter().map(|&ui| rho * ui).collect::<Vec<_>>());
            if let Some(found) = polish_l1(x_mat, y, &z, &w0, feas_bound) {
                polished = Some(found);
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
        if k % BALANCE_EVERY == 0 {
            if r_norm > ten * s_norm && rho * two <= rho_max {
                rho = rho * two;
                u.iter_mut().for_each(|ui| *ui = *ui / two);
            } else if s_norm > ten * r_norm && rho / two >= rho_min {
                rho = rho / two;
                u.iter_mut().for_each(|ui| *ui = *ui * two);
            }
        }
    }

    let (estimate, dual) = match polished {
        Some((h, w)) => (h, w),
        None => {
            let w = proj.multiplier(&u.iter().map(|&ui| rho * ui).collect::<Vec<_>>());
            // z carries the structure; fall back to the feasible x-iterate
            // when z is not within the feasibility tolerance
            let h = if residual_norm(x_mat, &z, y) <= feas_bound { z } else { proj.project(&z, y) };
            (h, w)
        }
    };
    let constraint_residual = residual_norm(x_mat, &estimate, y);
    Ok(EstimatorResult {
        objective: norm.eval(&estimate)?,
        estimate,
        constraint_residual,
        iterations,
        converged: converged && constraint_residual <= feas_bound,
        dual: Some(dual),
        unique: None,
    })
}

/// Exact solve on the support of the current iterate, accepted only with a
/// dual certificate: `X_Sᵀw = sign(h_S)` and `‖Xᵀw‖∞ ≤ 1`.
fn polish_l1<T: Real>(x: &Matrix<T>, y: &[T], z: &[T], w0: &[T], feas_bound: T) -> Option<(Vec<T>, Vec<T>)> {
    let support: Vec<usize> = (0..z.len()).filter(|&j| z[j] != T::zero()).collect();
    if support.is_empty() || support.len() > x.rows() {
        return None;
    }
    let xs = x.select_columns(&support);
    let qr = Qr::factor(&xs);
    if !qr.full_rank(rank_tol::<T>()) {
        return None;
    }
    let hs = qr.solve_least_squares(y);
    if residual_norm(&xs, &hs, y) > feas_bound {
        return None;
    }
    if hs.iter().zip(&support).any(|(&h, &j)| h.sign0() != z[j].sign0()) {
        return None;
    }
    let sigma: Vec<T> = hs.iter().map(|h| h.sign0()).collect();
    let c = qr.solve_normal(&sub(&sigma, &xs.matvec_t(w0)));
    let mut w = w0.to_vec();
    axpy(T::one(), &xs.matvec(&c), &mut w);
    let slack = T::one() + T::lit(1e-9);
    if x.matvec_t(&w).iter().any(|v| v.abs() > slack) {
        return None;
    }
    let mut h = vec![T::zero(); z.len()];
    for (&j, &v) in support.iter().zip(&hs) {
        h[j] = v;
    }
    Some((h, w))
}

/// Support pattern plus closeness of two solutions.
fn same_solution<T: Real>(norm: &NormFamily, a: &[T], b: &[T]) -> Result<bool> {
    let tol = T::lit(1e-6);
    let close = norm2(&sub(a, b)) <= tol * (T::one() + norm2(a));
    let pattern = |h: &[T]| -> Result<Vec<bool>> {
        Ok(match norm {
            NormFamily::L1 => {
                let m = h.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                h.iter().map(|v| v.abs() > tol * m).collect()
            }
            NormFamily::GroupLasso { groups } => {
                let gn: Vec<T> = (0..groups.len()).map(|g| groups.group_norm(h, g)).collect();
                let m = gn.iter().fold(T::zero(), |m, &v| m.max(v));
                gn.iter().map(|&v| v > tol * m).collect()
            }
            NormFamily::Nuclear { shape } => {
                let s = crate::linalg::singular_values(&shape.reshape(h))?;
                let m = s.first().copied().unwrap_or_else(T::zero);
                s.iter().map(|&v| v > tol * m).collect()
            }
            NormFamily::L2 => Vec::new(),
        })
    };
    Ok(close && pattern(a)? == pattern(b)?)
}

/// `Xᵀ(XXᵀ)⁻¹Y`.
pub fn solve_min_l2_closed_form<T: Real>(inst: &ProblemInstance<T>) -> Result<EstimatorResult<T>> {
    let proj = AffineProjector::new(&inst.design)?;
    let c = proj.gram_solve(&inst.responses);
    let estimate = inst.design.matvec_t(&c);
    let objective = norm2(&estimate);
    let dual = if objective > T::zero() {
        c.iter().map(|&v| v / objective).collect()
    } else {
        vec![T::zero(); c.len()]
    };
    debug_assert!(objective == T::zero() || (dot(&dual, &inst.responses) - objective).abs() <= T::lit(1e-6) * objective);
    Ok(EstimatorResult {
        constraint_residual: residual_norm(&inst.design, &estimate, &inst.responses),
        estimate,
        objective,
        iterations: 1,
        converged: true,
        dual: Some(dual),
        unique: Some(true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(rows: &[Vec<f64>], y: &[f64]) -> ProblemInstance<f64> {
        ProblemInstance::new(Matrix::from_rows(rows).unwrap(), y.to_vec()).unwrap()
    }

    #[test]
    fn l2_pseudoinverse_examples() {
        let cfg = SolverConfig::default();
        let r = solve_min_norm(&inst(&[vec![1.0, 0.0]], &[2.0]), &NormFamily::L2, &cfg).unwrap();
        assert!(r.converged);
        assert!((r.estimate[0] - 2.0).abs() < 1e-8 && r.estimate[1].abs() < 1e-8);
        let c = solve_min_l2_closed_form(&inst(&[vec![1.0, 1.0]], &[2.0])).unwrap();
        assert!((c.estimate[0] - 1.0).abs() < 1e-14 && (c.estimate[1] - 1.0).abs() < 1e-14);
        let c = solve_min_l2_closed_form(&inst(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, 4.0])).unwrap();
        assert_eq!(c.estimate, vec![3.0, 4.0]);
    }

    #[test]
    fn basis_pursuit_one_constraint() {
        let r = solve_min_norm(&inst(&[vec![1.0, 2.0]], &[2.0]), &NormFamily::L1, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.estimate[0].abs() < 1e-12 && (r.estimate[1] - 1.0).abs() < 1e-12, "{:?}", r.estimate);
        assert!((r.objective - 1.0).abs() < 1e-12);
        let w = r.dual.unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dependent_rows_are_rejected() {
        let i = inst(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]], &[1.0, 2.0]);
        assert!(matches!(solve_min_norm(&i, &NormFamily::L1, &SolverConfig::default()), Err(Error::RankDeficient { .. })));
        assert!(matches!(solve_min_l2_closed_form(&i), Err(Error::RankDeficient { .. })));
        let tall = inst(&[vec![1.0], vec![2.0]], &[1.0, 2.0]);
        assert!(matches!(solve_min_l2_closed_form(&tall), Err(Error::Underparameterized { n: 2, p: 1 })));
    }

    #[test]
    fn zero_responses_give_zero() {
        let r = solve_min_norm(&inst(&[vec![1.0, 2.0]], &[0.0]), &NormFamily::nuclear(1, 2).unwrap(), &SolverConfig::default())
            .unwrap();
        assert_eq!(r.estimate, vec![0.0, 0.0]);
        assert!(r.converged);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let cfg = SolverConfig { max_iters: 1, polish: false, ..SolverConfig::default() };
        let i = inst(&[vec![1.0, 2.0, -1.0, 0.5], vec![0.3, -1.0, 2.0, 1.0]], &[1.0, -2.0]);
        let r = solve_min_norm(&i, &NormFamily::L1, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
    }
}
