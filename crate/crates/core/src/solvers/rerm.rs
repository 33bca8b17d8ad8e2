//! Regularized least squares `(1/n)‖Y − Xh‖₂² + 2λ‖h‖` by FISTA.
//!
//! Backtracking on the Lipschitz estimate, and a restart whenever an
//! accelerated step would increase the objective, in which case a plain
//! proximal gradient step is taken instead. The objective is therefore
//! non-increasing along the returned iterates.

use super::{EstimatorResult, ProblemInstance, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::norms::NormFamily;
use crate::scalar::{axpy, dot, norm2, Real};

const POLISH_EVERY: usize = 50;
const POWER_ITERS: usize = 50;
const KKT_EVERY: usize = 10;

/// Smallest `λ` at which the ℓ1-penalized estimator is zero: `‖XᵀY‖∞ / n`.
pub fn l1_lambda_max<T: Real>(inst: &ProblemInstance<T>) -> T {
    let g = inst.design.matvec_t(&inst.responses);
    g.iter().fold(T::zero(), |m, v| m.max(v.abs())) / T::from_usize_lossy(inst.n())
}

pub fn solve_rerm<T: Real>(
    inst: &ProblemInstance<T>,
    norm: &NormFamily,
    lambda: T,
    cfg: &SolverConfig<T>,
) -> Result<EstimatorResult<T>> {
    solve_rerm_from(inst, norm, lambda, cfg, &vec![T::zero(); inst.p()])
}

/// Solves along `lambdas` in the given order, warm-starting each solve from
/// the previous solution.
pub fn solve_rerm_path<T: Real>(
    inst: &ProblemInstance<T>,
    norm: &NormFamily,
    lambdas: &[T],
    cfg: &SolverConfig<T>,
) -> Result<Vec<EstimatorResult<T>>> {
    let mut start = vec![T::zero(); inst.p()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let r = solve_rerm_from(inst, norm, lambda, cfg, &start)?;
        start.clone_from(&r.estimate);
        out.push(r);
    }
    Ok(out)
}

struct Smooth<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [T],
    inv_n: T,
}

impl<T: Real> Smooth<'_, T> {
    fn residual(&self, h: &[T]) -> Vec<T> {
        self.x.matvec(h).iter().zip(self.y).map(|(&a, &b)| a - b).collect()
    }

    fn value_from_residual(&self, r: &[T]) -> T {
        dot(r, r) * self.inv_n
    }

    fn grad_from_residual(&self, r: &[T]) -> Vec<T> {
        let two_n = self.inv_n * T::lit(2.0);
        self.x.matvec_t(r).into_iter().map(|v| v * two_n).collect()
    }
}

pub fn solve_rerm_from<T: Real>(
    inst: &ProblemInstance<T>,
    norm: &NormFamily,
    lambda: T,
    cfg: &SolverConfig<T>,
    start: &[T],
) -> Result<EstimatorResult<T>> {
    cfg.validate()?;
    norm.check_dim(inst.p())?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative and finite, got {lambda}")));
    }
    if start.len() != inst.p() {
        return Err(Error::DimensionMismatch { context: "warm start", expected: inst.p(), found: start.len() });
    }
    let (n, p) = (inst.n(), inst.p());
    let f = Smooth { x: &inst.design, y: &inst.responses, inv_n: T::from_usize_lossy(n).recip() };
    let two_lambda = lambda * T::lit(2.0);
    let objective = |h: &[T], r: &[T]| -> Result<T> { Ok(f.value_from_residual(r) + two_lambda * norm.eval(h)?) };

    let mut lip = (T::lit(2.0) * f.inv_n * top_singular_value_sq(&inst.design)).max(T::min_positive_value());
    // KKT tolerance on the gradient mapping: relative to 2λ so that tiny
    // penalties are still resolved, relative to ‖∇f(0)‖ when λ = 0
    let g_scale = norm2(&f.grad_from_residual(&f.residual(&vec![T::zero(); p])));
    // floor: rounding level of a computed gradient
    let sigma_max = (lip * T::from_usize_lossy(n) / T::lit(2.0)).sqrt();
    let floor = T::epsilon() * T::lit(1e3) * T::lit(2.0) * f.inv_n * sigma_max * norm2(&inst.responses);
    let kkt_tol = if lambda > T::zero() { cfg.tol_dual * two_lambda } else { cfg.tol_primal * g_scale }.max(floor);
    let rounding = T::epsilon() * T::lit(4.0);
    let mut h = start.to_vec();
    let mut r_h = f.residual(&h);
    let mut obj = objective(&h, &r_h)?;
    let mut y = h.clone();
    let mut t = T::one();
    let mut iterations = 0;
    let mut converged = false;
    let polish = cfg.polish && matches!(norm, NormFamily::L1) && lambda > T::zero();

    for k in 1..=cfg.max_iters {
        iterations = k;
        let (mut h_new, mut r_new) = prox_step(&f, norm, two_lambda, &y, &mut lip)?;
        let mut obj_new = objective(&h_new, &r_new)?;
        let mut stalled = false;
        // restart when the step opposes the momentum direction
        let opposing = dot(
            &y.iter().zip(&h_new).map(|(&a, &b)| a - b).collect::<Vec<_>>(),
            &h_new.iter().zip(&h).map(|(&a, &b)| a - b).collect::<Vec<_>>(),
        ) > T::zero();
        if obj_new > obj + rounding * obj.abs() || opposing {
            t = T::one();
            if obj_new > obj + rounding * obj.abs() {
                // plain proximal step from the last iterate
                (h_new, r_new) = prox_step(&f, norm, two_lambda, &h, &mut lip)?;
                obj_new = objective(&h_new, &r_new)?;
                if obj_new > obj + rounding * obj.abs() {
                    stalled = true;
                    h_new.clone_from(&h);
                    r_new.clone_from(&r_h);
                    obj_new = obj;
                }
            }
        }
        let t_new = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        let beta = (t - T::one()) / t_new;
        let dh: Vec<T> = h_new.iter().zip(&h).map(|(&a, &b)| a - b).collect();
        y = h_new.clone();
        axpy(beta, &dh, &mut y);
        t = t_new;
        h = h_new;
        r_h = r_new;
        obj = obj_new;

        if stalled || k % KKT_EVERY == 0 {
            let g = gradient_mapping(&f, norm, two_lambda, &h, lip)?;
            if g <= kkt_tol {
                converged = true;
                break;
            }
            if stalled {
                converged = g <= kkt_tol * T::lit(10.0);
                break;
            }
        }
        if polish && k % POLISH_EVERY == 0 {
            if let Some(hp) = polish_l1(&inst.design, &inst.responses, &h, lambda) {
                let rp = f.residual(&hp);
                let op = objective(&hp, &rp)?;
                if op <= obj + T::lit(1e-12) * obj.abs().max(T::one()) {
                    h = hp;
                    r_h = rp;
                    obj = op;
                    converged = true;
                    break;
                }
            }
        }
    }

    let unique = if lambda == T::zero() && n < p { Some(false) } else { None };
    Ok(EstimatorResult {
        constraint_residual: norm2(&r_h),
        estimate: h,
        objective: obj,
        iterations,
        converged,
        dual: None,
        unique,
    })
}

/// One backtracking proximal gradient step from `y`.
///
/// For the quadratic loss the sufficient decrease condition
/// `f(h) ≤ f(y) + ⟨∇f(y), d⟩ + (L/2)‖d‖²` is exactly `‖Xd‖²/n ≤ (L/2)‖d‖²`,
/// which is evaluated without cancellation.
fn prox_step<T: Real>(
    f: &Smooth<'_, T>,
    norm: &NormFamily,
    two_lambda: T,
    y: &[T],
    lip: &mut T,
) -> Result<(Vec<T>, Vec<T>)> {
    let r_y = f.residual(y);
    let g = f.grad_from_residual(&r_y);
    for _ in 0..60 {
        let step = lip.recip();
        let mut v = y.to_vec();
        axpy(-step, &g, &mut v);
        let h = norm.prox(&v, two_lambda * step)?;
        let d: Vec<T> = h.iter().zip(y).map(|(&a, &b)| a - b).collect();
        let xd = f.x.matvec(&d);
        if dot(&xd, &xd) * f.inv_n <= *lip / T::lit(2.0) * dot(&d, &d) {
            let mut r_h = r_y;
            axpy(T::one(), &xd, &mut r_h);
            return Ok((h, r_h));
        }
        *lip = *lip * T::lit(2.0);
    }
    Err(Error::NumericalBreakdown("backtracking line search failed"))
}

/// `L‖h − prox(h − ∇f(h)/L)‖₂`, zero exactly at a minimizer.
fn gradient_mapping<T: Real>(f: &Smooth<'_, T>, norm: &NormFamily, two_lambda: T, h: &[T], lip: T) -> Result<T> {
    let g = f.grad_from_residual(&f.residual(h));
    let mut v = h.to_vec();
    axpy(-lip.recip(), &g, &mut v);
    let hp = norm.prox(&v, two_lambda / lip)?;
    Ok(norm2(&hp.iter().zip(h).map(|(&a, &b)| a - b).collect::<Vec<_>>()) * lip)
}

/// Largest eigenvalue of `XᵀX` by power iteration on `XXᵀ`.
fn top_singular_value_sq<T: Real>(x: &Matrix<T>) -> T {
    let n = x.rows();
    if n == 0 {
        return T::zero();
    }
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.01) * T::from_usize_lossy(i % 7)).collect();
    let mut est = T::zero();
    for _ in 0..POWER_ITERS {
        let nv = norm2(&v);
        if nv == T::zero() {
            return T::zero();
        }
        v.iter_mut().for_each(|a| *a = *a / nv);
        let w = x.matvec(&x.matvec_t(&v));
        est = dot(&v, &w);
        v = w;
    }
    est
}

/// Solves the stationarity system on the current support,
/// `X_SᵀX_S h_S = X_SᵀY − nλ sign(h_S)`, and accepts the result only if the
/// signs agree and `|X_jᵀ(Y − Xh)|/n ≤ λ` off the support.
fn polish_l1<T: Real>(x: &Matrix<T>, y: &[T], h: &[T], lambda: T) -> Option<Vec<T>> {
    let support: Vec<usize> = (0..h.len()).filter(|&j| h[j] != T::zero()).collect();
    if support.is_empty() || support.len() > x.rows() {
        return None;
    }
    let xs = x.select_columns(&support);
    let qr = Qr::factor(&xs);
    if !qr.full_rank(T::epsilon() * T::lit(1e3)) {
        return None;
    }
    let n = T::from_usize_lossy(x.rows());
    let sigma: Vec<T> = support.iter().map(|&j| h[j].sign0()).collect();
    let mut rhs = xs.matvec_t(y);
    axpy(-n * lambda, &sigma, &mut rhs);
    let hs = qr.solve_normal(&rhs);
    if hs.iter().zip(&sigma).any(|(&v, &s)| v.sign0() != s) {
        return None;
    }
    let mut out = vec![T::zero(); h.len()];
    for (&j, &v) in support.iter().zip(&hs) {
        out[j] = v;
    }
    let resid: Vec<T> = y.iter().zip(x.matvec(&out)).map(|(&a, b)| a - b).collect();
    let corr = x.matvec_t(&resid);
    let bound = n * lambda * (T::one() + T::lit(1e-9));
    if corr.iter().any(|c| c.abs() > bound) {
        return None;
    }
    Some(out)
}
