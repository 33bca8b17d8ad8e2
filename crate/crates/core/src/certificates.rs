//! Interpolated-noise certificates.
//!
//! For linearly independent rows `X₁..Xₙ`, the minimum-norm interpolator `ν̂`
//! of the noise satisfies strong duality
//!
//! ```text
//! ‖ν̂‖ = sup { ⟨v, ξ⟩ : ‖Σᵢ vᵢ Xᵢ‖* ≤ 1 }
//! ```
//!
//! and the bracket
//!
//! ```text
//! ‖ξ‖₂² / ‖Xᵀξ‖*  ≤  ‖ν̂‖  ≤  ‖ξ‖₂ / inf_{‖v‖₂=1} ‖Xᵀv‖*.
//! ```

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::Covariance;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::norms::NormFamily;
use crate::rng::stream;
use crate::scalar::{axpy, dot, norm2, sub, Real};
use crate::solvers::{rank_tol, solve_min_norm, AffineProjector, ProblemInstance, SolverConfig};

const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e4;

/// Default number of random starts for [`sphere_infimum`].
pub const DEFAULT_RESTARTS: usize = 32;
/// Default iterations per start for [`sphere_infimum`].
pub const DEFAULT_SPHERE_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereInfimum<T> {
    /// Best value found; an upper estimate of the infimum.
    pub value: T,
    pub restarts: usize,
    pub iterations: usize,
    pub method: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualCertificate<T> {
    /// `‖ν̂‖` from the primal solver.
    pub primal_value: T,
    /// Value of a feasible point of the dual program.
    pub dual_value: T,
    /// `‖ξ‖₂² / ‖Xᵀξ‖*`.
    pub lower_bracket: T,
    /// `‖ξ‖₂ / sphere_inf`; an upper bound up to the accuracy of `sphere_inf`.
    pub upper_bracket: T,
    pub sphere_inf: SphereInfimum<T>,
    pub interpolated_noise: Vec<T>,
    pub dual_vector: Vec<T>,
    pub primal_converged: bool,
    pub dual_converged: bool,
}

impl<T: Real> DualCertificate<T> {
    /// `|primal − dual| / max(primal, 1e−12)`.
    pub fn relative_gap(&self) -> T {
        (self.primal_value - self.dual_value).abs() / self.primal_value.max(T::lit(1e-12))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    pub restarts: usize,
    pub sphere_iters: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { restarts: DEFAULT_RESTARTS, sphere_iters: DEFAULT_SPHERE_ITERS, seed: 0 }
    }
}

/// Primal, dual and bracket values for the interpolated noise of `inst`.
pub fn certify<T: Real>(
    inst: &ProblemInstance<T>,
    norm: &NormFamily,
    cfg: &SolverConfig<T>,
    opts: &CertifyOptions,
) -> Result<DualCertificate<T>> {
    let xi = inst.noise.as_ref().ok_or(Error::MissingInput("noise"))?;
    norm.check_dim(inst.p())?;
    let (n, p) = (inst.n(), inst.p());
    let x = &inst.design;
    let xi_norm = norm2(xi);
    if xi_norm == T::zero() {
        // still reject designs the certificate is undefined for
        AffineProjector::new(x)?;
        return Ok(DualCertificate {
            primal_value: T::zero(),
            dual_value: T::zero(),
            lower_bracket: T::zero(),
            upper_bracket: T::zero(),
            sphere_inf: SphereInfimum { value: T::zero(), restarts: 0, iterations: 0, method: "skipped (zero noise)" },
            interpolated_noise: vec![T::zero(); p],
            dual_vector: vec![T::zero(); n],
            primal_converged: true,
            dual_converged: true,
        });
    }
    let noise_inst = ProblemInstance::noise_only(x.clone(), xi.clone())?;
    let primal = solve_min_norm(&noise_inst, norm, cfg)?;
    let dual = solve_dual(x, xi, norm, cfg)?;
    let lower_bracket = xi_norm * xi_norm / norm.dual_eval(&x.matvec_t(xi))?;
    let sphere_inf = sphere_infimum(x, norm, opts.restarts, opts.sphere_iters, opts.seed)?;
    Ok(DualCertificate {
        primal_value: primal.objective,
        dual_value: dual.value,
        lower_bracket,
        upper_bracket: xi_norm / sphere_inf.value,
        sphere_inf,
        interpolated_noise: primal.estimate,
        dual_vector: dual.v,
        primal_converged: primal.converged,
        dual_converged: dual.converged,
    })
}

#[derive(Debug, Clone)]
pub struct DualSolution<T> {
    /// Feasible point, `‖Xᵀv‖* ≤ 1`.
    pub v: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// `sup ⟨v, ξ⟩` subject to `‖Xᵀv‖* ≤ 1`, by ADMM on the splitting `Xᵀv = t`,
/// `t ∈ B*`:
///
/// ```text
/// XXᵀv = X(t − u) + ξ/ρ,  t ← Proj_{B*}(Xᵀv + u),  u ← u + Xᵀv − t
/// ```
///
/// The returned `v` is rescaled by `max(1, ‖Xᵀv‖*)`, so its value is a
/// certified lower bound on the optimum.
pub fn solve_dual<T: Real>(x: &Matrix<T>, xi: &[T], norm: &NormFamily, cfg: &SolverConfig<T>) -> Result<DualSolution<T>> {
    cfg.validate()?;
    norm.check_dim(x.cols())?;
    if xi.len() != x.rows() {
        return Err(Error::DimensionMismatch { context: "noise", expected: x.rows(), found: xi.len() });
    }
    let proj = AffineProjector::new(x)?;
    let p = x.cols();
    let (rho_min, rho_max) = (T::lit(RHO_MIN), T::lit(RHO_MAX));
    let (two, ten) = (T::lit(2.0), T::lit(10.0));
    let mut rho = cfg.admm_rho;
    let mut t = vec![T::zero(); p];
    let mut u = vec![T::zero(); p];
    let mut v = vec![T::zero(); x.rows()];
    let mut best = (T::neg_infinity(), v.clone());
    let mut last_value = T::neg_infinity();
    let mut converged = false;
    let mut iterations = 0;
    let polish_l1 = cfg.polish && matches!(norm, NormFamily::L1);

    for k in 1..=cfg.max_iters {
        iterations = k;
        let mut rhs = x.matvec(&sub(&t, &u));
        axpy(rho.recip(), xi, &mut rhs);
        v = proj.gram_solve(&rhs);
        let xtv = x.matvec_t(&v);
        let mut w = xtv.clone();
        axpy(T::one(), &u, &mut w);
        let t_new = norm.project_dual_ball(&w, T::one())?;
        let r = sub(&xtv, &t_new);
        axpy(T::one(), &r, &mut u);
        let dt = sub(&t_new, &t);
        t = t_new;

        let r_norm = norm2(&r);
        let s_norm = rho * norm2(&x.matvec(&dt));
        let scale = T::one() + norm2(&t);
        if k % 10 == 0 || k == cfg.max_iters {
            let feasible = feasible_value(norm, &xtv, &v, xi)?;
            if feasible.0 > best.0 {
                best = feasible;
            }
            if polish_l1 && k % 50 == 0 {
                if let Some((vertex, true)) = l1_dual_vertex(x, xi, &xtv) {
                    best = feasible_value(norm, &x.matvec_t(&vertex), &vertex, xi)?;
                    converged = true;
                    break;
                }
            }
            let value_change = (best.0 - last_value).abs();
            last_value = best.0;
            if r_norm <= cfg.tol_primal * scale
                && norm2(&dt) <= cfg.tol_primal * scale
                && value_change <= cfg.tol_dual * best.0.abs().max(T::one())
            {
                converged = true;
                break;
            }
            if r_norm > ten * s_norm && rho * two <= rho_max {
                rho = rho * two;
                u.iter_mut().for_each(|a| *a = *a / two);
            } else if s_norm > ten * r_norm && rho / two >= rho_min {
                rho = rho / two;
                u.iter_mut().for_each(|a| *a = *a * two);
            }
        }
    }
    let last = feasible_value(norm, &x.matvec_t(&v), &v, xi)?;
    if last.0 > best.0 {
        best = last;
    }
    if polish_l1 && !converged {
        if let Some((vertex, optimal)) = l1_dual_vertex(x, xi, &x.matvec_t(&best.1)) {
            let cand = feasible_value(norm, &x.matvec_t(&vertex), &vertex, xi)?;
            if cand.0 >= best.0 || optimal {
                best = cand;
                converged = optimal;
            }
        }
    }
    Ok(DualSolution { value: best.0, v: best.1, iterations, converged })
}

/// Vertex of the ℓ1 dual polytope on the `n` largest entries of `|Xᵀv|`.
/// The flag reports whether the matching primal point `X_A h = ξ` has the
/// sign pattern of the vertex, i.e. whether the vertex is optimal.
fn l1_dual_vertex<T: Real>(x: &Matrix<T>, xi: &[T], xtv: &[T]) -> Option<(Vec<T>, bool)> {
    let n = x.rows();
    let mut order: Vec<usize> = (0..xtv.len()).collect();
    order.sort_by(|&a, &b| xtv[b].abs().partial_cmp(&xtv[a].abs()).unwrap_or(std::cmp::Ordering::Equal));
    let active = &order[..n];
    let signs: Vec<T> = active.iter().map(|&j| xtv[j].sign0()).collect();
    if signs.iter().any(|s| *s == T::zero()) {
        return None;
    }
    let xa = x.select_columns(active);
    let qr = Qr::factor(&xa.transpose());
    if !qr.full_rank(rank_tol::<T>()) {
        return None;
    }
    let v = qr.solve_least_squares(&signs);
    let slack = T::one() + T::lit(1e-9);
    if x.matvec_t(&v).iter().any(|a| a.abs() > slack) {
        return None;
    }
    let h = Qr::factor(&xa).solve_least_squares(xi);
    let optimal = h.iter().zip(&signs).all(|(&hi, &s)| hi * s >= T::zero());
    Some((v, optimal))
}

fn feasible_value<T: Real>(norm: &NormFamily, xtv: &[T], v: &[T], xi: &[T]) -> Result<(T, Vec<T>)> {
    let s = norm.dual_eval(xtv)?.max(T::one());
    let vs: Vec<T> = v.iter().map(|&a| a / s).collect();
    Ok((dot(&vs, xi), vs))
}

/// Upper estimate of `inf_{‖v‖₂ = 1} ‖Σᵢ vᵢXᵢ‖*` by Riemannian subgradient
/// descent with steps `0.5/√t` from `restarts` random starting points.
///
/// Start `k` draws from the ChaCha20 stream `(seed, k)`, so the result does
/// not depend on evaluation order.
pub fn sphere_infimum<T: Real>(
    x: &Matrix<T>,
    norm: &NormFamily,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<SphereInfimum<T>> {
    norm.check_dim(x.cols())?;
    if restarts == 0 {
        return Err(Error::InvalidArgument("sphere_infimum needs at least one restart".into()));
    }
    let n = x.rows();
    let objective = |v: &[T]| -> Result<(T, Vec<T>)> {
        let a = x.matvec_t(v);
        let nv = norm.norming_vector(&a)?;
        Ok((dot(&a, &nv), x.matvec(&nv)))
    };
    let mut best = T::infinity();
    for k in 0..restarts {
        let mut rng = stream(seed, k as u64);
        let mut v: Vec<T> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z)
            })
            .collect();
        normalize(&mut v);
        for t in 1..=iters.max(1) {
            let (phi, g) = objective(&v)?;
            best = best.min(phi);
            if n == 1 {
                break;
            }
            let gv = dot(&g, &v);
            let mut tangent = g;
            axpy(-gv, &v, &mut tangent);
            let tn = norm2(&tangent);
            if tn == T::zero() {
                break;
            }
            let step = T::lit(0.5) / T::from_usize_lossy(t).sqrt();
            axpy(-step / tn, &tangent, &mut v);
            normalize(&mut v);
        }
        best = best.min(objective(&v)?.0);
    }
    Ok(SphereInfimum { value: best, restarts, iterations: iters, method: "riemannian subgradient, best of restarts (upper estimate)" })
}

fn normalize<T: Real>(v: &mut [T]) {
    let n = norm2(v);
    if n > T::zero() {
        v.iter_mut().for_each(|a| *a = *a / n);
    } else if let Some(first) = v.first_mut() {
        *first = T::one();
    }
}

/// Closed-form high-probability lower bound on the sphere infimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixBound {
    pub value: f64,
    /// Whether the dimension condition of the underlying lemma holds.
    pub valid: bool,
    /// Smallest `p` (or `p₁p₂`) the condition admits at this `n`.
    pub required_dim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixParams {
    /// Exponent `α ∈ (0, 1)` of the ℓ1 bound.
    pub alpha: f64,
}

impl Default for AppendixParams {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// `sup_{‖b‖₁=1} ‖Σ^{-1/2} b‖₁`, the largest column ℓ1 norm of `Σ^{-1/2}`.
pub fn inv_sqrt_l1_operator_norm(cov: &Covariance<f64>) -> Result<f64> {
    if cov.is_identity() {
        return Ok(1.0);
    }
    let m = cov.inv_sqrt()?;
    Ok((0..m.cols()).map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
}

/// Lower bounds on `inf_{‖v‖₂=1} ‖Σᵢ vᵢXᵢ‖*` for Gaussian designs:
///
/// * ℓ1: `√((α/2) log(p/n)) / sup_{‖b‖₁=1}‖Σ^{-1/2}b‖₁`, valid when
///   `p ≥ n·max[(log(72n/α)√(2π))^{1/(1−α)}, e^{1/α}]`;
/// * group Lasso (isotropic): `√(min|G|)/(2√2)`, valid when
///   `p ≥ 32n log(6√2(2√n + √W))`, `W = max|G|/min|G|`;
/// * nuclear (isotropic): `√max(p₁,p₂)/2`, valid when
///   `48n log(32n(p₁+p₂)) ≤ p₁p₂`.
pub fn appendix_lower_bound(
    n: usize,
    p: usize,
    norm: &NormFamily,
    cov: &Covariance<f64>,
    params: &AppendixParams,
) -> Result<AppendixBound> {
    norm.check_dim(p)?;
    if cov.dim() != p {
        return Err(Error::DimensionMismatch { context: "covariance", expected: p, found: cov.dim() });
    }
    let nf = n as f64;
    let pf = p as f64;
    match norm {
        NormFamily::L1 => {
            let a = params.alpha;
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {a}")));
            }
            let required = nf * ((72.0 * nf / a).ln() * (2.0 * std::f64::consts::PI).sqrt()).powf(1.0 / (1.0 - a)).max((1.0 / a).exp());
            let value = if pf > nf { ((a / 2.0) * (pf / nf).ln()).sqrt() / inv_sqrt_l1_operator_norm(cov)? } else { 0.0 };
            Ok(AppendixBound { value, valid: pf >= required, required_dim: required })
        }
        NormFamily::GroupLasso { groups } => {
            let w = groups.max_size() as f64 / groups.min_size() as f64;
            let required = 32.0 * nf * (6.0 * 2f64.sqrt() * (2.0 * nf.sqrt() + w.sqrt())).ln();
            let value = (groups.min_size() as f64).sqrt() / (2.0 * 2f64.sqrt());
            Ok(AppendixBound { value, valid: pf >= required && cov.is_identity(), required_dim: required })
        }
        NormFamily::Nuclear { shape } => {
            let required = 48.0 * nf * (32.0 * nf * (shape.rows + shape.cols) as f64).ln();
            let value = (shape.max_side() as f64).sqrt() / 2.0;
            Ok(AppendixBound { value, valid: pf >= required && cov.is_identity(), required_dim: required })
        }
        NormFamily::L2 => Err(Error::Unsupported { family: "l2", what: "no closed-form sphere-infimum bound" }),
    }
}
