//! Complexity parameters of the localized analysis for Gaussian designs:
//! the fixed point `r*(γ)`, small-ball constants, subdifferential gaps,
//! restricted eigenvalues, the theorem right-hand sides and spectral tails.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::inv_sqrt_l1_operator_norm;
use crate::covariance::Covariance;
use crate::error::{Error, Result};
use crate::norms::{project_l1_ball, NormFamily, SubgradientSpec};
use crate::rng::{mean, normal_vec, rademacher_vec, stream};
use crate::scalar::{dot, norm2};

/// `κ = 1/√3`, the small-ball level used for Gaussian designs.
pub const KAPPA: f64 = 0.577_350_269_189_625_8;
/// `δ = (1 − κ²)/3 = 2/9`.
pub const DELTA: f64 = 2.0 / 9.0;

/// `γ = κδ/32 = 1/(144√3)`.
pub fn default_gamma() -> f64 {
    KAPPA * DELTA / 32.0
}

/// Small-ball probability guaranteed for Gaussian designs at level `κ`.
pub fn gaussian_small_ball_delta(kappa: f64) -> f64 {
    (1.0 - kappa * kappa) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RStarOptions {
    /// Design draws.
    pub mc_samples: usize,
    /// Rademacher vectors per design draw.
    pub rademacher_draws: usize,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    /// Relative width at which bisection stops.
    pub rel_width: f64,
    pub seed: u64,
}

impl Default for RStarOptions {
    fn default() -> Self {
        Self { mc_samples: 256, rademacher_draws: 8, grid_points: 64, grid_min: 1e-6, grid_max: 1e2, rel_width: 1e-3, seed: 0 }
    }
}

impl RStarOptions {
    fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 || self.rademacher_draws == 0 {
            return Err(Error::InvalidArgument("mc_samples and rademacher_draws must be at least 1".into()));
        }
        if self.grid_points < 2 || !(self.grid_min > 0.0 && self.grid_min < self.grid_max && self.grid_max.is_finite()) {
            return Err(Error::InvalidArgument("r grid needs at least two points and 0 < grid_min < grid_max".into()));
        }
        if !(self.rel_width > 0.0) {
            return Err(Error::InvalidArgument("rel_width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridBoundary {
    /// The condition already holds at the smallest grid radius.
    Min,
    /// The condition fails on the whole grid.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RStarEstimate {
    pub value: f64,
    /// Set when the estimate sits at an end of the grid.
    pub boundary: Option<GridBoundary>,
    /// Number of `(X, ε)` draws behind the estimate.
    pub samples: usize,
}

/// Monte Carlo estimate of
///
/// ```text
/// r*(γ) = inf { r > 0 : E sup_{h ∈ B, ‖Σ^{1/2}h‖₂ ≤ r} Σᵢ εᵢ⟨Xᵢ, h⟩ ≤ γ n r }.
/// ```
///
/// With `G = Σᵢ εᵢXᵢ` the inner supremum is replaced by
/// `min(‖G‖*, r‖Σ^{-1/2}G‖₂)`, the smaller of the two single-constraint
/// suprema. This over-estimates the supremum, so the returned radius errs
/// upward. Since the surrogate divided by `r` is non-increasing in `r`, the
/// smallest admissible grid point brackets the fixed point, which is then
/// refined by bisection.
pub fn estimate_r_star(norm: &NormFamily, cov: &Covariance<f64>, n: usize, gamma: f64, opts: &RStarOptions) -> Result<RStarEstimate> {
    opts.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let p = cov.dim();
    norm.check_dim(p)?;
    let draws: Vec<Vec<(f64, f64)>> = (0..opts.mc_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(opts.seed, k as u64);
            let z = normal_vec(&mut rng, n * p);
            (0..opts.rademacher_draws)
                .map(|_| {
                    let eps = rademacher_vec(&mut rng, n);
                    // w = Zᵀε, G = Σ^{1/2} w and Σ^{-1/2} G = w
                    let mut w = vec![0.0; p];
                    for (i, &e) in eps.iter().enumerate() {
                        for (wj, &zj) in w.iter_mut().zip(&z[i * p..(i + 1) * p]) {
                            *wj += e * zj;
                        }
                    }
                    let g = cov.sqrt_mul(&w);
                    Ok((norm.dual_eval(&g)?, norm2(&w)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = draws.into_iter().flatten().collect();
    let target = gamma * n as f64;
    let holds = |r: f64| {
        let v: Vec<f64> = pairs.iter().map(|&(a, b)| (a / r).min(b)).collect();
        mean(&v) <= target
    };
    let samples = pairs.len();
    let (lo, hi) = (opts.grid_min.ln(), opts.grid_max.ln());
    let step = (hi - lo) / (opts.grid_points - 1) as f64;
    let grid = |i: usize| (lo + step * i as f64).exp();
    let Some(first) = (0..opts.grid_points).find(|&i| holds(grid(i))) else {
        return Ok(RStarEstimate { value: opts.grid_max, boundary: Some(GridBoundary::Max), samples });
    };
    if first == 0 {
        return Ok(RStarEstimate { value: opts.grid_min, boundary: Some(GridBoundary::Min), samples });
    }
    let (mut a, mut b) = (grid(first - 1), grid(first));
    while (b - a) > opts.rel_width * b {
        let m = (a * b).sqrt();
        if holds(m) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(RStarEstimate { value: b, boundary: None, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormRStar {
    pub value: f64,
    /// Whether the conditions under which the bound was derived hold.
    pub valid: bool,
}

/// Explicit upper bounds on `r*(γ)`:
///
/// * ℓ1: `√(48 maxᵢΣᵢᵢ)/γ · √(log(p/n)/n)`, derived for `p/n ≥ 384e/γ²`;
/// * group Lasso: `√5/γ · √(max|G|/n)` (isotropic design);
/// * nuclear: `2/γ · √(max(p₁,p₂)/n)` (isotropic design).
pub fn closed_form_r_star(norm: &NormFamily, cov: &Covariance<f64>, n: usize, gamma: f64) -> Result<ClosedFormRStar> {
    if !(gamma > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("closed-form r* needs gamma > 0 and n >= 1".into()));
    }
    let p = cov.dim();
    norm.check_dim(p)?;
    let nf = n as f64;
    Ok(match norm {
        NormFamily::L1 => {
            let ratio = p as f64 / nf;
            ClosedFormRStar {
                value: (48.0 * cov.max_diag()).sqrt() / gamma * (ratio.ln().max(0.0) / nf).sqrt(),
                valid: ratio >= 384.0 * std::f64::consts::E / (gamma * gamma),
            }
        }
        NormFamily::GroupLasso { groups } => ClosedFormRStar {
            value: 5f64.sqrt() / gamma * (groups.max_size() as f64 / nf).sqrt(),
            valid: cov.is_identity(),
        },
        NormFamily::Nuclear { shape } => ClosedFormRStar {
            value: 2.0 / gamma * (shape.max_side() as f64 / nf).sqrt(),
            valid: cov.is_identity(),
        },
        NormFamily::L2 => return Err(Error::Unsupported { family: "l2", what: "no closed-form bound on r*" }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBallReport {
    pub kappa: f64,
    pub delta: f64,
    pub empirical_fraction: f64,
    pub samples: usize,
    /// `empirical_fraction ≥ delta`.
    pub passed: bool,
}

/// Small-ball constants `(κ, δ) = (1/√3, 2/9)` with an empirical check.
pub fn estimate_small_ball(cov: &Covariance<f64>, mc_samples: usize, seed: u64) -> Result<SmallBallReport> {
    check_small_ball(cov, KAPPA, mc_samples, seed)
}

/// Fraction of draws with `|⟨X, h⟩| ≥ κ‖Σ^{1/2}h‖₂`, a fresh direction `h`
/// and design row `X` per draw, compared against `δ = (1 − κ²)/3`.
pub fn check_small_ball(cov: &Covariance<f64>, kappa: f64, mc_samples: usize, seed: u64) -> Result<SmallBallReport> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidArgument(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("mc_samples must be at least 1".into()));
    }
    let p = cov.dim();
    let mut rng = stream(seed, 0);
    let mut hits = 0usize;
    for _ in 0..mc_samples {
        let h = normal_vec(&mut rng, p);
        let z = normal_vec(&mut rng, p);
        let sh = cov.sqrt_mul(&h);
        // ⟨X, h⟩ = ⟨Σ^{1/2}z, h⟩ = ⟨z, Σ^{1/2}h⟩
        if dot(&z, &sh).abs() >= kappa * norm2(&sh) {
            hits += 1;
        }
    }
    let delta = gaussian_small_ball_delta(kappa);
    let empirical_fraction = hits as f64 / mc_samples as f64;
    Ok(SmallBallReport { kappa, delta, empirical_fraction, samples: mc_samples, passed: empirical_fraction >= delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapOptions {
    pub probes: usize,
    pub seed: u64,
    /// Restricted eigenvalue constant; `√λ_min(Σ)` when absent, which is
    /// always admissible.
    pub psi: Option<f64>,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { probes: 1000, seed: 0, psi: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaGapReport {
    /// Smallest (lower gap) or largest (upper gap) probed `⟨g, h⟩`; `None`
    /// when no probe satisfied the localization constraints.
    pub probe_extreme: Option<f64>,
    pub accepted: usize,
    /// Worst-case bound from the subgradient construction, when one exists
    /// for the family.
    pub analytic: Option<f64>,
    /// `min(probe, analytic)` for the lower gap, `analytic` (else the probe
    /// maximum) for the upper gap.
    pub candidate: f64,
}

fn psi_or_default(opts: &GapOptions, cov: &Covariance<f64>) -> Result<f64> {
    match opts.psi {
        Some(v) if v > 0.0 => Ok(v),
        Some(v) => Err(Error::InvalidArgument(format!("psi must be positive, got {v}"))),
        None => Ok(cov.min_eigenvalue().max(0.0).sqrt()),
    }
}

/// Analytic lower bound on `Δ(γ, h*)` over `{‖h‖ = 1, ‖Σ^{1/2}h‖₂ ≤ r}`.
fn lower_gap_bound(spec: &SubgradientSpec<f64>, cov: &Covariance<f64>, r: f64, psi: f64) -> Option<f64> {
    let s = (spec.sparsity() as f64).sqrt();
    let root_min = cov.min_eigenvalue().max(0.0).sqrt();
    // ‖h‖₂ ≤ r/√λ_min on the whole set
    let l2 = (root_min > 0.0).then(|| r / root_min);
    match spec.norm() {
        NormFamily::L1 => {
            let cone = 1.0 - 2.0 * s * r / psi;
            let paper = if spec.sparsity() < spec.base_point().len() { cone.min(0.5) } else { cone };
            Some(l2.map_or(paper, |l| paper.max(1.0 - 2.0 * s * l)))
        }
        NormFamily::GroupLasso { .. } => l2.map(|l| 1.0 - 2.0 * s * l),
        NormFamily::Nuclear { .. } => l2.map(|l| 1.0 - 4.0 * s * l),
        NormFamily::L2 => None,
    }
}

/// Analytic upper bound on `Δ̄(γ, h*)` over `{‖h‖ ≤ 1, ‖Σ^{1/2}h‖₂ = r}`.
fn upper_gap_bound(spec: &SubgradientSpec<f64>, cov: &Covariance<f64>, r: f64, psi: f64) -> Option<f64> {
    let s = (spec.sparsity() as f64).sqrt();
    let root_min = cov.min_eigenvalue().max(0.0).sqrt();
    match spec.norm() {
        NormFamily::L1 => Some(s * r / psi),
        NormFamily::GroupLasso { .. } | NormFamily::Nuclear { .. } => (root_min > 0.0).then(|| s * r / root_min),
        NormFamily::L2 => None,
    }
}

/// Random probe `t·a + (1 − t)·b` mixing the structured direction `a` with
/// a Gaussian direction `b`.
fn probe_direction(a: &[f64], rng: &mut rand_chacha::ChaCha20Rng) -> Vec<f64> {
    use rand::Rng;
    let t: f64 = rng.gen();
    let b = normal_vec(rng, a.len());
    let bn = norm2(&b).max(f64::MIN_POSITIVE);
    let an = norm2(a).max(f64::MIN_POSITIVE);
    a.iter().zip(&b).map(|(&x, &y)| t * x / an + (1.0 - t) * y / bn).collect()
}

fn check_gap_inputs(spec: &SubgradientSpec<f64>, cov: &Covariance<f64>, r_star: f64) -> Result<()> {
    if !(r_star > 0.0) || !r_star.is_finite() {
        return Err(Error::InvalidArgument(format!("r_star must be positive and finite, got {r_star}")));
    }
    if cov.dim() != spec.base_point().len() {
        return Err(Error::DimensionMismatch { context: "covariance", expected: spec.base_point().len(), found: cov.dim() });
    }
    Ok(())
}

/// Certified candidate `ζ` for `Δ(γ, h*) ≥ ζ`: the minimum of the analytic
/// bound and `⟨g_lower(h), h⟩` over random probes `h` with `‖h‖ = 1` and
/// `‖Σ^{1/2}h‖₂ ≤ r*`.
pub fn delta_gap_lower(spec: &SubgradientSpec<f64>, cov: &Covariance<f64>, r_star: f64, opts: &GapOptions) -> Result<DeltaGapReport> {
    check_gap_inputs(spec, cov, r_star)?;
    let norm = spec.norm();
    let psi = psi_or_default(opts, cov)?;
    let p = spec.base_point().len();
    // structured part points against the subgradient on the support
    let a: Vec<f64> = spec.upper(&vec![0.0; p])?.iter().map(|v| -v).collect();
    let mut rng = stream(opts.seed, 0);
    let mut extreme: Option<f64> = None;
    let mut accepted = 0;
    for _ in 0..opts.probes {
        let d = probe_direction(&a, &mut rng);
        let nd = norm.eval(&d)?;
        if nd == 0.0 {
            continue;
        }
        let h: Vec<f64> = d.iter().map(|v| v / nd).collect();
        if cov.sqrt_norm(&h) > r_star {
            continue;
        }
        accepted += 1;
        let v = dot(&spec.lower(&h)?, &h);
        extreme = Some(extreme.map_or(v, |m| m.min(v)));
    }
    let analytic = lower_gap_bound(spec, cov, r_star, psi);
    let candidate = match (extreme, analytic) {
        (Some(e), Some(a)) => e.min(a),
        (Some(e), None) => e,
        (None, Some(a)) => a,
        (None, None) => f64::INFINITY,
    };
    Ok(DeltaGapReport { probe_extreme: extreme, accepted, analytic, candidate })
}

/// Candidate `ζ̄` for `Δ̄(γ, h*) ≤ ζ̄`: the analytic bound, after checking
/// that `⟨g_upper(h), h⟩` stays below it on random probes `h` with `‖h‖ ≤ 1`
/// and `‖Σ^{1/2}h‖₂ = r*`.
pub fn delta_gap_upper(spec: &SubgradientSpec<f64>, cov: &Covariance<f64>, r_star: f64, opts: &GapOptions) -> Result<DeltaGapReport> {
    check_gap_inputs(spec, cov, r_star)?;
    let norm = spec.norm();
    let psi = psi_or_default(opts, cov)?;
    let p = spec.base_point().len();
    let a = spec.upper(&vec![0.0; p])?;
    let analytic = upper_gap_bound(spec, cov, r_star, psi);
    let mut rng = stream(opts.seed, 1);
    let mut extreme: Option<f64> = None;
    let mut accepted = 0;
    for _ in 0..opts.probes {
        let d = probe_direction(&a, &mut rng);
        let sd = cov.sqrt_norm(&d);
        if sd == 0.0 {
            continue;
        }
        let h: Vec<f64> = d.iter().map(|v| v * r_star / sd).collect();
        if norm.eval(&h)? > 1.0 {
            continue;
        }
        accepted += 1;
        let v = dot(&spec.upper(&h)?, &h);
        if let Some(bound) = analytic {
            if v > bound * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::GapBoundViolated { probe: v, bound });
            }
        }
        extreme = Some(extreme.map_or(v, |m| m.max(v)));
    }
    let candidate = analytic.or(extreme).unwrap_or(f64::NEG_INFINITY);
    Ok(DeltaGapReport { probe_extreme: extreme, accepted, analytic, candidate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedEigenvalue {
    /// Smallest ratio found; an upper estimate of `ψ`.
    pub value: f64,
    pub restarts: usize,
    pub method: &'static str,
}

const RE_ITERS: usize = 500;

/// Upper estimate of the largest `ψ` with `‖Σ^{1/2}h‖₂ ≥ ψ‖P_I h‖₂` on the
/// cone `‖P_{Iᶜ}h‖₁ ≤ 3‖P_I h‖₁`.
///
/// Writing `h = a + b` with `a` on `I`, `‖a‖₂ = 1` and `‖b‖₁ ≤ 3‖a‖₁`, the
/// quadratic `hᵀΣh` is decreased by projected gradient steps from
/// `restarts` random starts.
pub fn restricted_eigenvalue(cov: &Covariance<f64>, support: &[usize], restarts: usize, seed: u64) -> Result<RestrictedEigenvalue> {
    let p = cov.dim();
    if support.is_empty() {
        return Err(Error::InvalidArgument("support must be nonempty".into()));
    }
    let mut on = vec![false; p];
    for &j in support {
        if j >= p || std::mem::replace(&mut on[j], true) {
            return Err(Error::InvalidArgument(format!("support index {j} is out of range or repeated")));
        }
    }
    let off: Vec<usize> = (0..p).filter(|&j| !on[j]).collect();
    let lmax = cov.eigenvalues().first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let eta = 0.5 / lmax;
    let assemble = |a: &[f64], b: &[f64]| {
        let mut h = vec![0.0; p];
        for (&j, &v) in support.iter().zip(a) {
            h[j] = v;
        }
        for (&j, &v) in off.iter().zip(b) {
            h[j] = v;
        }
        h
    };
    let quad = |h: &[f64]| {
        let s = cov.sqrt_mul(h);
        (dot(&s, &s), cov.sqrt_mul(&s))
    };
    let normalize = |a: &mut Vec<f64>| {
        let n = norm2(a);
        if n > 0.0 {
            a.iter_mut().for_each(|v| *v /= n);
        } else {
            a[0] = 1.0;
        }
    };
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut best = f64::INFINITY;
    for k in 0..restarts.max(1) {
        let mut rng = stream(seed, k as u64);
        let mut a = normal_vec(&mut rng, support.len());
        normalize(&mut a);
        let mut b = if k == 0 { vec![0.0; off.len()] } else { normal_vec(&mut rng, off.len()) };
        b = project_l1_ball(&b, 3.0 * l1(&a));
        for _ in 0..RE_ITERS {
            let h = assemble(&a, &b);
            let (f, sh) = quad(&h);
            best = best.min(f.max(0.0).sqrt());
            for (i, &j) in support.iter().enumerate() {
                a[i] -= 2.0 * eta * sh[j];
            }
            for (i, &j) in off.iter().enumerate() {
                b[i] -= 2.0 * eta * sh[j];
            }
            normalize(&mut a);
            b = project_l1_ball(&b, 3.0 * l1(&a));
        }
        best = best.min(quad(&assemble(&a, &b)).0.max(0.0).sqrt());
    }
    Ok(RestrictedEigenvalue { value: best, restarts: restarts.max(1), method: "projected gradient on the cone, best of restarts (upper estimate)" })
}

/// `r_k(Σ) = Σ_{i ≥ k} λᵢ(Σ)` with `k` counted from 1; zero past `p`.
pub fn spectral_tail(cov: &Covariance<f64>, k: usize) -> f64 {
    tail_of(&cov.eigenvalues(), k)
}

fn tail_of(eig: &[f64], k: usize) -> f64 {
    let start = k.max(1) - 1;
    eig.get(start..).map_or(0.0, |t| t.iter().rev().sum())
}

/// `k* = inf{k : r_k(Σ)/λ_k(Σ) > c₁n}`; `None` stands for `+∞`.
pub fn effective_rank_kstar(cov: &Covariance<f64>, c1: f64, n: usize) -> Option<usize> {
    let eig = cov.eigenvalues();
    let mut tails = vec![0.0; eig.len() + 1];
    for i in (0..eig.len()).rev() {
        tails[i] = tails[i + 1] + eig[i];
    }
    let threshold = c1 * n as f64;
    (0..eig.len()).find(|&i| eig[i] > 0.0 && tails[i] / eig[i] > threshold).map(|i| i + 1)
}

/// The displayed error bounds. `T1`/`T2` bound `‖Σ^{1/2}(ĥ − h*)‖₂`; the
/// remaining ones bound its square up to an absolute constant. Suffix `a`
/// is the display without the subdifferential condition, `b` the one with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    T1a,
    T1b,
    T2a,
    T2b,
    T3a,
    T3b,
    T4a,
    T4b,
    T5a,
    T5b,
    T6a,
    T6b,
    T7a,
    T7b,
    T8a,
    T8b,
    T9,
}

impl Theorem {
    pub const ALL: [Theorem; 17] = [
        Self::T1a,
        Self::T1b,
        Self::T2a,
        Self::T2b,
        Self::T3a,
        Self::T3b,
        Self::T4a,
        Self::T4b,
        Self::T5a,
        Self::T5b,
        Self::T6a,
        Self::T6b,
        Self::T7a,
        Self::T7b,
        Self::T8a,
        Self::T8b,
        Self::T9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::T1a => "t1a",
            Self::T1b => "t1b",
            Self::T2a => "t2a",
            Self::T2b => "t2b",
            Self::T3a => "t3a",
            Self::T3b => "t3b",
            Self::T4a => "t4a",
            Self::T4b => "t4b",
            Self::T5a => "t5a",
            Self::T5b => "t5b",
            Self::T6a => "t6a",
            Self::T6b => "t6b",
            Self::T7a => "t7a",
            Self::T7b => "t7b",
            Self::T8a => "t8a",
            Self::T8b => "t8b",
            Self::T9 => "t9",
        }
    }

    /// Whether the bound carries explicit constants (otherwise it holds up
    /// to an unspecified absolute constant).
    pub fn explicit_constants(self) -> bool {
        matches!(self, Self::T1a | Self::T1b | Self::T2a | Self::T2b)
    }

    /// Whether the left-hand side is the squared prediction error.
    pub fn squared(self) -> bool {
        !self.explicit_constants()
    }
}

impl std::str::FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|t| t.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown theorem '{s}'")))
    }
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Quantities entering the right-hand sides. Norms of `h*` and `ν̂` are in
/// the interpolation norm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremInputs {
    pub n: Option<f64>,
    /// `‖ξ‖₂`.
    pub noise_norm: Option<f64>,
    pub truth_norm: Option<f64>,
    pub interpolated_noise_norm: Option<f64>,
    pub r_star: Option<f64>,
    pub kappa: Option<f64>,
    pub delta: Option<f64>,
    pub zeta: Option<f64>,
    pub zeta_bar: Option<f64>,
    pub lambda: Option<f64>,
    /// Overparameterization exponent `β ∈ (0, 1)` of the ℓ1 bounds.
    pub beta: Option<f64>,
    /// Support size, number of active groups, or rank.
    pub sparsity: Option<f64>,
    pub psi: Option<f64>,
    /// `1 ∨ sup_{‖b‖₁=1}‖Σ^{-1/2}b‖₁² · maxᵢΣᵢᵢ`.
    pub covariance_factor: Option<f64>,
    pub log_ratio: Option<f64>,
    pub max_group: Option<f64>,
    /// `W = max|G| / min|G|`.
    pub group_ratio: Option<f64>,
    /// `p₁ + p₂`.
    pub side_sum: Option<f64>,
    /// `r_{c₄n}(Σ)`.
    pub spectral_tail: Option<f64>,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingInput(name))
}

/// `1 ∨ sup_{‖b‖₁=1}‖Σ^{-1/2}b‖₁² · maxᵢΣᵢᵢ`.
pub fn l1_covariance_factor(cov: &Covariance<f64>) -> Result<f64> {
    let s = inv_sqrt_l1_operator_norm(cov)?;
    Ok((s * s * cov.max_diag()).max(1.0))
}

/// Right-hand side of the selected bound; `∨` is evaluated as `max`.
pub fn theorem_rhs(which: Theorem, x: &TheoremInputs) -> Result<f64> {
    use Theorem::*;
    let n = || need(x.n, "n");
    let xi = || need(x.noise_norm, "noise_norm");
    let h = || need(x.truth_norm, "truth_norm");
    let nu = || need(x.interpolated_noise_norm, "interpolated_noise_norm");
    let r = || need(x.r_star, "r_star");
    let lam = || need(x.lambda, "lambda");
    let s = || need(x.sparsity, "sparsity");
    let noise_avg = || -> Result<f64> { Ok(xi()? / n()?.sqrt()) };
    let noise_sq = || -> Result<f64> { Ok(xi()?.powi(2) / n()?) };
    let lead = || -> Result<f64> {
        let (k, d) = (need(x.kappa, "kappa")?, need(x.delta, "delta")?);
        Ok(8f64.sqrt() / (k * d.sqrt()))
    };
    let beta = || -> Result<f64> {
        let b = need(x.beta, "beta")?;
        if b > 0.0 && b < 1.0 {
            Ok(b)
        } else {
            Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {b}")))
        }
    };
    let cf = || need(x.covariance_factor, "covariance_factor");
    let lr = || need(x.log_ratio, "log_ratio");
    let w = || need(x.group_ratio, "group_ratio");
    Ok(match which {
        T1a => (lead()? * noise_avg()?).max(r()? * (2.0 * h()? + nu()?)),
        T1b => (lead()? * noise_avg()?).max(r()? * nu()? / need(x.zeta, "zeta")?),
        T2a => (2.0 * lead()? * (noise_avg()? + (lam()? * h()?).sqrt())).max(r()? * (2.0 * h()? + nu()?)),
        T2b => {
            let (k, d) = (need(x.kappa, "kappa")?, need(x.delta, "delta")?);
            let in_cone = 4.0 * lead()? * noise_avg()? + 32.0 / (d * k * k) * lam()? * need(x.zeta_bar, "zeta_bar")? / r()?;
            in_cone.max(r()? * nu()? / need(x.zeta, "zeta")?)
        }
        T3a => cf()? * (noise_sq()? / beta()? + h()?.powi(2) * lr()? / n()?),
        T3b => cf()? * noise_sq()? / beta()?,
        T4a => cf()? * (noise_sq()? / beta()? + h()?.powi(2) * lr()? / n()? + lam()? * h()?),
        T4b => cf()? * (noise_sq()? / beta()? + s()? * lam()?.powi(2) / need(x.psi, "psi")?.powi(2)),
        T5a => w()? * noise_sq()? + h()?.powi(2) * need(x.max_group, "max_group")? / n()?,
        T5b => w()? * noise_sq()?,
        T6a => w()? * noise_sq()? + h()?.powi(2) * need(x.max_group, "max_group")? / n()? + lam()? * h()?,
        T6b => w()? * noise_sq()? + s()? * lam()?.powi(2),
        T7a => noise_sq()? + h()?.powi(2) * need(x.side_sum, "side_sum")? / n()?,
        T7b => noise_sq()?,
        T8a => noise_sq()? + h()?.powi(2) * need(x.side_sum, "side_sum")? / n()? + lam()? * h()?,
        T8b => noise_sq()? + s()? * lam()?.powi(2),
        T9 => noise_sq()? + h()?.powi(2) * need(x.spectral_tail, "spectral_tail")? / n()?,
    })
}

/// Diagnostic summary for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub r_star_estimate: f64,
    pub r_star_boundary: Option<GridBoundary>,
    pub r_star_samples: usize,
    pub r_star_closed_form: Option<f64>,
    pub r_star_closed_form_valid: Option<bool>,
    pub kappa: f64,
    pub delta: f64,
    pub small_ball_fraction: f64,
    pub small_ball_samples: usize,
    pub delta_lower: f64,
    pub delta_bar_upper: f64,
    pub gap_probes: usize,
    pub re_constant: Option<f64>,
    pub theorem: Option<Theorem>,
    pub theorem_rhs: Option<f64>,
    pub empirical_lhs: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub gamma: Option<f64>,
    pub r_star: RStarOptions,
    pub small_ball_samples: usize,
    pub gaps: GapOptions,
    pub re_restarts: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { gamma: None, r_star: RStarOptions::default(), small_ball_samples: 10_000, gaps: GapOptions::default(), re_restarts: 8, seed: 0 }
    }
}

/// Evaluates `r*(γ)`, the small-ball constants, `ψ` (ℓ1 only) and the gap
/// candidates at the truth `h*`. Theorem fields are left empty.
pub fn bound_report(norm: &NormFamily, cov: &Covariance<f64>, n: usize, truth: &[f64], opts: &ReportOptions) -> Result<BoundReport> {
    let gamma = opts.gamma.unwrap_or_else(default_gamma);
    let rs = estimate_r_star(norm, cov, n, gamma, &RStarOptions { seed: opts.seed, ..opts.r_star })?;
    let closed = match closed_form_r_star(norm, cov, n, gamma) {
        Ok(c) => Some(c),
        Err(Error::Unsupported { .. }) => None,
        Err(e) => return Err(e),
    };
    let sb = estimate_small_ball(cov, opts.small_ball_samples.max(1), opts.seed)?;
    let spec = SubgradientSpec::new(norm, truth)?;
    let re = match norm {
        NormFamily::L1 if spec.sparsity() > 0 => Some(restricted_eigenvalue(cov, &spec.support_indices(), opts.re_restarts, opts.seed)?.value),
        _ => None,
    };
    let gaps = GapOptions { psi: opts.gaps.psi.or(re), seed: opts.seed, ..opts.gaps };
    let lower = delta_gap_lower(&spec, cov, rs.value, &gaps)?;
    let upper = delta_gap_upper(&spec, cov, rs.value, &gaps)?;
    Ok(BoundReport {
        gamma,
        r_star_estimate: rs.value,
        r_star_boundary: rs.boundary,
        r_star_samples: rs.samples,
        r_star_closed_form: closed.map(|c| c.value),
        r_star_closed_form_valid: closed.map(|c| c.valid),
        kappa: sb.kappa,
        delta: sb.delta,
        small_ball_fraction: sb.empirical_fraction,
        small_ball_samples: sb.samples,
        delta_lower: lower.candidate,
        delta_bar_upper: upper.candidate,
        gap_probes: gaps.probes,
        re_constant: re,
        theorem: None,
        theorem_rhs: None,
        empirical_lhs: None,
        ratio: None,
    })
}
