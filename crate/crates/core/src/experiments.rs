//! Synthetic instances, Monte Carlo sweeps and bound checks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::sphere_infimum;
use crate::complexity::{
    closed_form_r_star, default_gamma, delta_gap_lower, delta_gap_upper, estimate_r_star, l1_covariance_factor,
    spectral_tail, theorem_rhs, GapOptions, RStarOptions, Theorem, TheoremInputs, DELTA, KAPPA,
};
use crate::covariance::{Covariance, CovarianceSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::norms::{GroupPartition, MatrixShape, NormFamily, SubgradientSpec};
use crate::rng::{derive_seed, gaussian_design, normal_vec, stream};
use crate::scalar::{dot, norm2};
use crate::solvers::{l2_error, prediction_error, solve_min_norm, solve_rerm, EstimatorResult, ProblemInstance, SolverConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Prefix,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalKind {
    /// `s` nonzero coordinates.
    Sparse { s: usize },
    /// `s` nonzero groups.
    GroupSparse { s: usize, groups: GroupPartition },
    /// Rank `s`.
    LowRank { s: usize, shape: MatrixShape },
    /// Gaussian direction with `‖h*‖₂ = magnitude`.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default = "one")]
    pub magnitude: f64,
    #[serde(default)]
    pub placement: Placement,
}

fn one() -> f64 {
    1.0
}

impl SignalSpec {
    pub fn new(kind: SignalKind) -> Self {
        Self { kind, magnitude: 1.0, placement: Placement::Prefix }
    }

    pub fn zero() -> Self {
        Self::new(SignalKind::Sparse { s: 0 })
    }

    fn check(&self, p: usize) -> Result<()> {
        if !self.magnitude.is_finite() {
            return Err(Error::InvalidArgument("signal magnitude must be finite".into()));
        }
        let ok = match &self.kind {
            SignalKind::Sparse { s } => *s <= p,
            SignalKind::GroupSparse { s, groups } => groups.dim() == p && *s <= groups.len(),
            SignalKind::LowRank { s, shape } => shape.dim() == p && *s <= shape.rows.min(shape.cols),
            SignalKind::Dense => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("signal {:?} is incompatible with p = {p}", self.kind)))
        }
    }

    /// Draws a signal. Nonzero entries are `±magnitude` (alternating signs
    /// for prefix placement); low-rank signals have all nonzero singular
    /// values equal to `magnitude`.
    pub fn draw<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check(p)?;
        let m = self.magnitude;
        let random = self.placement == Placement::Random;
        let sign = |k: usize, rng: &mut R| if random { if rng.gen::<bool>() { 1.0 } else { -1.0 } } else if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut h = vec![0.0; p];
        match &self.kind {
            SignalKind::Sparse { s } => {
                let idx: Vec<usize> = if random { sample(rng, p, *s).into_vec() } else { (0..*s).collect() };
                for (k, j) in idx.into_iter().enumerate() {
                    h[j] = m * sign(k, rng);
                }
            }
            SignalKind::GroupSparse { s, groups } => {
                let chosen: Vec<usize> = if random { sample(rng, groups.len(), *s).into_vec() } else { (0..*s).collect() };
                let mut k = 0;
                for g in chosen {
                    for &j in &groups.groups()[g] {
                        h[j] = m * sign(k, rng);
                        k += 1;
                    }
                }
            }
            SignalKind::LowRank { s, shape } => {
                if random {
                    let u = orthonormal_columns(shape.rows, *s, rng);
                    let v = orthonormal_columns(shape.cols, *s, rng);
                    let hm = u.matmul(&v.transpose());
                    h = hm.as_slice().iter().map(|x| m * x).collect();
                } else {
                    for k in 0..*s {
                        h[k * shape.cols + k] = m;
                    }
                }
            }
            SignalKind::Dense => {
                let z = normal_vec(rng, p);
                let nz = norm2(&z);
                if nz > 0.0 {
                    h = z.iter().map(|v| m * v / nz).collect();
                }
            }
        }
        Ok(h)
    }
}

fn orthonormal_columns<R: Rng + ?Sized>(rows: usize, k: usize, rng: &mut R) -> Matrix<f64> {
    let mut q = Matrix::zeros(rows, k);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut c = normal_vec(rng, rows);
        for prev in &cols {
            let d = dot(prev, &c);
            c.iter_mut().zip(prev).for_each(|(a, b)| *a -= d * b);
        }
        let n = norm2(&c);
        if n > 1e-8 {
            cols.push(c.into_iter().map(|v| v / n).collect());
        }
    }
    for (j, c) in cols.iter().enumerate() {
        for i in 0..rows {
            q[(i, j)] = c[i];
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    None,
    GaussianIid { sigma: f64 },
    FixedVector { values: Vec<f64> },
    /// `ξᵢ = level·(−1)ⁱ`, a deterministic vector with `‖ξ‖₂ = level·√n`.
    Alternating { level: f64 },
    /// `ξᵢ = ⟨Xᵢ, h₁⟩` with `‖Σ^{1/2}h₁‖₂² = ε²/8` and `h* = 0`.
    AdversarialTwoPoint { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Separate seed for the noise draw; by default the instance seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind) -> Self {
        Self { kind, seed: None }
    }

    fn check(&self, n: usize) -> Result<()> {
        match &self.kind {
            NoiseKind::GaussianIid { sigma } if !(*sigma >= 0.0) => {
                Err(Error::InvalidArgument(format!("sigma must be nonnegative, got {sigma}")))
            }
            NoiseKind::FixedVector { values } if values.len() != n => {
                Err(Error::DimensionMismatch { context: "fixed noise vector", expected: n, found: values.len() })
            }
            NoiseKind::AdversarialTwoPoint { epsilon } if !(*epsilon > 0.0 && *epsilon < 1.0) => {
                Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")))
            }
            _ => Ok(()),
        }
    }
}

/// Rescales `h` so that `‖Σ^{1/2}h‖₂² = ε²/8`.
fn scale_two_point(h: &mut [f64], cov: &Covariance<f64>, epsilon: f64) -> Result<()> {
    let norm = cov.sqrt_norm(h);
    if norm == 0.0 {
        return Err(Error::InvalidArgument("the structure class must contain a direction with nonzero prediction norm".into()));
    }
    let scale = epsilon / (8f64.sqrt() * norm);
    h.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

/// The alternative hypothesis of the two-point construction: a random
/// element of the structure class of `signal`, scaled to
/// `‖Σ^{1/2}h₁‖₂² = ε²/8`.
pub fn two_point_direction<R: Rng + ?Sized>(signal: &SignalSpec, cov: &Covariance<f64>, epsilon: f64, rng: &mut R) -> Result<Vec<f64>> {
    let class = SignalSpec { placement: Placement::Random, magnitude: 1.0, ..signal.clone() };
    let mut h1 = class.draw(cov.dim(), rng)?;
    scale_two_point(&mut h1, cov, epsilon)?;
    Ok(h1)
}

/// Gaussian instance `Y = Xh* + ξ` with rows `Xᵢ ~ N(0, Σ)`, drawn from the
/// stream keyed by `seed`: first the design, then the signal, then the noise.
pub fn generate_instance(
    n: usize,
    p: usize,
    covariance: &CovarianceSpec,
    signal: &SignalSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<ProblemInstance<f64>> {
    let cov = covariance.build(p)?;
    generate_instance_with(n, &cov, signal, noise, seed)
}

/// [`generate_instance`] with a prebuilt covariance.
pub fn generate_instance_with(
    n: usize,
    cov: &Covariance<f64>,
    signal: &SignalSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<ProblemInstance<f64>> {
    let p = cov.dim();
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("n and p must be at least 1".into()));
    }
    signal.check(p)?;
    noise.check(n)?;
    let mut rng = stream(seed, 0);
    let (x, _) = gaussian_design(cov, n, &mut rng);
    let adversarial = matches!(noise.kind, NoiseKind::AdversarialTwoPoint { .. });
    let truth = if adversarial { vec![0.0; p] } else { signal.draw(p, &mut rng)? };
    let mut own;
    let noise_rng: &mut ChaCha20Rng = match noise.seed {
        Some(s) => {
            own = stream(s, 1);
            &mut own
        }
        None => &mut rng,
    };
    let xi = match &noise.kind {
        NoiseKind::None => vec![0.0; n],
        NoiseKind::GaussianIid { sigma } => normal_vec(noise_rng, n).into_iter().map(|z| sigma * z).collect(),
        NoiseKind::FixedVector { values } => values.clone(),
        NoiseKind::Alternating { level } => (0..n).map(|i| if i % 2 == 0 { *level } else { -*level }).collect(),
        NoiseKind::AdversarialTwoPoint { epsilon } => {
            let h1 = two_point_direction(signal, cov, *epsilon, noise_rng)?;
            x.matvec(&h1)
        }
    };
    let fit = x.matvec(&truth);
    let y: Vec<f64> = fit.iter().zip(&xi).map(|(a, b)| a + b).collect();
    ProblemInstance::new(x, y)?.with_truth(truth)?.with_noise(xi)?.with_covariance(cov.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    P,
    S,
    Lambda,
    NoiseLevel,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::P => "p",
            Self::S => "s",
            Self::Lambda => "lambda",
            Self::NoiseLevel => "noise_level",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    MinNorm,
    /// RERM at the point's `lambda`.
    Rerm,
}

/// Norm family description that is resolved against the dimension `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSpec {
    L1,
    L2,
    GroupLasso { group_size: usize },
    /// `rows × p/rows` matrices; square when `rows` is absent.
    Nuclear {
        #[serde(default)]
        rows: Option<usize>,
    },
}

impl NormSpec {
    pub fn build(&self, p: usize) -> Result<NormFamily> {
        match *self {
            Self::L1 => Ok(NormFamily::L1),
            Self::L2 => Ok(NormFamily::L2),
            Self::GroupLasso { group_size } => Ok(NormFamily::group_lasso(GroupPartition::contiguous(p, group_size)?)),
            Self::Nuclear { rows } => {
                let r = match rows {
                    Some(r) => r,
                    None => {
                        let r = (p as f64).sqrt().round() as usize;
                        if r * r != p {
                            return Err(Error::InvalidNorm(format!("p = {p} is not a perfect square; give rows explicitly")));
                        }
                        r
                    }
                };
                if r == 0 || p % r != 0 {
                    return Err(Error::InvalidNorm(format!("cannot reshape p = {p} into {r} rows")));
                }
                NormFamily::nuclear(r, p / r)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalShape {
    Sparse,
    GroupSparse,
    LowRank,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalTemplate {
    pub shape: SignalShape,
    pub magnitude: f64,
    pub placement: Placement,
}

impl Default for SignalTemplate {
    fn default() -> Self {
        Self { shape: SignalShape::Sparse, magnitude: 1.0, placement: Placement::Prefix }
    }
}

impl SignalTemplate {
    /// Signal with sparsity `s` in the structure of `norm`.
    pub fn resolve(&self, norm: &NormFamily, s: usize) -> Result<SignalSpec> {
        let kind = match (self.shape, norm) {
            (SignalShape::Sparse, _) => SignalKind::Sparse { s },
            (SignalShape::GroupSparse, NormFamily::GroupLasso { groups }) => SignalKind::GroupSparse { s, groups: groups.clone() },
            (SignalShape::LowRank, NormFamily::Nuclear { shape }) => SignalKind::LowRank { s, shape: *shape },
            (SignalShape::Dense, _) => SignalKind::Dense,
            (shape, norm) => {
                return Err(Error::InvalidArgument(format!("signal shape {shape:?} needs a matching norm, got {}", norm.name())))
            }
        };
        Ok(SignalSpec { kind, magnitude: self.magnitude, placement: self.placement })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    None,
    Gaussian,
    Alternating,
    Adversarial,
}

impl NoiseShape {
    /// `level` is `σ`, the alternating amplitude, or `ε`.
    pub fn resolve(self, level: f64) -> NoiseSpec {
        NoiseSpec::new(match self {
            Self::None => NoiseKind::None,
            Self::Gaussian => NoiseKind::GaussianIid { sigma: level },
            Self::Alternating => NoiseKind::Alternating { level },
            Self::Adversarial => NoiseKind::AdversarialTwoPoint { epsilon: level },
        })
    }
}

/// Values shared by all points of a sweep; the swept axis overrides one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasePoint {
    pub n: usize,
    pub p: usize,
    /// When set, `p = round(p_per_n · n)` at every point.
    pub p_per_n: Option<f64>,
    pub s: usize,
    pub lambda: f64,
    pub noise_level: f64,
}

impl Default for BasePoint {
    fn default() -> Self {
        Self { n: 50, p: 200, p_per_n: None, s: 3, lambda: 0.0, noise_level: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSettings {
    pub which: Option<Theorem>,
    pub beta: f64,
    /// `c₄` in `r_{c₄n}(Σ)`.
    pub c4: f64,
    /// Fixed `r*`; otherwise the closed form when valid, else the Monte Carlo estimate.
    pub r_star: Option<f64>,
    pub gamma: Option<f64>,
    pub psi: Option<f64>,
    pub r_star_options: RStarOptions,
}

impl Default for TheoremSettings {
    fn default() -> Self {
        Self { which: None, beta: 0.5, c4: 1.0, r_star: None, gamma: None, psi: None, r_star_options: RStarOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSettings {
    /// Solve for `ν̂` on every noisy trial.
    pub interpolated_noise: bool,
    /// Also estimate the sphere infimum for the upper bracket.
    pub upper_bracket: bool,
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for CertificateSettings {
    fn default() -> Self {
        Self { interpolated_noise: true, upper_bracket: false, restarts: 8, iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "one_usize")]
    pub trials_per_point: usize,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorSpec,
    pub norm: NormSpec,
    #[serde(default)]
    pub base: BasePoint,
    #[serde(default)]
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub signal: SignalTemplate,
    #[serde(default = "default_noise")]
    pub noise: NoiseShape,
    #[serde(default)]
    pub theorem: TheoremSettings,
    #[serde(default)]
    pub certificates: CertificateSettings,
    #[serde(default)]
    pub solver: SolverConfig<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Directory receiving `records.csv`, `plan.json` and `plot.csv`.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

fn one_usize() -> usize {
    1
}

fn default_estimator() -> EstimatorSpec {
    EstimatorSpec::MinNorm
}

fn default_noise() -> NoiseShape {
    NoiseShape::None
}

/// Fully resolved parameters of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointParams {
    pub x: f64,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub lambda: f64,
    pub noise_level: f64,
}

fn as_count(v: f64, name: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidArgument(format!("{name} values must be nonnegative integers, got {v}")))
    }
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidArgument("values must be nonempty".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::InvalidArgument("trials_per_point must be at least 1".into()));
        }
        self.solver.validate()?;
        if !(self.theorem.beta > 0.0 && self.theorem.beta < 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {}", self.theorem.beta)));
        }
        for i in 0..self.values.len() {
            let pt = self.point(i)?;
            if pt.n == 0 || pt.p == 0 {
                return Err(Error::InvalidArgument("n and p must be at least 1".into()));
            }
            if !(pt.lambda >= 0.0) || !(pt.noise_level >= 0.0) {
                return Err(Error::InvalidArgument("lambda and noise_level must be nonnegative".into()));
            }
            let norm = self.norm.build(pt.p)?;
            self.signal.resolve(&norm, pt.s)?.check(pt.p)?;
            self.noise.resolve(pt.noise_level).check(pt.n)?;
        }
        Ok(())
    }

    pub fn point(&self, i: usize) -> Result<PointParams> {
        let b = &self.base;
        let x = self.values[i];
        let mut pt = PointParams { x, n: b.n, p: b.p, s: b.s, lambda: b.lambda, noise_level: b.noise_level };
        match self.axis {
            Axis::N => pt.n = as_count(x, "n")?,
            Axis::P => pt.p = as_count(x, "p")?,
            Axis::S => pt.s = as_count(x, "s")?,
            Axis::Lambda => pt.lambda = x,
            Axis::NoiseLevel => pt.noise_level = x,
        }
        if let Some(ratio) = b.p_per_n {
            pt.p = (ratio * pt.n as f64).round() as usize;
        }
        Ok(pt)
    }

    /// Seed of trial `trial`. It does not depend on the point, so trial `k`
    /// sees the same random draws at every point of the sweep.
    pub fn trial_seed(&self, _point: usize, trial: usize) -> u64 {
        derive_seed(self.master_seed, trial as u64)
    }
}

/// One row of the record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub x: f64,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub lambda: f64,
    pub noise_level: f64,
    pub noise_norm: Option<f64>,
    pub truth_norm: Option<f64>,
    pub prediction_error: Option<f64>,
    pub l2_error: Option<f64>,
    pub estimate_norm: Option<f64>,
    pub nu_hat: Option<f64>,
    pub nu_lower: Option<f64>,
    pub nu_upper: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub constraint_residual: Option<f64>,
    pub theorem: Option<Theorem>,
    pub theorem_rhs: Option<f64>,
    pub lhs: Option<f64>,
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

/// Column order of the record file.
pub const RECORD_COLUMNS: [&str; 25] = [
    "point",
    "trial",
    "seed",
    "x",
    "n",
    "p",
    "s",
    "lambda",
    "noise_level",
    "noise_norm",
    "truth_norm",
    "prediction_error",
    "l2_error",
    "estimate_norm",
    "nu_hat",
    "nu_lower",
    "nu_upper",
    "iterations",
    "converged",
    "constraint_residual",
    "theorem",
    "theorem_rhs",
    "lhs",
    "ratio",
    "error",
];

impl TrialRecord {
    fn empty(point: usize, trial: usize, seed: u64, pt: &PointParams) -> Self {
        Self {
            point,
            trial,
            seed,
            x: pt.x,
            n: pt.n,
            p: pt.p,
            s: pt.s,
            lambda: pt.lambda,
            noise_level: pt.noise_level,
            noise_norm: None,
            truth_norm: None,
            prediction_error: None,
            l2_error: None,
            estimate_norm: None,
            nu_hat: None,
            nu_lower: None,
            nu_upper: None,
            iterations: None,
            converged: None,
            constraint_residual: None,
            theorem: None,
            theorem_rhs: None,
            lhs: None,
            ratio: None,
            error: None,
        }
    }
}

/// Per-point data shared by all trials of the point.
struct PointContext {
    params: PointParams,
    norm: NormFamily,
    cov: Covariance<f64>,
    signal: SignalSpec,
    noise: NoiseSpec,
    r_star: Option<f64>,
    covariance_factor: Option<f64>,
    spectral_tail: Option<f64>,
}

fn point_context(plan: &SweepPlan, i: usize) -> Result<PointContext> {
    let params = plan.point(i)?;
    let norm = plan.norm.build(params.p)?;
    let cov = plan.covariance.build(params.p)?;
    let signal = plan.signal.resolve(&norm, params.s)?;
    let noise = plan.noise.resolve(params.noise_level);
    let settings = &plan.theorem;
    let (mut r_star, mut covariance_factor, mut tail) = (None, None, None);
    if let Some(which) = settings.which {
        if matches!(which, Theorem::T1a | Theorem::T1b | Theorem::T2a | Theorem::T2b) {
            let gamma = settings.gamma.unwrap_or_else(default_gamma);
            r_star = Some(match settings.r_star {
                Some(r) => r,
                None => match closed_form_r_star(&norm, &cov, params.n, gamma) {
                    Ok(c) if c.valid => c.value,
                    _ => {
                        let opts = RStarOptions { seed: derive_seed(plan.master_seed, u64::MAX - i as u64), ..settings.r_star_options };
                        estimate_r_star(&norm, &cov, params.n, gamma, &opts)?.value
                    }
                },
            });
        }
        if matches!(which, Theorem::T3a | Theorem::T3b | Theorem::T4a | Theorem::T4b) {
            covariance_factor = Some(l1_covariance_factor(&cov)?);
        }
        if which == Theorem::T9 {
            tail = Some(spectral_tail(&cov, (settings.c4 * params.n as f64).ceil() as usize));
        }
    }
    Ok(PointContext { params, norm, cov, signal, noise, r_star, covariance_factor, spectral_tail: tail })
}

fn run_estimator(plan: &SweepPlan, inst: &ProblemInstance<f64>, norm: &NormFamily, lambda: f64) -> Result<EstimatorResult<f64>> {
    match plan.estimator {
        EstimatorSpec::MinNorm => solve_min_norm(inst, norm, &plan.solver),
        EstimatorSpec::Rerm => solve_rerm(inst, norm, lambda, &plan.solver),
    }
}

fn run_trial(plan: &SweepPlan, ctx: &PointContext, point: usize, trial: usize) -> TrialRecord {
    let seed = plan.trial_seed(point, trial);
    let mut rec = TrialRecord::empty(point, trial, seed, &ctx.params);
    if let Err(e) = fill_trial(plan, ctx, seed, &mut rec) {
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill_trial(plan: &SweepPlan, ctx: &PointContext, seed: u64, rec: &mut TrialRecord) -> Result<()> {
    let pt = &ctx.params;
    let inst = generate_instance_with(pt.n, &ctx.cov, &ctx.signal, &ctx.noise, seed)?;
    let xi = inst.noise.clone().expect("generated instances carry noise");
    let truth = inst.truth.clone().expect("generated instances carry the truth");
    let xi_norm = norm2(&xi);
    rec.noise_norm = Some(xi_norm);
    rec.truth_norm = Some(ctx.norm.eval(&truth)?);
    let est = run_estimator(plan, &inst, &ctx.norm, pt.lambda)?;
    rec.iterations = Some(est.iterations);
    rec.converged = Some(est.converged);
    rec.constraint_residual = Some(est.constraint_residual);
    rec.estimate_norm = Some(ctx.norm.eval(&est.estimate)?);
    let pe = prediction_error(&inst, &est.estimate)?;
    rec.prediction_error = Some(pe);
    rec.l2_error = Some(l2_error(&inst, &est.estimate)?);

    if plan.certificates.interpolated_noise {
        if xi_norm == 0.0 {
            rec.nu_hat = Some(0.0);
            rec.nu_lower = Some(0.0);
            rec.nu_upper = plan.certificates.upper_bracket.then_some(0.0);
        } else {
            let noise_inst = ProblemInstance::noise_only(inst.design.clone(), xi.clone())?;
            rec.nu_hat = Some(solve_min_norm(&noise_inst, &ctx.norm, &plan.solver)?.objective);
            rec.nu_lower = Some(xi_norm * xi_norm / ctx.norm.dual_eval(&inst.design.matvec_t(&xi))?);
            if plan.certificates.upper_bracket {
                let c = &plan.certificates;
                let s = sphere_infimum(&inst.design, &ctx.norm, c.restarts, c.iterations, seed)?;
                rec.nu_upper = Some(xi_norm / s.value);
            }
        }
    }

    if let Some(which) = plan.theorem.which {
        rec.theorem = Some(which);
        let inputs = theorem_inputs(plan, ctx, &truth, xi_norm, rec)?;
        let rhs = theorem_rhs(which, &inputs)?;
        let lhs = if which.squared() { pe * pe } else { pe };
        rec.theorem_rhs = Some(rhs);
        rec.lhs = Some(lhs);
        rec.ratio = Some(if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(())
}

fn theorem_inputs(plan: &SweepPlan, ctx: &PointContext, truth: &[f64], xi_norm: f64, rec: &TrialRecord) -> Result<TheoremInputs> {
    let pt = &ctx.params;
    let settings = &plan.theorem;
    let spec = SubgradientSpec::new(&ctx.norm, truth)?;
    let psi = settings.psi.unwrap_or_else(|| ctx.cov.min_eigenvalue().max(0.0).sqrt());
    let (mut zeta, mut zeta_bar) = (None, None);
    if let Some(r) = ctx.r_star {
        let gaps = GapOptions { probes: 0, seed: 0, psi: Some(psi) };
        zeta = delta_gap_lower(&spec, &ctx.cov, r, &gaps)?.analytic;
        zeta_bar = delta_gap_upper(&spec, &ctx.cov, r, &gaps)?.analytic;
        if matches!(settings.which, Some(Theorem::T1b | Theorem::T2b)) && !zeta.is_some_and(|z| z > 0.0) {
            return Err(Error::InvalidArgument("the subdifferential gap candidate is not positive at this point".into()));
        }
    }
    let (max_group, group_ratio, side_sum) = match &ctx.norm {
        NormFamily::GroupLasso { groups } => {
            (Some(groups.max_size() as f64), Some(groups.max_size() as f64 / groups.min_size() as f64), None)
        }
        NormFamily::Nuclear { shape } => (None, None, Some((shape.rows + shape.cols) as f64)),
        _ => (None, None, None),
    };
    Ok(TheoremInputs {
        n: Some(pt.n as f64),
        noise_norm: Some(xi_norm),
        truth_norm: rec.truth_norm,
        interpolated_noise_norm: rec.nu_hat,
        r_star: ctx.r_star,
        kappa: Some(KAPPA),
        delta: Some(DELTA),
        zeta,
        zeta_bar,
        lambda: Some(pt.lambda),
        beta: Some(settings.beta),
        sparsity: Some(spec.sparsity() as f64),
        psi: Some(psi),
        covariance_factor: ctx.covariance_factor,
        log_ratio: Some((pt.p as f64 / pt.n as f64).ln()),
        max_group,
        group_ratio,
        side_sum,
        spectral_tail: ctx.spectral_tail,
    })
}

/// Runs every trial of `plan` on `jobs` threads (0 = all cores). Records
/// are emitted in trial order through a single writer, so the record file
/// does not depend on `jobs`. Trial failures are recorded in the `error`
/// column and the sweep continues.
pub fn run_sweep(plan: &SweepPlan, jobs: usize) -> Result<Vec<TrialRecord>> {
    plan.validate()?;
    let contexts: Vec<PointContext> = (0..plan.values.len()).map(|i| point_context(plan, i)).collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> =
        (0..plan.values.len()).flat_map(|pt| (0..plan.trials_per_point).map(move |t| (pt, t))).collect();

    let mut writer = match &plan.outputs {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(csv::Writer::from_path(dir.join("records.csv"))?)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;

    let (tx, rx) = mpsc::channel::<(usize, TrialRecord)>();
    let mut records = Vec::with_capacity(tasks.len());
    let mut write_error: Option<Error> = None;
    std::thread::scope(|scope| {
        let tasks = &tasks;
        let contexts = &contexts;
        scope.spawn(move || {
            pool.install(|| {
                tasks.par_iter().enumerate().for_each_with(tx, |tx, (k, &(pt, t))| {
                    let _ = tx.send((k, run_trial(plan, &contexts[pt], pt, t)));
                });
            });
        });
        let mut pending = BTreeMap::new();
        for (k, rec) in rx {
            pending.insert(k, rec);
            while let Some(rec) = pending.remove(&records.len()) {
                if let (Some(w), None) = (writer.as_mut(), write_error.as_ref()) {
                    if let Err(e) = w.serialize(&rec).and_then(|_| w.flush().map_err(csv::Error::from)) {
                        write_error = Some(e.into());
                    }
                }
                records.push(rec);
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    if let Some(dir) = &plan.outputs {
        write_sidecar(dir, plan, &records)?;
        write_plot_data(&dir.join("plot.csv"), plan.axis, &records)?;
    }
    Ok(records)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    /// The plan without its output directory, so the sidecar does not
    /// depend on where it was written.
    plan: SweepPlan,
    master_seed: u64,
    columns: &'a [&'a str],
    /// `[point, trial, seed]` for every record.
    trial_seeds: Vec<(usize, usize, u64)>,
}

fn write_sidecar(dir: &Path, plan: &SweepPlan, records: &[TrialRecord]) -> Result<()> {
    let side = Sidecar {
        plan: SweepPlan { outputs: None, ..plan.clone() },
        master_seed: plan.master_seed,
        columns: &RECORD_COLUMNS,
        trial_seeds: records.iter().map(|r| (r.point, r.trial, r.seed)).collect(),
    };
    let mut f = BufWriter::new(File::create(dir.join("plan.json"))?);
    serde_json::to_writer_pretty(&mut f, &side)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub axis: &'static str,
    pub metric: &'static str,
    pub x: f64,
    pub quantile: f64,
    pub y: f64,
}

/// Quantiles 0.1, 0.5, 0.9 of the error metrics at every point, in tidy
/// `(x, y, quantile)` form.
pub fn plot_rows(axis: Axis, records: &[TrialRecord]) -> Vec<PlotRow> {
    let mut by_point: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_point.entry(r.point).or_default().push(r);
    }
    let mut rows = Vec::new();
    for recs in by_point.values() {
        let x = recs[0].x;
        let metrics: [(&'static str, fn(&TrialRecord) -> Option<f64>); 2] =
            [("prediction_error", |r| r.prediction_error), ("l2_error", |r| r.l2_error)];
        for (metric, get) in metrics {
            let mut v: Vec<f64> = recs.iter().filter_map(|r| get(r)).filter(|v| v.is_finite()).collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(f64::total_cmp);
            for q in [0.1, 0.5, 0.9] {
                rows.push(PlotRow { axis: axis.name(), metric, x, quantile: q, y: quantile_sorted(&v, q) });
            }
        }
    }
    rows
}

fn write_plot_data(path: &Path, axis: Axis, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in plot_rows(axis, records) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ratio ceiling used for bounds that hold up to an unspecified constant.
/// It is an empirical calibration, not a constant from the analysis.
pub const DEFAULT_CALIBRATION_CEILING: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub theorem: Theorem,
    pub count: usize,
    pub max_ratio: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub ceiling: f64,
    pub pass: bool,
}

/// Checks `lhs/rhs ≤ ceiling` over the records carrying `which`. The default
/// ceiling is 1 for bounds with explicit constants and
/// [`DEFAULT_CALIBRATION_CEILING`] otherwise.
pub fn verify_bound(records: &[TrialRecord], which: Theorem, ceiling: Option<f64>) -> Result<BoundSummary> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to verify".into()));
    }
    let mut ratios: Vec<f64> = records.iter().filter(|r| r.theorem == Some(which)).filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return Err(Error::MissingInput("theorem_rhs"));
    }
    ratios.sort_by(f64::total_cmp);
    let ceiling = ceiling.unwrap_or(if which.explicit_constants() { 1.0 } else { DEFAULT_CALIBRATION_CEILING });
    let max_ratio = *ratios.last().expect("nonempty");
    Ok(BoundSummary {
        theorem: which,
        count: ratios.len(),
        max_ratio,
        q10: quantile_sorted(&ratios, 0.1),
        median: quantile_sorted(&ratios, 0.5),
        q90: quantile_sorted(&ratios, 0.9),
        ceiling,
        pass: max_ratio <= ceiling,
    })
}

/// Structure class and estimator of the two-point experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundStructure {
    pub norm: NormSpec,
    pub p: usize,
    #[serde(default)]
    pub s: usize,
    #[serde(default)]
    pub signal: SignalTemplate,
    #[serde(default)]
    pub covariance: CovarianceSpec,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub solver: SolverConfig<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSummary {
    pub epsilon: f64,
    pub n: usize,
    pub trials: usize,
    /// Number of trials where the estimator failed.
    pub failures: usize,
    /// The two hypotheses produced bit-identical data in every trial.
    pub identical_datasets: bool,
    /// Fraction of trials with `‖ξ‖₂² ≤ nε²`.
    pub noise_within_budget: f64,
    /// Fraction of trials with `max(err₀, err₁) ≥ ε²/16`.
    pub max_error_above_sixteenth: f64,
    /// Fraction of trials with `max(err₀, err₁) ≥ ε²/32`, the level the
    /// triangle inequality guarantees for any estimator.
    pub max_error_above_thirty_second: f64,
    /// Smallest `max(err₀, err₁)/ε²` over the trials.
    pub min_max_error_over_eps_sq: f64,
    /// Average `‖ξ‖₂²/n`; its expectation is `ε²/8`.
    pub mean_noise_sq_over_n: f64,
}

/// Two-point construction: `h₀ = 0` with noise `ξᵢ = ⟨Xᵢ, h₁⟩` versus
/// truth `h₁` without noise. Both hypotheses give the same data; the
/// estimator is fitted once and its prediction error evaluated against both.
pub fn lower_bound_experiment(epsilon: f64, n: usize, trials: usize, structure: &LowerBoundStructure, seed: u64) -> Result<LowerBoundSummary> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("n and trials must be at least 1".into()));
    }
    let norm = structure.norm.build(structure.p)?;
    let cov = structure.covariance.build(structure.p)?;
    let signal = structure.signal.resolve(&norm, structure.s)?;
    structure.solver.validate()?;
    let eps2 = epsilon * epsilon;
    let outcomes: Vec<Result<(bool, f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let (x, _) = gaussian_design(&cov, n, &mut rng);
            let h1 = two_point_direction(&signal, &cov, epsilon, &mut rng)?;
            let xi = x.matvec(&h1);
            // P₀: Y = X h₁; P₁: Y = X·0 + ξ
            let y0 = x.matvec(&h1);
            let y1: Vec<f64> = x.matvec(&vec![0.0; structure.p]).iter().zip(&xi).map(|(a, b)| a + b).collect();
            let identical = y0 == y1;
            let noise_sq = dot(&xi, &xi);
            let inst = ProblemInstance::new(x, y0)?;
            let est = match structure.estimator {
                EstimatorSpec::MinNorm => solve_min_norm(&inst, &norm, &structure.solver)?,
                EstimatorSpec::Rerm => solve_rerm(&inst, &norm, structure.lambda, &structure.solver)?,
            };
            let d1: Vec<f64> = est.estimate.iter().zip(&h1).map(|(a, b)| a - b).collect();
            let err0 = cov.sqrt_norm(&d1).powi(2);
            let err1 = cov.sqrt_norm(&est.estimate).powi(2);
            Ok((identical, noise_sq, err0.max(err1)))
        })
        .collect();
    let mut identical = true;
    let (mut within, mut above16, mut above32, mut failures) = (0usize, 0usize, 0usize, 0usize);
    let mut min_ratio = f64::INFINITY;
    let mut noise = Vec::with_capacity(trials);
    for o in outcomes {
        match o {
            Ok((same, noise_sq, worst)) => {
                identical &= same;
                within += usize::from(noise_sq <= n as f64 * eps2);
                above16 += usize::from(worst >= eps2 / 16.0);
                above32 += usize::from(worst >= eps2 / 32.0);
                min_ratio = min_ratio.min(worst / eps2);
                noise.push(noise_sq / n as f64);
            }
            Err(_) => failures += 1,
        }
    }
    let ok = (trials - failures).max(1) as f64;
    Ok(LowerBoundSummary {
        epsilon,
        n,
        trials,
        failures,
        identical_datasets: identical,
        noise_within_budget: within as f64 / ok,
        max_error_above_sixteenth: above16 as f64 / ok,
        max_error_above_thirty_second: above32 as f64 / ok,
        min_max_error_over_eps_sq: min_ratio,
        mean_noise_sq_over_n: crate::rng::mean(&noise),
    })
}
