//! The four norm families: evaluation, dual evaluation, proximal maps and
//! ball projections.
//!
//! Matrices of shape `p₁×p₂` are stored as length `p₁·p₂` vectors in row-major
//! order, so `x[i * p₂ + j]` is entry `(i, j)`.

mod subgradient;

use serde::{Deserialize, Serialize};

pub use subgradient::{subgradient_lower, subgradient_upper, SubgradientSpec, RANK_TOL};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, Matrix, Svd};
use crate::scalar::{dot, norm2, Real};

/// Disjoint groups `G₁..G_M` covering `0..p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let dim: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; dim];
        for (gi, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidNorm(format!("group {gi} is empty")));
            }
            for &j in g {
                if j >= dim {
                    return Err(Error::InvalidNorm(format!(
                        "index {j} in group {gi} is outside 0..{dim}; groups must cover 0..p exactly"
                    )));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::InvalidNorm(format!("index {j} appears in more than one group")));
                }
            }
        }
        Ok(Self { groups, dim })
    }

    /// Consecutive blocks of `size` coordinates; `p` must be a multiple of `size`.
    pub fn contiguous(p: usize, size: usize) -> Result<Self> {
        if size == 0 || p % size != 0 {
            return Err(Error::InvalidNorm(format!("cannot split {p} coordinates into groups of {size}")));
        }
        Self::new((0..p / size).map(|g| (g * size..(g + 1) * size).collect()).collect())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_size(&self) -> usize {
        self.groups.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub(crate) fn group_norm<T: Real>(&self, x: &[T], g: usize) -> T {
        let idx = &self.groups[g];
        let buf: Vec<T> = idx.iter().map(|&j| x[j]).collect();
        norm2(&buf)
    }
}

impl TryFrom<Vec<Vec<usize>>> for GroupPartition {
    type Error = Error;
    fn try_from(groups: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(groups)
    }
}

impl From<GroupPartition> for Vec<Vec<usize>> {
    fn from(p: GroupPartition) -> Self {
        p.groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixShape {
    pub rows: usize,
    pub cols: usize,
}

impl MatrixShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidNorm("matrix shape must be nonzero".into()));
        }
        Ok(Self { rows, cols })
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn max_side(&self) -> usize {
        self.rows.max(self.cols)
    }

    pub(crate) fn reshape<T: Real>(&self, x: &[T]) -> Matrix<T> {
        Matrix::from_vec(self.rows, self.cols, x.to_vec()).expect("length checked by caller")
    }
}

/// A norm on `R^p` together with its dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormFamily {
    L1,
    L2,
    GroupLasso { groups: GroupPartition },
    Nuclear { shape: MatrixShape },
}

impl NormFamily {
    pub fn group_lasso(groups: GroupPartition) -> Self {
        Self::GroupLasso { groups }
    }

    pub fn nuclear(rows: usize, cols: usize) -> Result<Self> {
        Ok(Self::Nuclear { shape: MatrixShape::new(rows, cols)? })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::GroupLasso { .. } => "group_lasso",
            Self::Nuclear { .. } => "nuclear",
        }
    }

    /// Ambient dimension fixed by the family, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Self::L1 | Self::L2 => None,
            Self::GroupLasso { groups } => Some(groups.dim()),
            Self::Nuclear { shape } => Some(shape.dim()),
        }
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(p) if p != len => Err(Error::DimensionMismatch { context: self.name(), expected: p, found: len }),
            _ => Ok(()),
        }
    }

    /// `‖x‖`.
    pub fn eval<T: Real>(&self, x: &[T]) -> Result<T> {
        self.check_dim(x.len())?;
        Ok(match self {
            Self::L1 => x.iter().map(|v| v.abs()).sum(),
            Self::L2 => norm2(x),
            Self::GroupLasso { groups } => (0..groups.len()).map(|g| groups.group_norm(x, g)).sum(),
            Self::Nuclear { shape } => singular_values(&shape.reshape(x))?.into_iter().sum(),
        })
    }

    /// `‖x‖* = sup_{‖v‖ ≤ 1} ⟨x, v⟩`.
    pub fn dual_eval<T: Real>(&self, x: &[T]) -> Result<T> {
        self.check_dim(x.len())?;
        Ok(match self {
            Self::L1 => x.iter().fold(T::zero(), |m, v| m.max(v.abs())),
            Self::L2 => norm2(x),
            Self::GroupLasso { groups } => {
                (0..groups.len()).fold(T::zero(), |m, g| m.max(groups.group_norm(x, g)))
            }
            Self::Nuclear { shape } => {
                singular_values(&shape.reshape(x))?.first().copied().unwrap_or_else(T::zero)
            }
        })
    }

    /// `argmin_z ½‖z − x‖₂² + τ‖z‖`.
    pub fn prox<T: Real>(&self, x: &[T], tau: T) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        if !(tau >= T::zero()) {
            return Err(Error::InvalidArgument(format!("prox step must be nonnegative, got {tau}")));
        }
        Ok(match self {
            Self::L1 => x.iter().map(|&v| soft_threshold(v, tau)).collect(),
            Self::L2 => shrink_block(x, tau),
            Self::GroupLasso { groups } => {
                let mut out = x.to_vec();
                for g in 0..groups.len() {
                    let nrm = groups.group_norm(x, g);
                    let scale = if nrm > tau { T::one() - tau / nrm } else { T::zero() };
                    for &j in &groups.groups()[g] {
                        out[j] = x[j] * scale;
                    }
                }
                out
            }
            Self::Nuclear { shape } => {
                let svd = Svd::new(&shape.reshape(x))?;
                let d: Vec<T> = svd.s.iter().map(|&s| (s - tau).max(T::zero())).collect();
                svd.recompose(&d).into_vec()
            }
        })
    }

    /// Euclidean projection onto `{‖v‖* ≤ radius}`.
    pub fn project_dual_ball<T: Real>(&self, x: &[T], radius: T) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        Ok(match self {
            Self::L1 => x.iter().map(|&v| v.max(-radius).min(radius)).collect(),
            Self::L2 => clip_block(x, radius),
            Self::GroupLasso { groups } => {
                let mut out = x.to_vec();
                for g in 0..groups.len() {
                    let nrm = groups.group_norm(x, g);
                    if nrm > radius {
                        let s = radius / nrm;
                        for &j in &groups.groups()[g] {
                            out[j] = x[j] * s;
                        }
                    }
                }
                out
            }
            Self::Nuclear { shape } => {
                let svd = Svd::new(&shape.reshape(x))?;
                let d: Vec<T> = svd.s.iter().map(|&s| s.min(radius)).collect();
                svd.recompose(&d).into_vec()
            }
        })
    }

    /// Euclidean projection onto `{‖v‖ ≤ radius}`.
    pub fn project_ball<T: Real>(&self, x: &[T], radius: T) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        Ok(match self {
            Self::L1 => project_l1_ball(x, radius),
            Self::L2 => clip_block(x, radius),
            Self::GroupLasso { groups } => {
                let norms: Vec<T> = (0..groups.len()).map(|g| groups.group_norm(x, g)).collect();
                let target = project_l1_ball(&norms, radius);
                let mut out = x.to_vec();
                for (g, (&nrm, &t)) in norms.iter().zip(&target).enumerate() {
                    let s = if nrm > T::zero() { t / nrm } else { T::zero() };
                    for &j in &groups.groups()[g] {
                        out[j] = x[j] * s;
                    }
                }
                out
            }
            Self::Nuclear { shape } => {
                let svd = Svd::new(&shape.reshape(x))?;
                let d = project_l1_ball(&svd.s, radius);
                svd.recompose(&d).into_vec()
            }
        })
    }

    /// A vector `v` with `‖v‖ ≤ 1` and `⟨x, v⟩ = ‖x‖*`.
    ///
    /// This is also an element of the subdifferential of `‖·‖*` at `x`.
    /// Returns the zero vector for `x = 0`.
    pub fn norming_vector<T: Real>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        let mut v = vec![T::zero(); x.len()];
        match self {
            Self::L1 => {
                let (j, m) = x.iter().enumerate().fold((0, T::zero()), |(bj, bm), (j, &xj)| {
                    if xj.abs() > bm {
                        (j, xj.abs())
                    } else {
                        (bj, bm)
                    }
                });
                if m > T::zero() {
                    v[j] = x[j].sign0();
                }
            }
            Self::L2 => {
                let n = norm2(x);
                if n > T::zero() {
                    v.iter_mut().zip(x).for_each(|(vi, &xi)| *vi = xi / n);
                }
            }
            Self::GroupLasso { groups } => {
                let (best, m) = (0..groups.len()).fold((0, T::zero()), |(bg, bm), g| {
                    let n = groups.group_norm(x, g);
                    if n > bm {
                        (g, n)
                    } else {
                        (bg, bm)
                    }
                });
                if m > T::zero() {
                    for &j in &groups.groups()[best] {
                        v[j] = x[j] / m;
                    }
                }
            }
            Self::Nuclear { shape } => {
                let svd = Svd::new(&shape.reshape(x))?;
                if svd.s.first().is_some_and(|&s| s > T::zero()) {
                    let mut d = vec![T::zero(); svd.s.len()];
                    d[0] = T::one();
                    v = svd.recompose(&d).into_vec();
                }
            }
        }
        Ok(v)
    }

    pub fn inner<T: Real>(a: &[T], b: &[T]) -> T {
        dot(a, b)
    }
}

#[inline]
pub(crate) fn soft_threshold<T: Real>(v: T, tau: T) -> T {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        T::zero()
    }
}

fn shrink_block<T: Real>(x: &[T], tau: T) -> Vec<T> {
    let n = norm2(x);
    let s = if n > tau { T::one() - tau / n } else { T::zero() };
    x.iter().map(|&v| v * s).collect()
}

fn clip_block<T: Real>(x: &[T], radius: T) -> Vec<T> {
    let n = norm2(x);
    if n <= radius {
        x.to_vec()
    } else {
        let s = radius / n;
        x.iter().map(|&v| v * s).collect()
    }
}

/// Euclidean projection onto the ℓ1 ball by the sort-and-threshold rule.
pub fn project_l1_ball<T: Real>(x: &[T], radius: T) -> Vec<T> {
    let l1: T = x.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return x.to_vec();
    }
    if radius <= T::zero() {
        return vec![T::zero(); x.len()];
    }
    let mut mags: Vec<T> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (k, &m) in mags.iter().enumerate() {
        cum = cum + m;
        let t = (cum - radius) / T::from_usize_lossy(k + 1);
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    x.iter().map(|&v| soft_threshold(v, theta)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn groups12_3() -> NormFamily {
        NormFamily::group_lasso(GroupPartition::new(vec![vec![0, 1], vec![2]]).unwrap())
    }

    #[test]
    fn eval_examples() {
        assert_eq!(NormFamily::L1.eval(&[1.0, -3.0, 2.0]).unwrap(), 6.0);
        assert_eq!(groups12_3().eval(&[3.0, 4.0, 5.0]).unwrap(), 10.0);
        let nuc = NormFamily::nuclear(2, 2).unwrap();
        assert!(close(nuc.eval(&[1.0, 0.0, 0.0, 1.0]).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn dual_eval_examples() {
        assert_eq!(NormFamily::L1.dual_eval(&[1.0, -3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(groups12_3().dual_eval(&[3.0, 4.0, 5.0]).unwrap(), 5.0);
        let nuc = NormFamily::nuclear(2, 2).unwrap();
        assert!(close(nuc.dual_eval(&[2.0, 0.0, 0.0, 1.0]).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn prox_examples() {
        assert_eq!(NormFamily::L1.prox(&[3.0], 1.0).unwrap(), vec![2.0]);
        assert_eq!(NormFamily::L1.prox(&[0.5], 1.0).unwrap(), vec![0.0]);
        let nuc = NormFamily::nuclear(2, 2).unwrap();
        let z = nuc.prox(&[3.0, 0.0, 0.0, 0.5], 1.0).unwrap();
        for (a, b) in z.iter().zip([2.0, 0.0, 0.0, 0.0]) {
            assert!(close(*a, b, 1e-14));
        }
        let g = NormFamily::group_lasso(GroupPartition::new(vec![vec![0, 1]]).unwrap());
        let z = g.prox(&[3.0, 4.0], 1.0).unwrap();
        assert!(close(z[0], 2.4, 1e-14) && close(z[1], 3.2, 1e-14));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(groups12_3().eval(&[1.0, 2.0]).is_err());
        assert!(NormFamily::nuclear(2, 3).unwrap().dual_eval(&[1.0; 5]).is_err());
        assert!(NormFamily::L1.prox(&[1.0], -1.0).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(GroupPartition::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(GroupPartition::new(vec![vec![0, 2]]).is_err());
        assert!(GroupPartition::new(vec![vec![0], vec![]]).is_err());
        let p = GroupPartition::contiguous(12, 4).unwrap();
        assert_eq!(p.len(), 3);
        assert!(GroupPartition::contiguous(10, 4).is_err());
    }

    #[test]
    fn l1_ball_projection() {
        let p = project_l1_ball(&[3.0, -1.0, 0.5], 2.0);
        assert!(close(p[0], 2.0, 1e-15) && p[1] == 0.0 && p[2] == 0.0);
        let p = project_l1_ball(&[1.0, 1.0], 1.0);
        assert!(close(p[0], 0.5, 1e-15) && close(p[1], 0.5, 1e-15));
        let inside = [0.2, -0.3];
        assert_eq!(project_l1_ball(&inside, 1.0), inside.to_vec());
    }

    #[test]
    fn norming_vectors_attain_the_dual_norm() {
        let x = [0.3, -2.0, 1.0, 0.5];
        let fams = [
            NormFamily::L1,
            NormFamily::L2,
            NormFamily::group_lasso(GroupPartition::contiguous(4, 2).unwrap()),
            NormFamily::nuclear(2, 2).unwrap(),
        ];
        for f in &fams {
            let v = f.norming_vector(&x).unwrap();
            assert!(f.eval(&v).unwrap() <= 1.0 + 1e-12, "{}", f.name());
            assert!(close(dot(&x, &v), f.dual_eval(&x).unwrap(), 1e-12), "{}", f.name());
        }
    }

    #[test]
    fn works_in_single_precision() {
        let x = [3.0f32, -0.25, 1.5];
        assert_eq!(NormFamily::L1.prox(&x, 1.0f32).unwrap(), vec![2.0, 0.0, 0.5]);
        let nuc = NormFamily::nuclear(1, 3).unwrap();
        let n = nuc.eval(&x).unwrap();
        assert!((n - NormFamily::L2.eval(&x).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn serde_shape() {
        let f = groups12_3();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"kind":"group_lasso","groups":[[0,1],[2]]}"#);
        let back: NormFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<NormFamily>(r#"{"kind":"group_lasso","groups":[[0,0]]}"#).is_err());
    }
}
