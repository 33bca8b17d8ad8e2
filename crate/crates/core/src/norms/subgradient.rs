//! Explicit elements of the subdifferential of a norm at a fixed base point.

use super::NormFamily;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Svd};
use crate::scalar::{norm2, Real};

/// Relative cutoff below which singular values of the base point count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
enum Support<T> {
    Coordinates(Vec<bool>),
    Groups { active: Vec<bool>, unit: Vec<T> },
    Ball { unit: Option<Vec<T>> },
    Spectral { u: Matrix<T>, v: Matrix<T> },
}

/// Subdifferential data of `‖·‖` at a base point `h*`.
#[derive(Debug, Clone)]
pub struct SubgradientSpec<T> {
    norm: NormFamily,
    base: Vec<T>,
    support: Support<T>,
}

impl<T: Real> SubgradientSpec<T> {
    pub fn new(norm: &NormFamily, base: &[T]) -> Result<Self> {
        norm.check_dim(base.len())?;
        let support = match norm {
            NormFamily::L1 => Support::Coordinates(base.iter().map(|v| *v != T::zero()).collect()),
            NormFamily::L2 => {
                let n = norm2(base);
                Support::Ball { unit: (n > T::zero()).then(|| base.iter().map(|&v| v / n).collect()) }
            }
            NormFamily::GroupLasso { groups } => {
                let mut active = vec![false; groups.len()];
                let mut unit = vec![T::zero(); base.len()];
                for (g, idx) in groups.groups().iter().enumerate() {
                    let n = groups.group_norm(base, g);
                    if n > T::zero() {
                        active[g] = true;
                        for &j in idx {
                            unit[j] = base[j] / n;
                        }
                    }
                }
                Support::Groups { active, unit }
            }
            NormFamily::Nuclear { shape } => {
                let svd = Svd::new(&shape.reshape(base))?;
                let r = svd.rank(T::lit(RANK_TOL));
                let keep: Vec<usize> = (0..r).collect();
                Support::Spectral { u: svd.u.select_columns(&keep), v: svd.v.select_columns(&keep) }
            }
        };
        Ok(Self { norm: norm.clone(), base: base.to_vec(), support })
    }

    pub fn norm(&self) -> &NormFamily {
        &self.norm
    }

    pub fn base_point(&self) -> &[T] {
        &self.base
    }

    /// Sparsity of the base point: support size (L1), number of active groups
    /// (group Lasso), rank (nuclear), or `1` / `0` for ℓ2.
    pub fn sparsity(&self) -> usize {
        match &self.support {
            Support::Coordinates(s) => s.iter().filter(|&&b| b).count(),
            Support::Groups { active, .. } => active.iter().filter(|&&b| b).count(),
            Support::Ball { unit } => usize::from(unit.is_some()),
            Support::Spectral { u, .. } => u.cols(),
        }
    }

    /// Support indices for L1, active group indices for group Lasso.
    pub fn support_indices(&self) -> Vec<usize> {
        match &self.support {
            Support::Coordinates(s) => s.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
            Support::Groups { active, .. } => {
                active.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
            }
            _ => Vec::new(),
        }
    }

    /// The `h`-dependent subgradient that makes `⟨g, h⟩` as large as possible
    /// off the support.
    pub fn lower(&self, h: &[T]) -> Result<Vec<T>> {
        self.construct(h, true)
    }

    /// The subgradient used to bound `⟨g, h⟩` from above.
    pub fn upper(&self, h: &[T]) -> Result<Vec<T>> {
        self.construct(h, false)
    }

    fn construct(&self, h: &[T], lower: bool) -> Result<Vec<T>> {
        if h.len() != self.base.len() {
            return Err(Error::DimensionMismatch {
                context: "subgradient direction",
                expected: self.base.len(),
                found: h.len(),
            });
        }
        Ok(match (&self.support, &self.norm) {
            (Support::Coordinates(on), _) => {
                let flip = if lower { T::one() } else { -T::one() };
                on.iter()
                    .zip(&self.base)
                    .zip(h)
                    .map(|((&on, &b), &hi)| if on { b.sign0() } else { flip * hi.sign0() })
                    .collect()
            }
            (Support::Ball { unit: Some(u) }, _) => u.clone(),
            (Support::Ball { unit: None }, _) => {
                let n = norm2(h);
                let s = if n > T::zero() { T::one() / n } else { T::zero() };
                let s = if lower { s } else { -s };
                h.iter().map(|&v| v * s).collect()
            }
            (Support::Groups { active, unit }, NormFamily::GroupLasso { groups }) => {
                let mut g = unit.clone();
                if lower {
                    for (gi, idx) in groups.groups().iter().enumerate() {
                        if active[gi] {
                            continue;
                        }
                        let n = groups.group_norm(h, gi);
                        if n > T::zero() {
                            for &j in idx {
                                g[j] = h[j] / n;
                            }
                        }
                    }
                }
                g
            }
            (Support::Spectral { u, v }, NormFamily::Nuclear { shape }) => {
                let mut g = u.matmul(&v.transpose());
                if lower {
                    let w = polar_of_complement(&shape.reshape(h), u, v)?;
                    for (a, b) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
                        *a = *a + *b;
                    }
                }
                g.into_vec()
            }
            _ => unreachable!("support kind always matches the norm family"),
        })
    }
}

/// Free-function form of [`SubgradientSpec::lower`].
pub fn subgradient_lower<T: Real>(spec: &SubgradientSpec<T>, h: &[T]) -> Result<Vec<T>> {
    spec.lower(h)
}

/// Free-function form of [`SubgradientSpec::upper`].
pub fn subgradient_upper<T: Real>(spec: &SubgradientSpec<T>, h: &[T]) -> Result<Vec<T>> {
    spec.upper(h)
}

/// Polar factor of `(I − UUᵀ) H (I − VVᵀ)`, restricted to its numerical range.
///
/// Its singular vectors are orthogonal to `U` and `V`, so adding it to `UVᵀ`
/// keeps the operator norm at one while maximizing the inner product with `H`.
fn polar_of_complement<T: Real>(h: &Matrix<T>, u: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    let mut p = h.clone();
    if u.cols() > 0 {
        // P ← P − U (Uᵀ P)
        let utp = u.transpose().matmul(&p);
        let corr = u.matmul(&utp);
        sub_in_place(&mut p, &corr);
        // P ← P − (P V) Vᵀ
        let pv = p.matmul(v);
        let corr = pv.matmul(&v.transpose());
        sub_in_place(&mut p, &corr);
    }
    let (m, n) = p.shape();
    if p.frobenius() <= T::lit(1e-12) * h.frobenius() {
        return Ok(Matrix::zeros(m, n));
    }
    let svd = Svd::new(&p)?;
    let top = svd.s.first().copied().unwrap_or_else(T::zero);
    let d: Vec<T> = svd
        .s
        .iter()
        .map(|&s| if s > T::lit(RANK_TOL) * top { T::one() } else { T::zero() })
        .collect();
    Ok(svd.recompose(&d))
}

fn sub_in_place<T: Real>(a: &mut Matrix<T>, b: &Matrix<T>) {
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x = *x - *y;
    }
}
