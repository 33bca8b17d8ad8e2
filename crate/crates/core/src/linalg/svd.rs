//! Thin singular value decomposition.
//!
//! Householder reduction to bidiagonal form followed by implicitly shifted QR
//! sweeps on the bidiagonal (Golub–Reinsch). Output conventions:
//!
//! * singular values sorted in descending order;
//! * the first nonzero entry of every left singular vector is positive, the
//!   matching right vector is flipped with it.

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 75;

/// `A = U diag(s) Vᵀ` with `U: m×k`, `V: n×k`, `k = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Ok(Self { u: Matrix::zeros(m, 0), s: Vec::new(), v: Matrix::zeros(n, 0) });
        }
        let (mut u, mut s, mut v) = if m >= n {
            golub_reinsch(a.clone(), true)?
        } else {
            let (u, s, v) = golub_reinsch(a.transpose(), true)?;
            (v, s, u)
        };
        sort_and_fix_signs(&mut u, &mut s, &mut v);
        Ok(Self { u, s, v })
    }

    pub fn rank(&self, rel_tol: T) -> usize {
        let top = self.s.first().copied().unwrap_or_else(T::zero);
        self.s.iter().filter(|&&x| x > rel_tol * top).count()
    }

    /// `U diag(d) Vᵀ` for a replacement spectrum `d`.
    pub fn recompose(&self, d: &[T]) -> Matrix<T> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for (k, &dk) in d.iter().enumerate() {
            if dk == T::zero() {
                continue;
            }
            for i in 0..m {
                let a = self.u[(i, k)] * dk;
                if a == T::zero() {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, r) in row.iter_mut().enumerate() {
                    *r = *r + a * self.v[(j, k)];
                }
            }
        }
        out
    }
}

/// Singular values only, descending.
pub fn singular_values<T: Real>(a: &Matrix<T>) -> Result<Vec<T>> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let (_, mut s, _) = golub_reinsch(if m >= n { a.clone() } else { a.transpose() }, false)?;
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Requires `m >= n`. Returns `(U m×n, w, V n×n)`; without `vectors` the
/// two factors are left unaccumulated.
#[allow(clippy::many_single_char_names)]
fn golub_reinsch<T: Real>(mut u: Matrix<T>, vectors: bool) -> Result<(Matrix<T>, Vec<T>, Matrix<T>)> {
    let (m, n) = u.shape();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    let eps = T::epsilon();
    let mut w = vec![zero; n];
    let mut v = Matrix::zeros(n, n);
    let mut rv1 = vec![zero; n];

    let (mut g, mut scale, mut anorm) = (zero, zero, zero);
    let mut l = 0usize;

    // Householder reduction to bidiagonal form.
    for i in 0..n {
        l = i + 1;
        rv1[i] = scale * g;
        g = zero;
        let mut s = zero;
        scale = zero;
        for k in i..m {
            scale = scale + u[(k, i)].abs();
        }
        if scale != zero {
            for k in i..m {
                u[(k, i)] = u[(k, i)] / scale;
                s = s + u[(k, i)] * u[(k, i)];
            }
            let f = u[(i, i)];
            g = -sign(s.sqrt(), f);
            let h = f * g - s;
            u[(i, i)] = f - g;
            for j in l..n {
                let mut s = zero;
                for k in i..m {
                    s = s + u[(k, i)] * u[(k, j)];
                }
                let f = s / h;
                for k in i..m {
                    u[(k, j)] = u[(k, j)] + f * u[(k, i)];
                }
            }
            for k in i..m {
                u[(k, i)] = u[(k, i)] * scale;
            }
        }
        w[i] = scale * g;
        g = zero;
        s = zero;
        scale = zero;
        if i != n - 1 {
            for k in l..n {
                scale = scale + u[(i, k)].abs();
            }
            if scale != zero {
                for k in l..n {
                    u[(i, k)] = u[(i, k)] / scale;
                    s = s + u[(i, k)] * u[(i, k)];
                }
                let f = u[(i, l)];
                g = -sign(s.sqrt(), f);
                let h = f * g - s;
                u[(i, l)] = f - g;
                for k in l..n {
                    rv1[k] = u[(i, k)] / h;
                }
                for j in l..m {
                    let mut s = zero;
                    for k in l..n {
                        s = s + u[(j, k)] * u[(i, k)];
                    }
                    for k in l..n {
                        u[(j, k)] = u[(j, k)] + s * rv1[k];
                    }
                }
                for k in l..n {
                    u[(i, k)] = u[(i, k)] * scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    // Accumulate right-hand transformations.
    for i in (0..n).rev().filter(|_| vectors) {
        if i < n - 1 {
            if g != zero {
                for j in l..n {
                    v[(j, i)] = (u[(i, j)] / u[(i, l)]) / g;
                }
                for j in l..n {
                    let mut s = zero;
                    for k in l..n {
                        s = s + u[(i, k)] * v[(k, j)];
                    }
                    for k in l..n {
                        v[(k, j)] = v[(k, j)] + s * v[(k, i)];
                    }
                }
            }
            for j in l..n {
                v[(i, j)] = zero;
                v[(j, i)] = zero;
            }
        }
        v[(i, i)] = one;
        g = rv1[i];
        l = i;
    }

    // Accumulate left-hand transformations.
    for i in (0..n).rev().filter(|_| vectors) {
        let l = i + 1;
        let mut g = w[i];
        for j in l..n {
            u[(i, j)] = zero;
        }
        if g != zero {
            g = one / g;
            for j in l..n {
                let mut s = zero;
                for k in l..m {
                    s = s + u[(k, i)] * u[(k, j)];
                }
                let f = (s / u[(i, i)]) * g;
                for k in i..m {
                    u[(k, j)] = u[(k, j)] + f * u[(k, i)];
                }
            }
            for j in i..m {
                u[(j, i)] = u[(j, i)] * g;
            }
        } else {
            for j in i..m {
                u[(j, i)] = zero;
            }
        }
        u[(i, i)] = u[(i, i)] + one;
    }

    // Diagonalize the bidiagonal form.
    for k in (0..n).rev() {
        let mut its = 0;
        loop {
            let mut flag = true;
            let mut l = k;
            loop {
                if l == 0 || rv1[l].abs() <= eps * anorm {
                    flag = false;
                    break;
                }
                if w[l - 1].abs() <= eps * anorm {
                    break;
                }
                l -= 1;
            }
            if flag {
                // cancellation of rv1[l]
                let nm = l - 1;
                let mut c = zero;
                let mut s = one;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] = c * rv1[i];
                    if f.abs() <= eps * anorm {
                        break;
                    }
                    let g = w[i];
                    let h = f.hypot(g);
                    w[i] = h;
                    let hinv = one / h;
                    c = g * hinv;
                    s = -f * hinv;
                    for j in (0..m).filter(|_| vectors) {
                        let y = u[(j, nm)];
                        let z = u[(j, i)];
                        u[(j, nm)] = y * c + z * s;
                        u[(j, i)] = z * c - y * s;
                    }
                }
            }
            let z = w[k];
            if l == k {
                if z < zero {
                    w[k] = -z;
                    for j in (0..n).filter(|_| vectors) {
                        v[(j, k)] = -v[(j, k)];
                    }
                }
                break;
            }
            its += 1;
            if its > MAX_SWEEPS {
                return Err(Error::NumericalBreakdown("svd did not converge"));
            }
            // Wilkinson-type shift from the bottom 2x2 minor.
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (two * h * y);
            g = f.hypot(one);
            f = ((x - z) * (x + z) + h * ((y / (f + sign(g, f))) - h)) / x;
            let mut c = one;
            let mut s = one;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                y = w[i];
                h = s * g;
                g = c * g;
                let mut z = f.hypot(h);
                rv1[j] = z;
                c = f / z;
                s = h / z;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y = y * c;
                for jj in (0..n).filter(|_| vectors) {
                    let x = v[(jj, j)];
                    let z = v[(jj, i)];
                    v[(jj, j)] = x * c + z * s;
                    v[(jj, i)] = z * c - x * s;
                }
                z = f.hypot(h);
                w[j] = z;
                if z != zero {
                    let zinv = one / z;
                    c = f * zinv;
                    s = h * zinv;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                for jj in (0..m).filter(|_| vectors) {
                    let y = u[(jj, j)];
                    let z = u[(jj, i)];
                    u[(jj, j)] = y * c + z * s;
                    u[(jj, i)] = z * c - y * s;
                }
            }
            rv1[l] = zero;
            rv1[k] = f;
            w[k] = x;
        }
    }
    Ok((u, w, v))
}

fn sort_and_fix_signs<T: Real>(u: &mut Matrix<T>, s: &mut Vec<T>, v: &mut Matrix<T>) {
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    // stable: ties keep their original column order
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let (m, n) = (u.rows(), v.rows());
    let mut nu = Matrix::zeros(m, k);
    let mut nv = Matrix::zeros(n, k);
    let mut ns = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        ns.push(s[src]);
        let flip = (0..m)
            .map(|i| u[(i, src)])
            .find(|x| *x != T::zero())
            .is_some_and(|x| x < T::zero());
        let sgn = if flip { -T::one() } else { T::one() };
        for i in 0..m {
            nu[(i, dst)] = sgn * u[(i, src)];
        }
        for j in 0..n {
            nv[(j, dst)] = sgn * v[(j, src)];
        }
    }
    *u = nu;
    *v = nv;
    *s = ns;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_reconstruction(a: &Matrix<f64>, tol: f64) {
        let svd = Svd::new(a).unwrap();
        let back = svd.recompose(&svd.s);
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
        for w in svd.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let k = svd.s.len();
        let utu = svd.u.transpose().matmul(&svd.u);
        let vtv = svd.v.transpose().matmul(&svd.v);
        for i in 0..k {
            for j in 0..k {
                let e = if i == j { 1.0 } else { 0.0 };
                if svd.s[i] > 1e-12 && svd.s[j] > 1e-12 {
                    assert!((utu[(i, j)] - e).abs() < tol);
                }
                assert!((vtv[(i, j)] - e).abs() < tol);
            }
        }
        for c in 0..k {
            let first = (0..a.rows()).map(|i| svd.u[(i, c)]).find(|x| *x != 0.0);
            if let Some(f) = first {
                assert!(f > 0.0);
            }
        }
    }

    #[test]
    fn diagonal_and_rectangular_cases() {
        let d = Matrix::from_diag(&[1.0, 3.0, 2.0]);
        let svd = Svd::new(&d).unwrap();
        assert_eq!(svd.s, vec![3.0, 2.0, 1.0]);
        check_reconstruction(&d, 1e-13);

        let tall = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        check_reconstruction(&tall, 1e-12);
        check_reconstruction(&tall.transpose(), 1e-12);

        let rank1 = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        let svd = Svd::new(&rank1).unwrap();
        assert_eq!(svd.rank(1e-10), 1);
        assert!((svd.s[0] - 70f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let z = Matrix::<f64>::zeros(3, 2);
        let svd = Svd::new(&z).unwrap();
        assert_eq!(svd.s, vec![0.0, 0.0]);
    }

    #[test]
    fn pseudo_random_matrices() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for &(m, n) in &[(5, 5), (7, 3), (3, 8), (12, 12), (1, 4), (4, 1)] {
            let data = (0..m * n).map(|_| next()).collect();
            let a = Matrix::from_vec(m, n, data).unwrap();
            check_reconstruction(&a, 1e-12);
        }
    }
}
