mod common;

use common::*;
use minnorm::complexity::*;
use minnorm::covariance::Covariance;
use minnorm::{Error, NormFamily, SubgradientSpec};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn r_star_for_the_euclidean_ball() {
    // identity Σ and ℓ2: both suprema equal ‖Zᵀε‖₂ ~ √n·χ_p, so for r ≥ 1
    // the fixed point is E‖Zᵀε‖₂/(γn)
    let (n, p, gamma) = (20, 100, 0.1);
    let est = estimate_r_star(&NormFamily::L2, &Covariance::identity(p), n, gamma, &RStarOptions { seed: 4, ..Default::default() }).unwrap();
    let want = chi_mean(p, (n as f64).sqrt()) / (gamma * n as f64);
    assert!(want > 1.0);
    assert!(est.boundary.is_none());
    assert!((est.value - want).abs() < 0.02 * want, "{} vs {want}", est.value);
}

#[test]
fn r_star_in_one_dimension() {
    // p = 1: ⟨Σεᵢzᵢ, h⟩ with |h| ≤ min(1, r); E|N(0, n)| = √(2n/π)
    let (n, gamma) = (30, 0.05);
    let est = estimate_r_star(&NormFamily::L1, &Covariance::identity(1), n, gamma, &RStarOptions { seed: 9, ..Default::default() }).unwrap();
    let want = (2.0 * n as f64 / std::f64::consts::PI).sqrt() / (gamma * n as f64);
    assert!((est.value - want).abs() < 0.03 * want, "{} vs {want}", est.value);
}

#[test]
fn r_star_grid_boundaries() {
    let tiny = RStarOptions { grid_min: 1e-6, grid_max: 1e-3, seed: 1, ..Default::default() };
    let est = estimate_r_star(&NormFamily::L2, &Covariance::identity(50), 10, 0.1, &tiny).unwrap();
    assert_eq!(est.boundary, Some(GridBoundary::Max));
    let huge = RStarOptions { grid_min: 1e3, grid_max: 1e4, seed: 1, ..Default::default() };
    let est = estimate_r_star(&NormFamily::L2, &Covariance::identity(50), 10, 0.1, &huge).unwrap();
    assert_eq!(est.boundary, Some(GridBoundary::Min));
}

#[test]
fn small_ball_matches_normal_tail() {
    let n = 20_000;
    let rep = estimate_small_ball(&Covariance::toeplitz(6, 0.6).unwrap(), n, 5).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let want = 2.0 * (1.0 - normal.cdf(KAPPA));
    let sd = (want * (1.0 - want) / n as f64).sqrt();
    assert!((rep.empirical_fraction - want).abs() < 4.0 * sd, "{} vs {want}", rep.empirical_fraction);
    assert!(want >= DELTA);
    assert!(rep.passed);
    assert!((DELTA - gaussian_small_ball_delta(KAPPA)).abs() < 1e-15);
}

/// Grid search over the cone for `p = 4`, support `{0}`.
fn re_by_grid(cov: &Covariance<f64>) -> f64 {
    let m = cov.to_matrix();
    let steps = 60;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                let b = [-3.0 + 6.0 * i as f64 / steps as f64, -3.0 + 6.0 * j as f64 / steps as f64, -3.0 + 6.0 * k as f64 / steps as f64];
                if l1(&b) > 3.0 {
                    continue;
                }
                let h = [1.0, b[0], b[1], b[2]];
                let mut q = 0.0;
                for a in 0..4 {
                    for c in 0..4 {
                        q += h[a] * m[(a, c)] * h[c];
                    }
                }
                best = best.min(q.sqrt());
            }
        }
    }
    best
}

#[test]
fn restricted_eigenvalue_matches_grid_search() {
    for rho in [0.3, 0.7, -0.5] {
        let cov = Covariance::toeplitz(4, rho).unwrap();
        let grid = re_by_grid(&cov);
        let est = restricted_eigenvalue(&cov, &[0], 8, 2).unwrap().value;
        // the grid value is an upper estimate with resolution 0.1
        assert!(est <= grid + 1e-9, "rho={rho}: {est} vs {grid}");
        assert!(est >= grid - 0.05, "rho={rho}: {est} vs {grid}");
    }
}

#[test]
fn spectral_tail_matches_eigen_decomposition() {
    let cov = Covariance::toeplitz(12, 0.4).unwrap();
    let mut eig: Vec<f64> = to_na(&cov.to_matrix()).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    for k in 1..=13 {
        let want: f64 = eig.iter().skip(k - 1).sum();
        assert!((spectral_tail(&cov, k) - want).abs() < 1e-10);
    }
}

#[test]
fn effective_rank_of_identity() {
    // r_k/λ_k = p − k + 1 for Σ = I
    let cov = Covariance::<f64>::identity(100);
    assert_eq!(effective_rank_kstar(&cov, 1.0, 10), Some(1));
    assert_eq!(effective_rank_kstar(&cov, 1.0, 95), Some(1));
    assert_eq!(effective_rank_kstar(&cov, 1.0, 100), None);
    assert_eq!(effective_rank_kstar(&cov, 0.5, 100), Some(1));
    assert_eq!(effective_rank_kstar(&cov, 1.0, 99), Some(1));
}

#[test]
fn theorem_one_leading_constant() {
    let inputs = TheoremInputs {
        n: Some(4.0),
        noise_norm: Some(2.0),
        truth_norm: Some(0.0),
        interpolated_noise_norm: Some(0.0),
        r_star: Some(1.0),
        kappa: Some(KAPPA),
        delta: Some(DELTA),
        ..Default::default()
    };
    // √8/(κ√δ) = √8·√3·3/√2 = 6√3
    let want = 6.0 * 3f64.sqrt();
    assert!((theorem_rhs(Theorem::T1a, &inputs).unwrap() - want).abs() < 1e-12);
    assert!(matches!(theorem_rhs(Theorem::T1b, &inputs), Err(Error::MissingInput("zeta"))));
}

#[test]
fn gap_candidates_respect_probes() {
    let p = 40;
    let mut truth = vec![0.0; p];
    truth[0] = 1.0;
    truth[1] = -1.0;
    let cov = Covariance::identity(p);
    let spec = SubgradientSpec::new(&NormFamily::L1, &truth).unwrap();
    let opts = GapOptions { probes: 2000, seed: 3, psi: None };
    let lo = delta_gap_lower(&spec, &cov, 0.05, &opts).unwrap();
    let up = delta_gap_upper(&spec, &cov, 0.05, &opts).unwrap();
    if let Some(e) = lo.probe_extreme {
        assert!(e >= lo.analytic.unwrap() - 1e-12);
    }
    if let Some(e) = up.probe_extreme {
        assert!(e <= up.analytic.unwrap() + 1e-12);
    }
    assert!((up.analytic.unwrap() - 2f64.sqrt() * 0.05).abs() < 1e-12);
}
