mod common;

use common::*;
use minnorm::solvers::*;
use minnorm::{Error, GroupPartition, Matrix, NormFamily};

fn families(p: usize) -> Vec<NormFamily> {
    vec![
        NormFamily::L1,
        NormFamily::L2,
        NormFamily::group_lasso(GroupPartition::contiguous(p, 3).unwrap()),
        NormFamily::nuclear(3, p / 3).unwrap(),
    ]
}

#[test]
fn basis_pursuit_matches_vertex_enumeration() {
    let mut r = rng(11);
    for trial in 0..20 {
        let (n, p) = (3 + trial % 3, 10);
        let x = gauss_matrix(&mut r, n, p);
        let y = gauss_vec(&mut r, n);
        let (opt, _) = basis_pursuit_by_enumeration(&x, &y);
        let inst = ProblemInstance::new(x, y).unwrap();
        let res = solve_min_norm(&inst, &NormFamily::L1, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!((l1(&res.estimate) - opt).abs() <= 1e-8 * opt, "trial {trial}: {} vs {opt}", l1(&res.estimate));
        assert!(res.constraint_residual <= 1e-8);
    }
}

#[test]
fn min_l2_matches_pseudoinverse() {
    let mut r = rng(12);
    for _ in 0..10 {
        let x = gauss_matrix(&mut r, 6, 20);
        let y = gauss_vec(&mut r, 6);
        let pinv = to_na(&x).pseudo_inverse(1e-12).unwrap();
        let want = &pinv * nalgebra::DVector::from_column_slice(&y);
        let inst = ProblemInstance::new(x, y).unwrap();
        for res in [solve_min_l2_closed_form(&inst).unwrap(), solve_min_norm(&inst, &NormFamily::L2, &SolverConfig::default()).unwrap()] {
            let d: Vec<f64> = res.estimate.iter().zip(want.iter()).map(|(a, b)| a - b).collect();
            assert!(l2(&d) <= 1e-8 * want.norm());
        }
    }
}

#[test]
fn single_row_min_norm_is_y_over_dual_norm() {
    // min ‖h‖ s.t. ⟨x, h⟩ = y equals |y| / ‖x‖*
    let mut r = rng(13);
    for norm in families(12) {
        for _ in 0..5 {
            let x = gauss_matrix(&mut r, 1, 12);
            let y = 1.0 + gauss_vec(&mut r, 1)[0].abs();
            let dual = match &norm {
                NormFamily::L1 => linf(x.row(0)),
                NormFamily::L2 => l2(x.row(0)),
                NormFamily::GroupLasso { groups } => group_dual(x.row(0), groups.groups()),
                NormFamily::Nuclear { shape } => singular_values(x.row(0), shape.rows, shape.cols)[0],
            };
            let inst = ProblemInstance::new(x, vec![y]).unwrap();
            let res = solve_min_norm(&inst, &norm, &SolverConfig::default()).unwrap();
            assert!((res.objective - y / dual).abs() <= 1e-7 * (y / dual), "{}: {} vs {}", norm.name(), res.objective, y / dual);
        }
    }
}

#[test]
fn fixture_two_columns() {
    let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
    let inst = ProblemInstance::new(x, vec![2.0]).unwrap();
    let l1 = solve_min_norm(&inst, &NormFamily::L1, &SolverConfig::default()).unwrap();
    assert!(l2(&diff(&l1.estimate, &[0.0, 1.0])) < 1e-9);
    let l2s = solve_min_norm(&inst, &NormFamily::L2, &SolverConfig::default()).unwrap();
    assert!(l2(&diff(&l2s.estimate, &[0.4, 0.8])) < 1e-9);
}

#[test]
fn interpolator_dual_certifies_optimality() {
    let mut r = rng(14);
    for norm in families(24) {
        let x = gauss_matrix(&mut r, 5, 24);
        let y = gauss_vec(&mut r, 5);
        let inst = ProblemInstance::new(x.clone(), y.clone()).unwrap();
        let res = solve_min_norm(&inst, &norm, &SolverConfig::default()).unwrap();
        let w = res.dual.clone().expect("dual vector");
        let dual_norm = norm.dual_eval(&x.matvec_t(&w)).unwrap();
        let value: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / dual_norm.max(1.0);
        assert!((value - res.objective).abs() <= 1e-6 * res.objective, "{}: {value} vs {}", norm.name(), res.objective);
    }
}

#[test]
fn underparameterized_is_rejected() {
    let mut r = rng(15);
    let x = gauss_matrix(&mut r, 5, 3);
    let inst = ProblemInstance::new(x, vec![1.0; 5]).unwrap();
    assert!(matches!(solve_min_norm(&inst, &NormFamily::L1, &SolverConfig::default()), Err(Error::Underparameterized { .. })));
}

#[test]
fn rank_deficient_is_rejected() {
    let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
    let inst = ProblemInstance::new(x, vec![1.0, 1.0]).unwrap();
    assert!(matches!(solve_min_norm(&inst, &NormFamily::L1, &SolverConfig::default()), Err(Error::RankDeficient { .. })));
}

/// Design with `XᵀX = n I`, for which the penalized problem separates.
fn orthogonal_design(r: &mut rand_chacha::ChaCha20Rng, n: usize, p: usize) -> Matrix<f64> {
    let g = to_na(&gauss_matrix(r, n, p));
    let q = g.qr().q();
    let scale = (n as f64).sqrt();
    let mut out = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            out[(i, j)] = scale * q[(i, j)];
        }
    }
    out
}

#[test]
fn rerm_matches_separable_closed_forms() {
    // with XᵀX = nI: ĥ = prox_{λ‖·‖}(XᵀY/n), computed here independently
    let mut r = rng(16);
    let (n, p) = (20, 12);
    let lam = 0.15;
    for norm in families(p) {
        let x = orthogonal_design(&mut r, n, p);
        let y = gauss_vec(&mut r, n);
        let z: Vec<f64> = x.matvec_t(&y).iter().map(|v| v / n as f64).collect();
        let want: Vec<f64> = match &norm {
            NormFamily::L1 => z.iter().map(|v| v.signum() * (v.abs() - lam).max(0.0)).collect(),
            NormFamily::L2 => {
                let nz = l2(&z);
                z.iter().map(|v| v * (1.0 - lam / nz).max(0.0)).collect()
            }
            NormFamily::GroupLasso { groups } => {
                let mut out = vec![0.0; p];
                for g in groups.groups() {
                    let ng = g.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt();
                    for &j in g {
                        out[j] = z[j] * (1.0 - lam / ng).max(0.0);
                    }
                }
                out
            }
            NormFamily::Nuclear { shape } => {
                let svd = reshape(&z, shape.rows, shape.cols).svd(true, true);
                let s = svd.singular_values.map(|v| (v - lam).max(0.0));
                let m = svd.u.unwrap() * nalgebra::DMatrix::from_diagonal(&s) * svd.v_t.unwrap();
                (0..shape.rows).flat_map(|i| (0..shape.cols).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
            }
        };
        let inst = ProblemInstance::new(x, y).unwrap();
        let res = solve_rerm(&inst, &norm, lam, &SolverConfig::default()).unwrap();
        assert!(res.converged, "{}", norm.name());
        assert!(l2(&diff(&res.estimate, &want)) < 1e-7, "{}", norm.name());
    }
}

#[test]
fn rerm_objective_beats_perturbations() {
    let mut r = rng(17);
    let (n, p) = (8, 24);
    for norm in families(p) {
        let x = gauss_matrix(&mut r, n, p);
        let y = gauss_vec(&mut r, n);
        let lam = 0.05;
        let inst = ProblemInstance::new(x.clone(), y.clone()).unwrap();
        let res = solve_rerm(&inst, &norm, lam, &SolverConfig::default()).unwrap();
        let obj = |h: &[f64]| {
            let res = diff(&x.matvec(h), &y);
            res.iter().map(|v| v * v).sum::<f64>() / n as f64 + 2.0 * lam * norm.eval(h).unwrap()
        };
        let base = obj(&res.estimate);
        assert!((base - res.objective).abs() < 1e-10 * (1.0 + base));
        for k in 0..500 {
            let scale = 10f64.powi(-(k % 6) as i32);
            let d = gauss_vec(&mut r, p);
            let h: Vec<f64> = res.estimate.iter().zip(&d).map(|(a, b)| a + scale * b).collect();
            assert!(obj(&h) >= base - 1e-12, "{}", norm.name());
        }
    }
}

#[test]
fn rerm_above_lambda_max_is_zero() {
    let mut r = rng(18);
    let x = gauss_matrix(&mut r, 10, 30);
    let y = gauss_vec(&mut r, 10);
    let inst = ProblemInstance::new(x, y).unwrap();
    let lmax = l1_lambda_max(&inst);
    let res = solve_rerm(&inst, &NormFamily::L1, 1.01 * lmax, &SolverConfig::default()).unwrap();
    assert!(res.estimate.iter().all(|&v| v == 0.0));
    let res = solve_rerm(&inst, &NormFamily::L1, 0.9 * lmax, &SolverConfig::default()).unwrap();
    assert!(res.estimate.iter().any(|&v| v != 0.0));
}

#[test]
fn rerm_path_is_consistent_with_single_solves() {
    let mut r = rng(19);
    let x = gauss_matrix(&mut r, 10, 30);
    let y = gauss_vec(&mut r, 10);
    let inst = ProblemInstance::new(x, y).unwrap();
    let lams = [0.3, 0.1, 0.03, 0.01];
    let path = solve_rerm_path(&inst, &NormFamily::L1, &lams, &SolverConfig::default()).unwrap();
    for (lam, res) in lams.iter().zip(&path) {
        let single = solve_rerm(&inst, &NormFamily::L1, *lam, &SolverConfig::default()).unwrap();
        assert!(l2(&diff(&single.estimate, &res.estimate)) < 1e-7);
    }
}

#[test]
fn f32_solver_tracks_f64() {
    let mut r = rng(20);
    let x = gauss_matrix(&mut r, 4, 12);
    let y = gauss_vec(&mut r, 4);
    let inst = ProblemInstance::new(x.clone(), y.clone()).unwrap();
    let a = solve_min_norm(&inst, &NormFamily::L1, &SolverConfig::default()).unwrap();
    let xf = x.map(|v| v as f32);
    let yf: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let instf = ProblemInstance::new(xf, yf).unwrap();
    let b = solve_min_norm(&instf, &NormFamily::L1, &SolverConfig::default()).unwrap();
    assert!((a.objective - b.objective as f64).abs() < 1e-4 * a.objective);
}
