mod common;

use common::*;
use minnorm::{GroupPartition, NormFamily, SubgradientSpec};
use proptest::prelude::*;

fn families() -> Vec<(NormFamily, usize)> {
    vec![
        (NormFamily::L1, 9),
        (NormFamily::L2, 9),
        (NormFamily::group_lasso(GroupPartition::new(vec![vec![0, 4], vec![1, 2, 3], vec![5], vec![6, 7, 8]]).unwrap()), 9),
        (NormFamily::nuclear(3, 4).unwrap(), 12),
    ]
}

/// Independent evaluation of the norm and its dual.
fn oracle(norm: &NormFamily, v: &[f64]) -> (f64, f64) {
    match norm {
        NormFamily::L1 => (l1(v), linf(v)),
        NormFamily::L2 => (l2(v), l2(v)),
        NormFamily::GroupLasso { groups } => (group_norm(v, groups.groups()), group_dual(v, groups.groups())),
        NormFamily::Nuclear { shape } => {
            let s = singular_values(v, shape.rows, shape.cols);
            (s.iter().sum(), s[0])
        }
    }
}

#[test]
fn eval_and_dual_match_oracles() {
    let mut r = rng(1);
    for (norm, p) in families() {
        for _ in 0..200 {
            let v = gauss_vec(&mut r, p);
            let (a, b) = oracle(&norm, &v);
            assert!((norm.eval(&v).unwrap() - a).abs() <= 1e-12 * (1.0 + a), "{}", norm.name());
            assert!((norm.dual_eval(&v).unwrap() - b).abs() <= 1e-12 * (1.0 + b), "{}", norm.name());
        }
    }
}

#[test]
fn prox_satisfies_moreau_decomposition() {
    // x = prox_{τ‖·‖}(x) + Proj_{τB*}(x)
    let mut r = rng(2);
    for (norm, p) in families() {
        for k in 0..100 {
            let x = gauss_vec(&mut r, p);
            let tau = 0.1 + 0.05 * k as f64;
            let px = norm.prox(&x, tau).unwrap();
            let q = norm.project_dual_ball(&x, tau).unwrap();
            for j in 0..p {
                assert!((px[j] + q[j] - x[j]).abs() < 1e-12, "{}", norm.name());
            }
            assert!(oracle(&norm, &q).1 <= tau * (1.0 + 1e-12));
        }
    }
}

#[test]
fn ball_projection_is_feasible_and_nonexpansive() {
    let mut r = rng(3);
    for (norm, p) in families() {
        for _ in 0..100 {
            let x = gauss_vec(&mut r, p);
            let y = gauss_vec(&mut r, p);
            let px = norm.project_ball(&x, 0.7).unwrap();
            let py = norm.project_ball(&y, 0.7).unwrap();
            assert!(oracle(&norm, &px).0 <= 0.7 + 1e-10, "{}", norm.name());
            assert!(l2(&diff(&px, &py)) <= l2(&diff(&x, &y)) + 1e-12);
            // optimality: ⟨x − Px, z − Px⟩ ≤ 0 for feasible z
            let z = norm.project_ball(&gauss_vec(&mut r, p), 0.7).unwrap();
            let g = diff(&x, &px);
            let d = diff(&z, &px);
            let ip: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!(ip <= 1e-9, "{} {ip}", norm.name());
        }
    }
}

#[test]
fn norming_vector_attains_dual_norm() {
    let mut r = rng(4);
    for (norm, p) in families() {
        for _ in 0..50 {
            let x = gauss_vec(&mut r, p);
            let v = norm.norming_vector(&x).unwrap();
            let ip: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((oracle(&norm, &v).0 - 1.0).abs() < 1e-10, "{}", norm.name());
            assert!((ip - oracle(&norm, &x).1).abs() < 1e-10, "{}", norm.name());
        }
    }
}

#[test]
fn group_lasso_with_singletons_is_l1() {
    let groups = GroupPartition::contiguous(7, 1).unwrap();
    let g = NormFamily::group_lasso(groups);
    let mut r = rng(5);
    for _ in 0..20 {
        let x = gauss_vec(&mut r, 7);
        assert!((g.eval(&x).unwrap() - NormFamily::L1.eval(&x).unwrap()).abs() < 1e-12);
        let a = g.prox(&x, 0.4).unwrap();
        let b = NormFamily::L1.prox(&x, 0.4).unwrap();
        assert!(l2(&diff(&a, &b)) < 1e-14);
    }
}

#[test]
fn nuclear_prox_thresholds_singular_values() {
    let mut r = rng(6);
    let norm = NormFamily::nuclear(4, 3).unwrap();
    for _ in 0..30 {
        let x = gauss_vec(&mut r, 12);
        let px = norm.prox(&x, 0.8).unwrap();
        let want: Vec<f64> = singular_values(&x, 4, 3).iter().map(|s| (s - 0.8).max(0.0)).collect();
        let got = singular_values(&px, 4, 3);
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn subgradients_are_valid_and_attain_directional_derivative() {
    // ‖h* + t h‖ − ‖h*‖ ≈ t · max_{g ∈ ∂‖h*‖}⟨g, h⟩ for small t
    let mut r = rng(7);
    for (norm, p) in families() {
        let mut truth = vec![0.0; p];
        truth[0] = 2.0;
        truth[5] = -1.0;
        let spec = SubgradientSpec::new(&norm, &truth).unwrap();
        let (nt, _) = oracle(&norm, &truth);
        for _ in 0..30 {
            let h = gauss_vec(&mut r, p);
            for g in [spec.lower(&h).unwrap(), spec.upper(&h).unwrap()] {
                let ip: f64 = g.iter().zip(&truth).map(|(a, b)| a * b).sum();
                assert!((ip - nt).abs() < 1e-10, "{}", norm.name());
                assert!(oracle(&norm, &g).1 <= 1.0 + 1e-10, "{}", norm.name());
            }
            let t = 1e-7;
            let moved: Vec<f64> = truth.iter().zip(&h).map(|(a, b)| a + t * b).collect();
            let fd = (oracle(&norm, &moved).0 - nt) / t;
            let g = spec.lower(&h).unwrap();
            let ip: f64 = g.iter().zip(&h).map(|(a, b)| a * b).sum();
            assert!((fd - ip).abs() < 1e-4 * (1.0 + ip.abs()), "{} fd={fd} ip={ip}", norm.name());
        }
    }
}

#[test]
fn f32_matches_f64() {
    let mut r = rng(8);
    for (norm, p) in families() {
        let x = gauss_vec(&mut r, p);
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let a = norm.eval(&x).unwrap();
        let b = norm.eval(&xf).unwrap() as f64;
        assert!((a - b).abs() < 1e-5 * (1.0 + a), "{}", norm.name());
        let pa = norm.prox(&x, 0.3).unwrap();
        let pb = norm.prox(&xf, 0.3).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            assert!((u - *v as f64).abs() < 1e-4);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holder_and_triangle(x in prop::collection::vec(-5.0f64..5.0, 12), y in prop::collection::vec(-5.0f64..5.0, 12)) {
        for (norm, _) in families().into_iter().filter(|(_, p)| *p == 12).chain([(NormFamily::L1, 12), (NormFamily::L2, 12)]) {
            let ip: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let nx = norm.eval(&x).unwrap();
            prop_assert!(ip <= nx * norm.dual_eval(&y).unwrap() + 1e-9);
            let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            prop_assert!(norm.eval(&s).unwrap() <= nx + norm.eval(&y).unwrap() + 1e-9);
            let scaled: Vec<f64> = x.iter().map(|v| -2.5 * v).collect();
            prop_assert!((norm.eval(&scaled).unwrap() - 2.5 * nx).abs() <= 1e-9 * (1.0 + nx));
        }
    }

    #[test]
    fn prox_is_firmly_nonexpansive(x in prop::collection::vec(-5.0f64..5.0, 9), y in prop::collection::vec(-5.0f64..5.0, 9), tau in 0.01f64..3.0) {
        for (norm, p) in families() {
            if p != 9 { continue; }
            let px = norm.prox(&x, tau).unwrap();
            let py = norm.prox(&y, tau).unwrap();
            let d = diff(&px, &py);
            let e = diff(&x, &y);
            let lhs: f64 = d.iter().map(|v| v * v).sum();
            let rhs: f64 = d.iter().zip(&e).map(|(a, b)| a * b).sum();
            prop_assert!(lhs <= rhs + 1e-10);
        }
    }
}
