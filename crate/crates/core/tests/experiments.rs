mod common;

use common::*;
use minnorm::complexity::Theorem;
use minnorm::covariance::{Covariance, CovarianceSpec};
use minnorm::experiments::*;
use minnorm::solvers::SolverConfig;

fn plan(axis: Axis, values: Vec<f64>) -> SweepPlan {
    SweepPlan {
        axis,
        values,
        trials_per_point: 1,
        estimator: EstimatorSpec::MinNorm,
        norm: NormSpec::L1,
        base: BasePoint { n: 20, p: 80, s: 2, ..Default::default() },
        covariance: CovarianceSpec::Identity,
        signal: SignalTemplate::default(),
        noise: NoiseShape::None,
        theorem: TheoremSettings::default(),
        certificates: CertificateSettings::default(),
        solver: SolverConfig::default(),
        master_seed: 5,
        outputs: None,
    }
}

#[test]
fn model_identity() {
    let noises = [
        NoiseKind::GaussianIid { sigma: 0.7 },
        NoiseKind::Alternating { level: 0.2 },
        NoiseKind::AdversarialTwoPoint { epsilon: 0.3 },
        NoiseKind::FixedVector { values: (0..6).map(|i| i as f64).collect() },
    ];
    for (k, noise) in noises.into_iter().enumerate() {
        let sig = SignalSpec { placement: Placement::Random, ..SignalSpec::new(SignalKind::Sparse { s: 3 }) };
        let inst = generate_instance(6, 15, &CovarianceSpec::Toeplitz { rho: 0.3 }, &sig, &NoiseSpec::new(noise), k as u64).unwrap();
        let fit = inst.design.matvec(inst.truth.as_ref().unwrap());
        let xi = inst.noise.as_ref().unwrap();
        for i in 0..6 {
            assert!((inst.responses[i] - fit[i] - xi[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn adversarial_direction_scaling() {
    let cov = Covariance::toeplitz(20, 0.5).unwrap();
    let kinds = [
        SignalKind::Sparse { s: 3 },
        SignalKind::GroupSparse { s: 2, groups: minnorm::GroupPartition::contiguous(20, 4).unwrap() },
        SignalKind::LowRank { s: 1, shape: minnorm::MatrixShape::new(4, 5).unwrap() },
        SignalKind::Dense,
    ];
    let mut r = rng(30);
    for kind in kinds {
        let h1 = two_point_direction(&SignalSpec::new(kind.clone()), &cov, 0.4, &mut r).unwrap();
        assert!((cov.sqrt_norm(&h1).powi(2) - 0.16 / 8.0).abs() < 1e-10, "{kind:?}");
    }
}

#[test]
fn adversarial_noise_energy() {
    // E‖ξ‖₂² = nε²/8
    let (n, eps, trials) = (10, 0.5, 1000);
    let sig = SignalSpec::new(SignalKind::Sparse { s: 2 });
    let noise = NoiseSpec::new(NoiseKind::AdversarialTwoPoint { epsilon: eps });
    let cov = CovarianceSpec::Identity.build(40).unwrap();
    let total: f64 = (0..trials)
        .map(|t| {
            let inst = generate_instance_with(n, &cov, &sig, &noise, t).unwrap();
            assert!(inst.truth.as_ref().unwrap().iter().all(|&v| v == 0.0));
            inst.noise.as_ref().unwrap().iter().map(|v| v * v).sum::<f64>()
        })
        .sum();
    let want = n as f64 * eps * eps / 8.0;
    assert!((total / trials as f64 - want).abs() < 0.05 * want);
}

#[test]
fn noise_seed_decouples_noise_from_design() {
    let sig = SignalSpec::new(SignalKind::Sparse { s: 1 });
    let a = generate_instance(5, 10, &CovarianceSpec::Identity, &sig, &NoiseSpec { kind: NoiseKind::GaussianIid { sigma: 1.0 }, seed: Some(7) }, 1).unwrap();
    let b = generate_instance(5, 10, &CovarianceSpec::Identity, &sig, &NoiseSpec { kind: NoiseKind::GaussianIid { sigma: 1.0 }, seed: Some(7) }, 2).unwrap();
    assert_eq!(a.noise, b.noise);
    assert_ne!(a.design.as_slice(), b.design.as_slice());
}

#[test]
fn incompatible_specs_are_rejected() {
    let sig = SignalSpec::new(SignalKind::Sparse { s: 11 });
    assert!(generate_instance(5, 10, &CovarianceSpec::Identity, &sig, &NoiseSpec::new(NoiseKind::None), 0).is_err());
    let sig = SignalSpec::new(SignalKind::Sparse { s: 1 });
    let noise = NoiseSpec::new(NoiseKind::FixedVector { values: vec![1.0; 4] });
    assert!(generate_instance(5, 10, &CovarianceSpec::Identity, &sig, &noise, 0).is_err());
    let mut bad = plan(Axis::N, vec![]);
    assert!(run_sweep(&bad, 1).is_err());
    bad.values = vec![10.0];
    bad.trials_per_point = 0;
    assert!(run_sweep(&bad, 1).is_err());
}

#[test]
fn phase_transition_in_records() {
    let mut pl = plan(Axis::S, (1..=10).map(|s| s as f64).collect());
    pl.trials_per_point = 3;
    let recs = run_sweep(&pl, 0).unwrap();
    let med = |s: usize| {
        let mut v: Vec<f64> = recs.iter().filter(|r| r.s == s).map(|r| r.l2_error.unwrap()).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let errs: Vec<f64> = (1..=10).map(med).collect();
    // a jump of more than 10x between consecutive sparsity levels
    let jump = errs.windows(2).any(|w| w[1] > 10.0 * w[0].max(1e-12) && w[1] > 1e-3);
    assert!(jump, "{errs:?}");
    assert!(errs[0] < 1e-6);
    assert!(errs[9] > 1e-2);
}

#[test]
fn lambda_sweep_does_not_explode() {
    let mut pl = plan(Axis::Lambda, vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]);
    pl.estimator = EstimatorSpec::Rerm;
    pl.noise = NoiseShape::Gaussian;
    pl.base.noise_level = 0.1;
    let recs = run_sweep(&pl, 0).unwrap();
    let pe: Vec<f64> = recs.iter().map(|r| r.prediction_error.unwrap()).collect();
    // as λ → 0 the error settles at the interpolator's error
    let tail = &pe[3..];
    let spread = tail.iter().cloned().fold(0.0, f64::max) / tail.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1.5, "{pe:?}");
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn error_grows_with_noise_level() {
    let levels = vec![0.01, 0.03, 0.1, 0.3, 1.0];
    let mut pl = plan(Axis::NoiseLevel, levels.clone());
    pl.noise = NoiseShape::Gaussian;
    pl.trials_per_point = 5;
    let recs = run_sweep(&pl, 0).unwrap();
    let medians: Vec<f64> = levels
        .iter()
        .map(|&l| {
            let mut v: Vec<f64> = recs.iter().filter(|r| r.noise_level == l).map(|r| r.prediction_error.unwrap()).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    assert!(spearman(&levels, &medians) >= 0.9, "{medians:?}");
}

#[test]
fn verify_bound_on_noiseless_recovery() {
    let mut pl = plan(Axis::N, vec![30.0]);
    pl.trials_per_point = 4;
    pl.theorem.which = Some(Theorem::T3a);
    let recs = run_sweep(&pl, 0).unwrap();
    let s = verify_bound(&recs, Theorem::T3a, None).unwrap();
    assert!(s.pass);
    assert!(s.max_ratio < 1e-10);
    assert_eq!(s.ceiling, DEFAULT_CALIBRATION_CEILING);
    assert!(verify_bound(&[], Theorem::T3a, None).is_err());
}

#[test]
fn theorem_one_on_min_l2() {
    // ξ only: ‖ν̂‖₂ sits well below √8/(κ√δ)‖ξ‖₂/√n
    let mut pl = plan(Axis::N, vec![20.0, 40.0]);
    pl.norm = NormSpec::L2;
    pl.base.s = 0;
    pl.base.p_per_n = Some(5.0);
    pl.noise = NoiseShape::Gaussian;
    pl.base.noise_level = 1.0;
    pl.trials_per_point = 3;
    pl.theorem.which = Some(Theorem::T1a);
    let recs = run_sweep(&pl, 0).unwrap();
    let s = verify_bound(&recs, Theorem::T1a, None).unwrap();
    assert!(s.pass);
    for r in &recs {
        let lead = 6.0 * 3f64.sqrt() * r.noise_norm.unwrap() / (r.n as f64).sqrt();
        assert!(r.lhs.unwrap() <= lead);
    }
}

#[test]
fn sweep_outputs_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let mut pl = plan(Axis::N, vec![15.0, 20.0]);
    pl.trials_per_point = 2;
    pl.noise = NoiseShape::Alternating;
    pl.base.noise_level = 0.1;
    pl.certificates.upper_bracket = true;
    let mut files = Vec::new();
    for (k, jobs) in [1usize, 2].into_iter().enumerate() {
        pl.outputs = Some(dir.path().join(format!("run{k}")));
        let recs = run_sweep(&pl, jobs).unwrap();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert!(r.error.is_none());
            assert!(r.nu_lower.unwrap() <= r.nu_hat.unwrap() * (1.0 + 1e-9));
            assert!(r.nu_hat.unwrap() <= r.nu_upper.unwrap() * (1.0 + 1e-3));
        }
        let out = pl.outputs.clone().unwrap();
        files.push(["records.csv", "plan.json", "plot.csv"].map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let header = String::from_utf8(files[0][0].clone()).unwrap();
    assert_eq!(header.lines().next().unwrap(), RECORD_COLUMNS.join(","));
    let plot = String::from_utf8(files[0][2].clone()).unwrap();
    assert!(plot.starts_with("axis,metric,x,quantile,y"));
}

#[test]
fn failed_trials_are_recorded() {
    // n > p leaves no interpolator; the sweep records the failure and continues
    let mut pl = plan(Axis::N, vec![10.0, 100.0]);
    pl.base.p = 50;
    pl.base.s = 1;
    let recs = run_sweep(&pl, 1).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[0].error.is_none());
    assert!(recs[1].error.as_deref().unwrap().contains("p"));
}

#[test]
fn lower_bound_datasets_coincide() {
    let st = LowerBoundStructure {
        norm: NormSpec::L1,
        p: 40,
        s: 2,
        signal: SignalTemplate::default(),
        covariance: CovarianceSpec::Identity,
        estimator: EstimatorSpec::MinNorm,
        lambda: 0.0,
        solver: SolverConfig::default(),
    };
    let s = lower_bound_experiment(0.3, 10, 50, &st, 1).unwrap();
    assert!(s.identical_datasets);
    assert_eq!(s.failures, 0);
    assert!(s.max_error_above_thirty_second == 1.0);
    assert!(lower_bound_experiment(1.5, 10, 50, &st, 1).is_err());
}
