//! Problem files, generators, determinism across execution modes, and the
//! check suites.

use nalgebra::DVector;
use proptest::prelude::*;

use quartic_core::harness::bench::{bench, BenchConfig};
use quartic_core::harness::derivcheck;
use quartic_core::harness::generate::{gen_instance, InstanceKind};
use quartic_core::harness::io::ProblemFile;
use quartic_core::harness::propcheck::model_inequalities;
use quartic_core::fast_quartic::{solve, SolverConfig};
use quartic_core::metric::Metric;
use quartic_core::par::Exec;

#[test]
fn generator_is_deterministic() {
    for kind in [InstanceKind::L4, InstanceKind::Planted, InstanceKind::DenseQuartic] {
        let a = gen_instance(kind, 4, 9, 17).unwrap().to_json().unwrap();
        let b = gen_instance(kind, 4, 9, 17).unwrap().to_json().unwrap();
        let c = gen_instance(kind, 4, 9, 18).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn file_round_trip_preserves_function() {
    let dir = tempfile::tempdir().unwrap();
    for (i, kind) in [InstanceKind::L4, InstanceKind::DenseQuartic].into_iter().enumerate() {
        let file = gen_instance(kind, 3, 7, i as u64).unwrap();
        let path = dir.path().join(format!("p{i}.json"));
        file.save(&path).unwrap();
        let back = ProblemFile::load(&path).unwrap();
        assert_eq!(file, back);
        let (q1, q2) = (file.to_quartic().unwrap(), back.to_quartic().unwrap());
        let x = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        assert_eq!(q1.eval(&x).unwrap(), q2.eval(&x).unwrap());
    }
}

#[test]
fn general_form_reproduces_l4_form() {
    let file = gen_instance(InstanceKind::L4, 3, 8, 2).unwrap();
    let q = file.to_quartic().unwrap();
    let general = ProblemFile::from_quartic(&q, file.planted().cloned());
    let q2 = general.to_quartic().unwrap();
    let x = DVector::from_vec(vec![1.0, -0.5, 0.25]);
    let (f1, f2) = (q.eval(&x).unwrap(), q2.eval(&x).unwrap());
    assert!((f1 - f2).abs() <= 1e-12 * (1.0 + f1.abs()));
}

#[test]
fn malformed_files_are_rejected() {
    assert!(serde_json::from_str::<ProblemFile>(r#"{"kind":"l4","A":[[1.0]],"b":[0.0]}"#).is_err());
    let bad_dims: ProblemFile =
        serde_json::from_str(r#"{"kind":"l4","A":[[1.0, 2.0]],"b":[0.0],"c":[0.0]}"#).unwrap();
    assert!(bad_dims.to_quartic().is_err());
    assert!(gen_instance(InstanceKind::Planted, 4, 2, 0).is_err());
}

#[test]
fn execution_modes_agree_bitwise() {
    let q = gen_instance(InstanceKind::Planted, 6, 300, 3).unwrap().to_quartic().unwrap();
    let metric = Metric::from_quartic(&q).unwrap();
    let seq = model_inequalities(&q, &metric, 64, 5, Exec::Sequential).unwrap();
    let par = model_inequalities(&q, &metric, 64, 5, Exec::Parallel).unwrap();
    assert_eq!(seq.results(), par.results());

    let cfg = |exec| BenchConfig {
        ns: vec![16, 64],
        d: 3,
        instances_per_n: 2,
        exec,
        ..Default::default()
    };
    assert_eq!(bench(&cfg(Exec::Sequential)), bench(&cfg(Exec::Parallel)));
}

#[test]
fn solve_report_is_reproducible() {
    let q = gen_instance(InstanceKind::DenseQuartic, 4, 20, 9).unwrap().to_quartic().unwrap();
    let metric = Metric::from_quartic(&q).unwrap();
    let cfg = SolverConfig::default();
    let a = serde_json::to_string(&solve(&q, &metric, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&solve(&q, &metric, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn derivative_suite_passes() {
    let rep = derivcheck::run_suite(10, 5, 10, 5, 1, Exec::Parallel).unwrap();
    assert!(rep.pass(), "{rep:?}");
    assert!(derivcheck::run_suite(1, 4, 2, 5, 1, Exec::Parallel).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planted_optimum_is_stationary(seed in any::<u64>(), d in 1usize..6, extra in 0usize..10) {
        for kind in [InstanceKind::Planted, InstanceKind::DenseQuartic] {
            let file = gen_instance(kind, d, d + extra, seed).unwrap();
            let q = file.to_quartic().unwrap();
            let metric = Metric::from_quartic(&q).unwrap();
            let p = file.planted().unwrap();
            let xs = DVector::from_column_slice(&p.x_star);
            let g = metric.dual_norm(&q.grad(&xs).unwrap()).unwrap();
            prop_assert!(g <= 1e-10, "{kind:?}: ‖∇f(x*)‖ = {g:e}");
            prop_assert!((q.eval(&xs).unwrap() - p.f_star).abs() <= 1e-12 * (1.0 + p.f_star.abs()));
        }
    }
}
