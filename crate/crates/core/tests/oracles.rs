//! Derivative oracles and metric operations against closed forms, naive
//! reference loops and algebraic identities.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quartic_core::design::RowMatrix;
use quartic_core::metric::Metric;
use quartic_core::quartic::{SmoothnessConstants, StructuredQuartic};
use quartic_core::tensor::SymTensor3;

fn scalar_quartic() -> StructuredQuartic {
    StructuredQuartic::pure_quartic(RowMatrix::from_rows(&[vec![1.0]], 1).unwrap()).unwrap()
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random `(q, T entries)` with every coefficient block populated.
fn random_dense(seed: u64, d: usize, n: usize) -> (StructuredQuartic, Vec<(usize, usize, usize, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DVector::from_vec(uniform(&mut rng, d));
    let g = DMatrix::from_vec(d, d, uniform(&mut rng, d * d));
    let mut entries = Vec::new();
    for i in 0..d {
        for j in i..d {
            for k in j..d {
                entries.push((i, j, k, rng.random_range(-1.0..1.0)));
            }
        }
    }
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, d)).collect();
    // keep AᵀA comfortably definite
    for (i, row) in rows.iter_mut().take(d).enumerate() {
        row[i] += 2.0;
    }
    let a = RowMatrix::from_rows(&rows, d).unwrap();
    let t = SymTensor3::from_entries(d, &entries).unwrap();
    (StructuredQuartic::new(c, g, t, a).unwrap(), entries)
}

fn naive_eval(q: &StructuredQuartic, entries: &[(usize, usize, usize, f64)], x: &[f64]) -> f64 {
    let d = x.len();
    let mut full = vec![0.0; d * d * d];
    for &(i, j, k, val) in entries {
        for (p, r, s) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            full[(p * d + r) * d + s] = val;
        }
    }
    let mut f = 0.0;
    for i in 0..d {
        f += q.c()[i] * x[i];
        for j in 0..d {
            f += q.g()[(i, j)] * x[i] * x[j];
            for k in 0..d {
                f += full[(i * d + j) * d + k] * x[i] * x[j] * x[k];
            }
        }
    }
    let a = q.a().to_dense();
    for r in 0..a.nrows() {
        let mut ax = 0.0;
        for j in 0..d {
            ax += a[(r, j)] * x[j];
        }
        f += ax.powi(4) / 24.0;
    }
    f
}

#[test]
fn scalar_quartic_closed_forms() {
    let q = scalar_quartic();
    let two = v(&[2.0]);
    assert_relative_eq!(q.eval(&two).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
    assert_relative_eq!(q.grad(&two).unwrap()[0], 4.0 / 3.0, max_relative = 1e-15);
    assert_relative_eq!(q.hess_matrix(&two).unwrap()[(0, 0)], 2.0, max_relative = 1e-15);
    let one = v(&[1.0]);
    assert_relative_eq!(q.third_form(&one, &one).unwrap(), 1.0, max_relative = 1e-15);
    assert_relative_eq!(q.third_apply(&one, &one).unwrap()[0], 1.0, max_relative = 1e-15);
    // every Taylor coefficient of x⁴/24 vanishes at the origin
    assert_eq!(q.taylor_phi(&v(&[0.0]), &v(&[3.7])).unwrap(), 0.0);
}

#[test]
fn origin_values() {
    let (q, _) = random_dense(3, 4, 6);
    let z = DVector::zeros(4);
    assert_eq!(q.eval(&z).unwrap(), 0.0);
    let h = q.hess_matrix(&z).unwrap();
    let gg = q.g() + q.g().transpose();
    assert!((h - gg).amax() < 1e-15);
}

#[test]
fn fourth_form_identity_design() {
    let q = StructuredQuartic::pure_quartic(RowMatrix::from_dense(&DMatrix::identity(3, 3))).unwrap();
    assert_eq!(q.fourth_form(&v(&[1.0, 0.0, 0.0])).unwrap(), 1.0);
    assert_eq!(q.fourth_form(&DVector::zeros(3)).unwrap(), 0.0);
}

#[test]
fn eval_matches_naive_loops() {
    for seed in 0..10 {
        let (q, entries) = random_dense(seed, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = uniform(&mut rng, 3);
        let want = naive_eval(&q, &entries, &x);
        assert_relative_eq!(q.eval(&v(&x)).unwrap(), want, max_relative = 1e-12);
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let (q, _) = random_dense(1, 3, 4);
    assert!(q.eval(&DVector::zeros(2)).is_err());
    assert!(q.grad(&DVector::zeros(4)).is_err());
    assert!(q.fourth_form(&DVector::zeros(1)).is_err());
}

#[test]
fn singular_design_is_rejected() {
    let a = RowMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], 2).unwrap();
    assert!(StructuredQuartic::pure_quartic(a).is_err());
}

#[test]
fn l4_regression_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d) = (7, 3);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, d)).collect();
    let a = RowMatrix::from_rows(&rows, d).unwrap();
    let b = DVector::from_vec(uniform(&mut rng, n));
    let c = DVector::from_vec(uniform(&mut rng, d));
    let q = StructuredQuartic::from_l4_regression(&a, &b, &c).unwrap();
    let b4: f64 = b.iter().map(|x| x.powi(4)).sum();
    for _ in 0..100 {
        let x = DVector::from_vec(uniform(&mut rng, d)) * 3.0;
        let r: f64 = a.mul(&x).iter().zip(b.iter()).map(|(ax, bi)| (ax - bi).powi(4)).sum();
        let want = c.dot(&x) + r;
        assert_relative_eq!(q.eval(&x).unwrap() + b4, want, max_relative = 1e-10);
    }
}

#[test]
fn l4_regression_trivial_and_planted() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (6, 3);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, d)).collect();
    let a = RowMatrix::from_rows(&rows, d).unwrap();

    let q0 = StructuredQuartic::from_l4_regression(&a, &DVector::zeros(n), &DVector::zeros(d)).unwrap();
    assert_eq!(q0.eval(&DVector::zeros(d)).unwrap(), 0.0);
    assert!(q0.grad(&DVector::zeros(d)).unwrap().amax() == 0.0);

    let b = DVector::from_vec(uniform(&mut rng, n));
    let xs = DVector::from_vec(uniform(&mut rng, d));
    let r3: Vec<f64> = a.mul(&xs).iter().zip(b.iter()).map(|(ax, bi)| (ax - bi).powi(3)).collect();
    let c = -a.tr_mul(&r3) * 4.0;
    let q = StructuredQuartic::from_l4_regression(&a, &b, &c).unwrap();
    assert!(q.grad(&xs).unwrap().amax() < 1e-12);
}

#[test]
fn metric_dual_norm_against_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 5;
    let m = DMatrix::from_vec(d, d, uniform(&mut rng, d * d));
    let b = &m * m.transpose() + DMatrix::identity(d, d);
    let metric = Metric::from_matrix(b.clone()).unwrap();
    let g = DVector::from_vec(uniform(&mut rng, d));
    let want = g.dot(&(b.clone().try_inverse().unwrap() * &g));
    assert_relative_eq!(metric.dual_norm_sq(&g).unwrap(), want, max_relative = 1e-10);

    let eye = Metric::from_matrix(DMatrix::identity(d, d)).unwrap();
    assert_relative_eq!(eye.dual_norm(&g).unwrap(), g.norm(), max_relative = 1e-14);
    assert_relative_eq!(eye.b_norm_sq(&g).unwrap().sqrt(), g.norm(), max_relative = 1e-14);
    assert_eq!(metric.solve_b(&DVector::zeros(d)).unwrap(), DVector::zeros(d));
}

#[test]
fn solve_b_residual_at_d50() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = 50;
    let m = DMatrix::from_vec(d, d, uniform(&mut rng, d * d));
    let b = &m * m.transpose() + DMatrix::identity(d, d) * 0.1;
    let metric = Metric::from_matrix(b.clone()).unwrap();
    let rhs = DVector::from_vec(uniform(&mut rng, d));
    let x = metric.solve_b(&rhs).unwrap();
    assert!((&b * x - &rhs).norm() <= 1e-10 * rhs.norm());
}

#[test]
fn printed_modulus_counterexample() {
    // n = 2, v = e₁: ‖v‖₄⁴ = 1 but n‖v‖₂⁴ = 2, so the printed n/72 fails while
    // 1/(72n) holds
    let (rem, printed, corrected) = quartic_core::harness::propcheck::printed_modulus_counterexample().unwrap();
    assert!(rem < printed);
    assert!(rem >= corrected);
    let consts = SmoothnessConstants::for_quartic(
        &StructuredQuartic::pure_quartic(RowMatrix::from_dense(&DMatrix::identity(2, 2))).unwrap(),
    );
    assert_relative_eq!(consts.mu4, 1.0 / 144.0, max_relative = 1e-15);
}

/// Arbitrary (possibly nonconvex) instance with two random points.
fn instance_and_points(seed: u64) -> (StructuredQuartic, Metric, DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=4usize);
    let n = d + rng.random_range(0..=4usize);
    let (q, _) = random_dense(seed, d, n);
    let metric = Metric::from_quartic(&q).unwrap();
    let x = DVector::from_vec(uniform(&mut rng, d)) * 2.0;
    let y = DVector::from_vec(uniform(&mut rng, d)) * 2.0;
    (q, metric, x, y)
}

/// Convex ℓ4-regression instance with two random points.
fn convex_instance(seed: u64) -> (StructuredQuartic, Metric, DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=4usize);
    let n = d + rng.random_range(0..=6usize);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = uniform(&mut rng, d);
            if i < d {
                r[i] += 2.0;
            }
            r
        })
        .collect();
    let a = RowMatrix::from_rows(&rows, d).unwrap();
    let b = DVector::from_vec(uniform(&mut rng, n));
    let c = DVector::from_vec(uniform(&mut rng, d));
    let q = StructuredQuartic::from_l4_regression(&a, &b, &c).unwrap();
    let metric = Metric::from_quartic(&q).unwrap();
    let x = DVector::from_vec(uniform(&mut rng, d)) * 2.0;
    let y = DVector::from_vec(uniform(&mut rng, d)) * 2.0;
    (q, metric, x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn taylor_remainder_is_exact(seed in any::<u64>()) {
        let (q, _, x, y) = instance_and_points(seed);
        let h = &y - &x;
        let lhs = q.eval(&y).unwrap() - q.taylor_phi(&x, &y).unwrap();
        let rhs = q.fourth_form(&h).unwrap() / 24.0;
        let scale = 1.0 + q.eval(&y).unwrap().abs() + rhs.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }

    #[test]
    fn model_bounds_function(seed in any::<u64>()) {
        let (q, metric, x, y) = convex_instance(seed);
        let l3 = SmoothnessConstants::for_quartic(&q).l3;
        let fy = q.eval(&y).unwrap();
        let om = q.omega_eval(l3, &metric, &x, &y).unwrap();
        prop_assert!(fy <= om + 1e-10 * (1.0 + fy.abs()));
        // Ω touches f at its center
        let fx = q.eval(&x).unwrap();
        prop_assert!((q.omega_eval(l3, &metric, &x, &x).unwrap() - fx).abs() <= 1e-12 * (1.0 + fx.abs()));
    }

    #[test]
    fn quartic_growth_with_corrected_modulus(seed in any::<u64>()) {
        let (q, metric, x, y) = convex_instance(seed);
        let consts = SmoothnessConstants::for_quartic(&q);
        let h = &y - &x;
        let lower = q.eval(&x).unwrap() + q.grad(&x).unwrap().dot(&h)
            + consts.mu4 * metric.b_norm_sq(&h).unwrap().powi(2);
        let fy = q.eval(&y).unwrap();
        prop_assert!(fy >= lower - 1e-10 * (1.0 + fy.abs()));
    }

    #[test]
    fn power_mean(xs in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let n = xs.len() as f64;
        let l4: f64 = xs.iter().map(|x| x.powi(4)).sum();
        let l2: f64 = xs.iter().map(|x| x * x).sum();
        prop_assert!(l4 >= l2 * l2 / n * (1.0 - 1e-12));
    }

    #[test]
    fn dual_pairing(seed in any::<u64>()) {
        let (_, metric, x, _) = instance_and_points(seed);
        let bx = metric.apply(&x).unwrap();
        let lhs = metric.dual_norm(&bx).unwrap();
        let rhs = metric.b_norm_sq(&x).unwrap().sqrt();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (rhs + 1e-300));
    }

    #[test]
    fn hessian_symmetric(seed in any::<u64>()) {
        let (q, _, x, _) = instance_and_points(seed);
        let h = q.hess_matrix(&x).unwrap();
        prop_assert!((&h - h.transpose()).amax() <= 1e-12 * (1.0 + h.amax()));
    }
}
