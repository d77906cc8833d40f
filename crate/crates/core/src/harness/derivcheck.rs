//! Finite-difference checks of the derivative oracles.
//!
//! Along a line `t ↦ x + th` the objective is a quartic polynomial and the
//! gradient a cubic one, so the five-point stencils below are exact up to
//! rounding. Steps can therefore be large, which keeps rounding small.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate::{gen_instance, InstanceKind};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::quartic::StructuredQuartic;

pub const GRAD_TOL: f64 = 1e-6;
pub const HESS_TOL: f64 = 1e-6;
pub const THIRD_TOL: f64 = 1e-5;
pub const FOURTH_TOL: f64 = 1e-3;

const STEP: f64 = 0.25;
/// Mixed into the sampling seed so that sample points never replay the
/// generator's stream (which would put the first sample on a planted optimum,
/// where the relative gradient error is pure rounding).
const SAMPLE_SALT: u64 = 0x5DEE_CE66_D1CE_4E5B;

/// Worst relative errors over all sampled points and directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivReport {
    pub samples: usize,
    pub grad: f64,
    pub hess: f64,
    pub third: f64,
    pub fourth: f64,
}

impl DerivReport {
    pub fn pass(&self) -> bool {
        self.grad <= GRAD_TOL
            && self.hess <= HESS_TOL
            && self.third <= THIRD_TOL
            && self.fourth <= FOURTH_TOL
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            samples: self.samples + other.samples,
            grad: self.grad.max(other.grad),
            hess: self.hess.max(other.hess),
            third: self.third.max(other.third),
            fourth: self.fourth.max(other.fourth),
        }
    }
}

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-12)
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let n = v.norm();
    if n == 0.0 {
        DVector::from_element(d, 1.0 / (d as f64).sqrt())
    } else {
        v / n
    }
}

/// Checks the oracles at `samples` random points in `[−1, 1]^d`.
pub fn check_instance(q: &StructuredQuartic, samples: usize, seed: u64) -> Result<DerivReport> {
    let d = q.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SAMPLE_SALT);
    let mut rep = DerivReport {
        samples,
        grad: 0.0,
        hess: 0.0,
        third: 0.0,
        fourth: 0.0,
    };
    let t = STEP;
    for _ in 0..samples {
        let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let h = random_unit(&mut rng, d);
        let at = |s: f64| -> DVector<f64> { &x + &h * (s * t) };

        let f = |s: f64| q.eval(&at(s));
        let (fm2, fm1, f0, fp1, fp2) = (f(-2.0)?, f(-1.0)?, f(0.0)?, f(1.0)?, f(2.0)?);
        let g = q.grad(&x)?;
        let gh = g.dot(&h);
        let fd1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * t);
        // h is a unit vector, so ‖∇f‖ bounds |⟨∇f, h⟩|
        rep.grad = rep.grad.max(rel((fd1 - gh).abs(), g.norm()));

        let gr = |s: f64| q.grad(&at(s));
        let (gm2, gm1, gp1, gp2) = (gr(-2.0)?, gr(-1.0)?, gr(1.0)?, gr(2.0)?);
        let hh = q.hess_apply(&x, &h)?;
        let fd_h = (&gm2 - &gm1 * 8.0 + &gp1 * 8.0 - &gp2) / (12.0 * t);
        rep.hess = rep.hess.max(rel((&fd_h - &hh).amax(), hh.amax()));

        let th = q.third_apply(&x, &h)?;
        let fd_t = (&gp1 - &g * 2.0 + &gm1) / (t * t);
        rep.third = rep.third.max(rel((&fd_t - &th).amax(), th.amax()));

        let ff = q.fourth_form(&h)?;
        let fd4 = (fp2 - 4.0 * fp1 + 6.0 * f0 - 4.0 * fm1 + fm2) / t.powi(4);
        rep.fourth = rep.fourth.max(rel((fd4 - ff).abs(), ff));
    }
    Ok(rep)
}

/// Checks `instances` generated problems with `d ≤ max_d`, `n ≤ max_n`,
/// cycling through the instance kinds and sizes. Instances run concurrently.
pub fn run_suite(
    instances: usize,
    max_d: usize,
    max_n: usize,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<DerivReport> {
    if max_d == 0 || max_n < max_d {
        return Err(Error::InvalidArgument(format!(
            "need max_n ≥ max_d ≥ 1, got {max_d} and {max_n}"
        )));
    }
    let kinds = [InstanceKind::L4, InstanceKind::Planted, InstanceKind::DenseQuartic];
    let reports = par::map_range(exec, instances, |i| {
        let d = 1 + i % max_d;
        let n = d + (i * 7) % (max_n - d + 1);
        let s = seed.wrapping_add(i as u64);
        let q = gen_instance(kinds[i % kinds.len()], d, n, s)?.to_quartic()?;
        check_instance(&q, samples, s)
    });
    let mut total = DerivReport {
        samples: 0,
        grad: 0.0,
        hess: 0.0,
        third: 0.0,
        fourth: 0.0,
    };
    for r in reports {
        total = total.merge(&r?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generate::{gen_instance, InstanceKind};

    #[test]
    fn generated_instances_pass() {
        for (i, kind) in [InstanceKind::L4, InstanceKind::DenseQuartic].into_iter().enumerate() {
            let q = gen_instance(kind, 5, 11, i as u64).unwrap().to_quartic().unwrap();
            let r = check_instance(&q, 10, 3).unwrap();
            assert!(r.pass(), "{r:?}");
        }
    }

    #[test]
    fn broken_gradient_is_detected() {
        // the check itself must be able to fail: compare against a wrong scale
        let q = gen_instance(InstanceKind::L4, 3, 6, 1).unwrap().to_quartic().unwrap();
        let x = DVector::from_element(3, 0.3);
        let h = DVector::from_element(3, 1.0 / 3f64.sqrt());
        let t = STEP;
        let f = |s: f64| q.eval(&(&x + &h * (s * t))).unwrap();
        let fd = (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * t);
        let wrong = 1.01 * q.grad(&x).unwrap().dot(&h);
        assert!(rel((fd - wrong).abs(), wrong.abs()) > GRAD_TOL);
    }
}
