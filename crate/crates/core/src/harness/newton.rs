//! Damped Newton reference solver, used as ground truth in tests and as a
//! baseline in benchmarks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::quartic::StructuredQuartic;

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub iterations: usize,
    pub grad_dual_norm: f64,
}

const MAX_ITERS: usize = 500;

/// Minimizes `f` from `x0` until `‖∇f‖_{B⁻¹} ≤ tol`.
///
/// Steps solve `(∇²f + λB)p = −∇f` with `λ` shrinking after successful
/// steps, followed by an Armijo backtrack. Convexity makes every such `p` a
/// descent direction; the `λB` term only guards against a singular Hessian.
pub fn reference_newton(
    q: &StructuredQuartic,
    metric: &Metric,
    x0: &DVector<f64>,
    tol: f64,
) -> Result<NewtonResult> {
    if !(tol >= 1e-13) {
        return Err(Error::InvalidArgument(format!("tolerance {tol:e} below 1e-13")));
    }
    let b = metric
        .matrix()
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(q.dim(), q.dim()));
    let mut x = x0.clone();
    let mut lambda = 1e-3;
    for it in 0..MAX_ITERS {
        let g = q.grad(&x)?;
        let gn = metric.dual_norm(&g)?;
        if gn <= tol {
            return Ok(NewtonResult {
                f_star: q.eval(&x)?,
                x_star: x,
                iterations: it,
                grad_dual_norm: gn,
            });
        }
        let h = q.hess_matrix(&x)? + &b * lambda;
        let p = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let slope = g.dot(&p);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &x + &p * t;
            // f(trial) − f(x) without cancellation
            if q.eval_diff(&x, &trial)? <= 1e-4 * t * slope {
                x = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if accepted {
            lambda = (lambda * 0.1).max(1e-16);
        } else {
            // the direction is too inaccurate to make progress; accept if
            // rounding has already taken over
            if lambda > 1e6 {
                return Err(Error::Oracle(format!(
                    "line search stagnated at iteration {it} with gradient norm {gn:e}"
                )));
            }
            lambda *= 100.0;
        }
    }
    Err(Error::Oracle(format!("no convergence in {MAX_ITERS} iterations")))
}
