//! Accelerated gradient descent in the `B` geometry with backtracking on the
//! local smoothness estimate. A wall-clock comparator only.

use nalgebra::DVector;

use crate::error::Result;
use crate::metric::Metric;
use crate::quartic::{SmoothnessConstants, StructuredQuartic};

#[derive(Debug, Clone)]
pub struct AgdResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    pub certified_gap: f64,
    pub converged: bool,
}

/// FISTA-style iteration with restart on function increase, stopped when the
/// quartic-growth certificate drops to `eps` or after `max_iters` gradients.
pub fn agd(
    q: &StructuredQuartic,
    metric: &Metric,
    x0: &DVector<f64>,
    eps: f64,
    max_iters: usize,
) -> Result<AgdResult> {
    let consts = SmoothnessConstants::for_quartic(q);
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut fx = q.eval(&x)?;
    for it in 0..max_iters {
        let (fy, gy) = q.eval_grad(&y)?;
        let gap = consts.gap_certificate(metric.dual_norm(&q.grad(&x)?)?);
        if gap <= eps {
            return Ok(AgdResult {
                x,
                f: fx,
                iterations: it,
                certified_gap: gap,
                converged: true,
            });
        }
        let dir = metric.solve_b(&gy)?;
        let gd = gy.dot(&dir);
        // backtrack until the quadratic upper bound holds at the step
        let x_new = loop {
            let cand = &y - &dir / lip;
            if q.eval_diff(&y, &cand)? <= -0.5 * gd / lip + 1e-15 * fy.abs() || lip > 1e300 {
                break cand;
            }
            lip *= 2.0;
        };
        let f_new = q.eval(&x_new)?;
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f_new > fx {
            // momentum restart
            y = x.clone();
            t = 1.0;
            continue;
        }
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        x = x_new;
        fx = f_new;
        t = t_new;
        lip *= 0.9;
    }
    let gap = consts.gap_certificate(metric.dual_norm(&q.grad(&x)?)?);
    Ok(AgdResult {
        x,
        f: fx,
        iterations: max_iters,
        certified_gap: gap,
        converged: gap <= eps,
    })
}
