//! Bisection for the step parameter `ρ_k`, the approximate fixed point of
//! `ρ ↦ ζ̂_k(ρ) = ‖x_{k+1}(ρ) − y_k(ρ)‖²_B`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::aux_min::{approx_aux_min, AuxConfig, AuxResult};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::quartic::StructuredQuartic;

/// `τ_k(ρ) = 2/(1 + √(1 + 4L₃A_kρ))` together with
/// `â = (1 + √(1 + 4L₃A_kρ))/(2L₃ρ)`, the positive root of
/// `â² = (A_k + â)/(L₃ρ)`. Note `τ = â/(A_k + â)`.
pub fn tau_of_rho(a_k: f64, l3: f64, rho: f64) -> (f64, f64) {
    let s = (1.0 + 4.0 * l3 * a_k * rho).sqrt();
    (2.0 / (1.0 + s), (1.0 + s) / (2.0 * l3 * rho))
}

/// One evaluation of `ζ̂_k` and everything needed to accept it.
#[derive(Debug, Clone)]
pub struct ZetaEval {
    pub rho: f64,
    pub zeta: f64,
    pub tau: f64,
    pub a_next: f64,
    pub y: DVector<f64>,
    pub x_next: DVector<f64>,
    pub aux: AuxResult,
}

impl ZetaEval {
    /// Whether `(1−ε)ζ̂ ≤ ρ ≤ (1+ε)ζ̂`.
    pub fn satisfies(&self, eps_rs: f64) -> bool {
        (1.0 - eps_rs) * self.zeta <= self.rho && self.rho <= (1.0 + eps_rs) * self.zeta
    }
}

/// Evaluates `ζ̂_k(ρ)`: forms `y_k(ρ) = (1−τ)x_k + τv_k` and runs the model
/// minimizer from it.
pub fn zeta_hat(
    q: &StructuredQuartic,
    metric: &Metric,
    x_k: &DVector<f64>,
    v_k: &DVector<f64>,
    a_k: f64,
    rho: f64,
    aux: &AuxConfig,
) -> Result<ZetaEval> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let (tau, a_next) = tau_of_rho(a_k, aux.l3, rho);
    let y = x_k * (1.0 - tau) + v_k * tau;
    let res = approx_aux_min(q, metric, &y, aux)?;
    let zeta = res.displacement_b_norm.powi(2);
    Ok(ZetaEval {
        rho,
        zeta,
        tau,
        a_next,
        y,
        x_next: res.x_next.clone(),
        aux: res,
    })
}

/// Which way the bracket moved after an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `ρ̂ > ζ̂ + band`: the upper end moves down.
    Upper,
    /// `ρ̂ < ζ̂ − band`: the lower end moves up.
    Lower,
    Accept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionEntry {
    pub rho: f64,
    pub zeta: f64,
    pub band: f64,
    pub branch: Branch,
    pub rho_lo: f64,
    pub rho_hi: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub eps_rs: f64,
    /// Surrogate for the squared level-set diameter.
    pub p_hat: f64,
    pub max_bisections: usize,
}

#[derive(Debug, Clone)]
pub struct RhoSearchResult {
    pub rho_k: f64,
    pub x_next: DVector<f64>,
    pub a_next: f64,
    pub zeta: f64,
    pub y: DVector<f64>,
    pub aux: AuxResult,
    /// Number of `ζ̂` evaluations made by the search itself.
    pub evaluations: usize,
    pub bracket_final: (f64, f64),
    pub log: Vec<BisectionEntry>,
    /// Inner iterations summed over every evaluation of the search.
    pub inner_iterations: usize,
    pub linear_solves: usize,
}

/// `δ̃ = 6(ε/L₃)^{1/4}P^{1/2} + (12ε/L₃)^{1/2}`, the slack within which `ζ̂`
/// may differ from the exact `ζ`.
pub fn zeta_tolerance(eps_aam: f64, l3: f64, p_hat: f64) -> f64 {
    6.0 * (eps_aam / l3).powf(0.25) * p_hat.sqrt() + (12.0 * eps_aam / l3).sqrt()
}

/// Accept band at one evaluation: the smaller of `δ̃` (computed from the
/// evaluation's own certified inner accuracy) and `ε_rs·ζ̂`, so an accepted
/// point always meets the relative condition.
fn band(eval: &ZetaEval, l3: f64, cfg: &SearchConfig) -> f64 {
    let eps = eval.aux.effective_eps(l3);
    zeta_tolerance(eps, l3, cfg.p_hat).min(cfg.eps_rs * eval.zeta)
}

/// Accepted `(ρ, payload)` if any, the log, and every rejected evaluation.
pub type BisectOutcome<T> = (Option<(f64, T)>, Vec<BisectionEntry>, Vec<(f64, T)>);

/// Generic bisection for `ρ ≈ z(ρ)` on `[lo, hi]`. The closure returns
/// `(z(ρ), accept band, payload)`. Returns the accepted point or, when the
/// budget runs out, `None` together with the log and every evaluated payload.
pub fn bisect_fixed_point<T, F>(
    lo: f64,
    hi: f64,
    max_bisections: usize,
    mut eval: F,
) -> Result<BisectOutcome<T>>
where
    F: FnMut(f64) -> Result<(f64, f64, T)>,
{
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
    }
    let (mut rho_lo, mut rho_hi) = (lo, hi);
    let mut log = Vec::new();
    let mut seen = Vec::new();
    for _ in 0..max_bisections {
        let mid = 0.5 * (rho_lo + rho_hi);
        let (zeta, band, payload) = eval(mid)?;
        let branch = if mid > zeta + band {
            rho_hi = mid;
            Branch::Upper
        } else if mid < zeta - band {
            rho_lo = mid;
            Branch::Lower
        } else {
            Branch::Accept
        };
        log.push(BisectionEntry {
            rho: mid,
            zeta,
            band,
            branch,
            rho_lo,
            rho_hi,
        });
        if branch == Branch::Accept {
            return Ok((Some((mid, payload)), log, seen));
        }
        seen.push((mid, payload));
        if rho_hi - rho_lo <= f64::EPSILON * rho_hi {
            break;
        }
    }
    Ok((None, log, seen))
}

/// Bisection on `[rho_lo, rho_hi]`, which the caller guarantees brackets the
/// fixed point. The accepted evaluation is re-checked against
/// `(1−ε_rs)ζ̂ ≤ ρ ≤ (1+ε_rs)ζ̂` before returning; on budget exhaustion the
/// lower end is evaluated (or reused) and returned only if it passes.
#[allow(clippy::too_many_arguments)]
pub fn rho_search(
    q: &StructuredQuartic,
    metric: &Metric,
    x_k: &DVector<f64>,
    v_k: &DVector<f64>,
    a_k: f64,
    rho_lo: f64,
    rho_hi: f64,
    cfg: &SearchConfig,
    aux: &AuxConfig,
) -> Result<RhoSearchResult> {
    if !(cfg.eps_rs > 0.0 && cfg.eps_rs < 1.0) {
        return Err(Error::InvalidArgument("eps_rs must lie in (0, 1)".into()));
    }
    let l3 = aux.l3;
    let mut inner = 0;
    let mut solves = 0;
    let mut evaluations = 0;
    let (found, mut log, seen) = bisect_fixed_point(rho_lo, rho_hi, cfg.max_bisections, |rho| {
        let e = zeta_hat(q, metric, x_k, v_k, a_k, rho, aux)?;
        evaluations += 1;
        inner += e.aux.iterations;
        solves += e.aux.linear_solves;
        Ok((e.zeta, band(&e, l3, cfg), e))
    })?;
    let bracket_final = log.last().map_or((rho_lo, rho_hi), |e| (e.rho_lo, e.rho_hi));

    let accepted = match found {
        Some((_, e)) => Some(e),
        None => {
            // the lower end of the final bracket, reused when it was a midpoint
            let lo = bracket_final.0;
            let reuse = seen.into_iter().find(|(r, _)| *r == lo).map(|(_, e)| e);
            let e = match reuse {
                Some(e) => e,
                None => {
                    let e = zeta_hat(q, metric, x_k, v_k, a_k, lo, aux)?;
                    evaluations += 1;
                    inner += e.aux.iterations;
                    solves += e.aux.linear_solves;
                    e
                }
            };
            Some(e)
        }
    };
    let e = accepted.expect("always set");
    if !e.satisfies(cfg.eps_rs) {
        log.push(BisectionEntry {
            rho: e.rho,
            zeta: e.zeta,
            band: cfg.eps_rs * e.zeta,
            branch: if e.rho > e.zeta { Branch::Upper } else { Branch::Lower },
            rho_lo: bracket_final.0,
            rho_hi: bracket_final.1,
        });
        return Err(Error::Search {
            reason: format!(
                "returned rho {:e} fails the relative check against zeta {:e} (eps_rs {:e})",
                e.rho, e.zeta, cfg.eps_rs
            ),
            log,
        });
    }
    Ok(RhoSearchResult {
        rho_k: e.rho,
        x_next: e.x_next,
        a_next: e.a_next,
        zeta: e.zeta,
        y: e.y,
        aux: e.aux,
        evaluations,
        bracket_final,
        log,
        inner_iterations: inner,
        linear_solves: solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::RowMatrix;

    #[test]
    fn tau_trivial_and_worked_example() {
        assert_eq!(tau_of_rho(0.0, 1.0, 3.7).0, 1.0);
        let (tau, a) = tau_of_rho(2.0, 1.0, 1.0);
        assert_eq!(tau, 0.5);
        assert_eq!(a, 2.0);
        assert_eq!(a * a, (2.0 + a) / 1.0);
    }

    #[test]
    fn tau_decreases_in_rho() {
        let mut prev = 1.0;
        for i in 1..200 {
            let (tau, _) = tau_of_rho(1.5, 1.0, 1e-3 * i as f64);
            assert!(tau < prev);
            prev = tau;
        }
    }

    #[test]
    fn constant_map_converges() {
        let z = 0.3;
        let m = 40;
        let (found, log, _) =
            bisect_fixed_point(0.01, 1.0, m, |_| Ok((z, 0.0, ()))).unwrap();
        assert!(found.is_none());
        let (lo, hi) = (log.last().unwrap().rho_lo, log.last().unwrap().rho_hi);
        assert!(lo <= z && z <= hi);
        assert!(hi - lo <= 0.99 / 2f64.powi(m as i32) * 1.0001);
    }

    #[test]
    fn immediate_accept() {
        let (found, log, _) = bisect_fixed_point(1.0, 3.0, 10, |r| Ok((r, 0.0, 7))).unwrap();
        assert_eq!(found, Some((2.0, 7)));
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn zeta_at_minimizer_is_zero() {
        let q = StructuredQuartic::pure_quartic(RowMatrix::from_rows(&[vec![1.0]], 1).unwrap())
            .unwrap();
        let m = Metric::from_quartic(&q).unwrap();
        let x = DVector::from_element(1, 1.0);
        let v = DVector::zeros(1);
        let e = zeta_hat(&q, &m, &x, &v, 0.0, 0.5, &AuxConfig::default()).unwrap();
        assert_eq!(e.tau, 1.0);
        assert_eq!(e.zeta, 0.0);
    }
}
