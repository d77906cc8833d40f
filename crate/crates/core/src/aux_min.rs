//! Approximate minimization of the regularized third-order model
//! `Ω_y(y + h) = f(y) + Γ_y(h)` by a relatively smooth gradient method.
//!
//! Each iteration solves a subproblem of the form
//! `(H + L₃ρB) h = rhs` with the consistency condition `ρ = ‖h‖²_B`, a
//! one-dimensional secular equation. For dense metrics the pencil `(H, B)` is
//! diagonalized once per call, after which every trial `ρ` costs `O(d)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::{Metric, PencilSpectrum};
use crate::quartic::{StructuredQuartic, TaylorModel};

/// Relative smoothness constant of `Γ` with respect to the scaling function
/// `½hᵀHh + (L₃/4)‖h‖⁴_B`.
pub const RELATIVE_SMOOTHNESS: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;

/// Smallest tolerance the driver will request.
pub const EPS_AAM_FLOOR: f64 = 1e-14;

/// How the next iterate is obtained from the current gradient `c_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Bregman step in the scaling function: solve
    /// `∇ρ(h₊) = ∇ρ(h_t) − c_t / (1 + 1/√2)`. Monotone with a linear rate.
    #[default]
    Bregman,
    /// `h₊ = h_t + argmin_s ⟨c_t, s⟩ + (1/√2)sᵀHs + (√2L₃/4)‖s‖⁴_B`.
    /// Kept for comparison; it can stall when `H` is small relative to `B`.
    Displacement,
}

#[derive(Debug, Clone, Copy)]
pub struct AuxConfig {
    pub l3: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub rule: StepRule,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            l3: 1.0,
            eps: EPS_AAM_FLOOR,
            max_iters: 200,
            rule: StepRule::Bregman,
        }
    }
}

/// A posteriori bounds at an iterate `y + h` of the model minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// Upper bound on `Ω_y(y + h) − min Ω_y`.
    pub gap: f64,
    /// Upper bound on `‖y + h − T_B(y)‖_B`.
    pub distance: f64,
}

/// Bounds from the dual norm `g` of `∇Ω` at a point whose displacement from
/// the center is `r` in the `B`-norm.
///
/// Degree-4 uniform convexity of `Ω` with modulus `L₃/12` gives
/// `gap ≤ ¾(12/L₃)^{1/3} g^{4/3}` and `dist ≤ (6g/L₃)^{1/3}`. When that
/// distance is below `r`, every point between the iterate and the minimizer is
/// at least `r − dist` from the center, where `∇²Ω ⪰ (L₃/2)(r − dist)²B`; the
/// resulting strong convexity gives the sharper `g²/2m` and `g/m`.
pub fn certify(l3: f64, grad_dual_norm: f64, displacement: f64) -> Certificate {
    let g = grad_dual_norm;
    if g == 0.0 {
        return Certificate {
            gap: 0.0,
            distance: 0.0,
        };
    }
    let mut gap = 0.75 * (12.0 / l3).cbrt() * g.powf(4.0 / 3.0);
    let mut distance = (6.0 * g / l3).cbrt();
    if distance < displacement {
        let m = 0.5 * l3 * (displacement - distance).powi(2);
        gap = gap.min(g * g / (2.0 * m));
        distance = distance.min(g / m);
    }
    distance = distance.min((12.0 * gap / l3).powf(0.25));
    Certificate { gap, distance }
}

/// Per-iteration record handed to tracing callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxIterate {
    pub iteration: usize,
    /// `Ω_y(y + h_t)`.
    pub model_value: f64,
    pub certified_gap: f64,
    pub grad_dual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct AuxResult {
    /// `y + h_K`.
    pub x_next: DVector<f64>,
    /// Number of iterates examined, including `h₀ = 0`.
    pub iterations: usize,
    pub final_gap_bound: f64,
    /// Certified bound on the distance to the exact model minimizer.
    pub distance_bound: f64,
    /// `Ω_y(x_next)`.
    pub model_value: f64,
    /// `‖x_next − y‖_B`.
    pub displacement_b_norm: f64,
    pub linear_solves: usize,
}

impl AuxResult {
    /// The tolerance that, through the quartic-growth distance bound
    /// `(12ε/L₃)^{1/4}`, corresponds to this result's certified distance.
    pub fn effective_eps(&self, l3: f64) -> f64 {
        l3 * self.distance_bound.powi(4) / 12.0
    }
}

/// `c_t = ∇Γ_y(h) = ∇f(y) + ∇²f(y)h + ½∇³f(y)[h, h, ·] + L₃‖h‖²_B Bh`.
pub fn subproblem_gradient(
    q: &StructuredQuartic,
    metric: &Metric,
    y: &DVector<f64>,
    h: &DVector<f64>,
    l3: f64,
) -> Result<DVector<f64>> {
    TaylorModel::new(q, y)?.omega_grad(l3, metric, h)
}

/// Solutions of `(H + L₃ρB) h = rhs` as a function of `ρ`.
enum ShiftFamily<'a> {
    Spectral(PencilSpectrum),
    Iterative { metric: &'a Metric, h: &'a DMatrix<f64> },
}

impl<'a> ShiftFamily<'a> {
    fn new(metric: &'a Metric, h: &'a DMatrix<f64>) -> Result<Self> {
        if metric.is_dense() {
            let mut spec = metric.pencil(h)?;
            let scale = spec.values.amax().max(1.0);
            let lo = spec.values.min();
            if lo < -1e-8 * scale {
                return Err(Error::Numerical {
                    reason: "model Hessian is indefinite; the quartic is not convex here".into(),
                    residual: lo,
                });
            }
            spec.values.iter_mut().for_each(|v| *v = v.max(0.0));
            Ok(ShiftFamily::Spectral(spec))
        } else {
            Ok(ShiftFamily::Iterative { metric, h })
        }
    }

    /// Solves `(H + L₃ρB) h = rhs`, `ρ = ‖h‖²_B`. Returns `(h, ρ, solves)`.
    fn secular(&self, rhs: &DVector<f64>, l3: f64) -> Result<(DVector<f64>, f64, usize)> {
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok((DVector::zeros(rhs.len()), 0.0, 0));
        }
        match self {
            ShiftFamily::Spectral(spec) => {
                let z = spec.coords(rhs);
                let lam = &spec.values;
                let q = |rho: f64| -> (f64, f64) {
                    let (mut s, mut ds) = (0.0, 0.0);
                    for (zi, li) in z.iter().zip(lam.iter()) {
                        let den = li + l3 * rho;
                        let t = zi * zi / (den * den);
                        s += t;
                        ds += t / den;
                    }
                    (s, -2.0 * l3 * ds)
                };
                let rho = secular_root(|rho| {
                    let (s, ds) = q(rho);
                    (rho - s, 1.0 - ds)
                }, (z.norm_squared() / (l3 * l3)).cbrt())?;
                let coords = DVector::from_iterator(
                    z.len(),
                    z.iter().zip(lam.iter()).map(|(zi, li)| zi / (li + l3 * rho)),
                );
                Ok((spec.primal(&coords), rho, 1))
            }
            ShiftFamily::Iterative { metric, h } => {
                let mut solves = 0;
                let mut eval = |rho: f64| -> Result<(f64, DVector<f64>)> {
                    solves += 1;
                    let x = metric.solve_shift_sigma(*h, l3 * rho, rhs)?;
                    Ok((rho - metric.b_norm_sq(&x)?, x))
                };
                // ‖h(ρ)‖² ≤ ‖rhs‖²_{B⁻¹}/(L₃ρ)², so φ ≥ 0 at the cube root
                let dn = metric.dual_norm_sq(rhs)?;
                let mut hi = (dn / (l3 * l3)).cbrt();
                let (mut f_hi, mut x_hi) = eval(hi)?;
                let mut lo = 0.0;
                let mut f_lo = f64::NEG_INFINITY;
                let mut best = (f_hi.abs(), hi, x_hi.clone());
                for _ in 0..200 {
                    if (hi - lo) <= 1e-14 * hi || best.0 <= 1e-14 * best.1 {
                        break;
                    }
                    // Illinois-style regula falsi with a bisection fallback
                    let mid = if f_lo.is_finite() {
                        let t = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                        if t > lo && t < hi { t } else { 0.5 * (lo + hi) }
                    } else {
                        0.5 * (lo + hi)
                    };
                    let (f_mid, x_mid) = eval(mid)?;
                    if f_mid.abs() < best.0 {
                        best = (f_mid.abs(), mid, x_mid.clone());
                    }
                    if f_mid > 0.0 {
                        hi = mid;
                        f_hi = f_mid;
                        x_hi = x_mid;
                        if f_lo.is_finite() {
                            f_lo *= 0.5;
                        }
                    } else {
                        lo = mid;
                        f_lo = f_mid;
                        f_hi *= 0.5;
                    }
                }
                let _ = x_hi;
                Ok((best.2, best.1, solves))
            }
        }
    }
}

/// Root of `φ(ρ) = ρ − ‖h(ρ)‖²` on `(0, hi]`, where `φ` is increasing and
/// concave and `φ(hi) ≥ 0`. Newton from the right lands left of the root and
/// then increases monotonically, so only a positivity safeguard is needed.
fn secular_root<F>(phi: F, hi: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut lo, mut up) = (0.0f64, hi);
    let mut rho = hi;
    for _ in 0..200 {
        let (f, df) = phi(rho);
        if f == 0.0 {
            return Ok(rho);
        }
        if f > 0.0 {
            up = up.min(rho);
        } else {
            lo = lo.max(rho);
        }
        let mut next = rho - f / df;
        if !(next > lo && next < up) {
            next = if lo > 0.0 { 0.5 * (lo + up) } else { 0.1 * up.min(rho) };
        }
        if (next - rho).abs() <= 4.0 * f64::EPSILON * rho {
            return Ok(next);
        }
        rho = next;
    }
    let (f, _) = phi(rho);
    if f.abs() <= 1e-10 * rho {
        Ok(rho)
    } else {
        Err(Error::Numerical {
            reason: "secular equation root-finder did not converge".into(),
            residual: f,
        })
    }
}

/// Minimizer `s` of `⟨c, s⟩ + (1/√2)sᵀHs + (√2L₃/4)‖s‖⁴_B`.
pub fn solve_inner_step(
    metric: &Metric,
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    l3: f64,
) -> Result<DVector<f64>> {
    if c.len() != metric.dim() {
        return Err(Error::dim("c", metric.dim(), c.len()));
    }
    if !(l3 > 0.0) {
        return Err(Error::InvalidArgument("L3 must be positive".into()));
    }
    let family = ShiftFamily::new(metric, h)?;
    let rhs = -c * std::f64::consts::FRAC_1_SQRT_2;
    Ok(family.secular(&rhs, l3)?.0)
}

/// Minimizes `Ω_y` to a certified gap of at most `cfg.eps`.
pub fn approx_aux_min(
    q: &StructuredQuartic,
    metric: &Metric,
    y: &DVector<f64>,
    cfg: &AuxConfig,
) -> Result<AuxResult> {
    approx_aux_min_traced(q, metric, y, cfg, &mut |_| {})
}

pub fn approx_aux_min_traced(
    q: &StructuredQuartic,
    metric: &Metric,
    y: &DVector<f64>,
    cfg: &AuxConfig,
    on_iter: &mut dyn FnMut(&AuxIterate),
) -> Result<AuxResult> {
    if !(cfg.eps > 0.0) {
        return Err(Error::InvalidArgument("eps_aam must be positive".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite model center".into()));
    }
    let l3 = cfg.l3;
    let model = TaylorModel::new(q, y)?;
    let family = ShiftFamily::new(metric, model.hess())?;
    let mut solves = usize::from(metric.is_dense());
    let mut h = DVector::zeros(q.dim());
    let mut best: Option<(f64, DVector<f64>)> = None;

    for t in 0..=cfg.max_iters {
        let (value, c) = model.omega_with_grad(l3, metric, &h)?;
        let g = metric.dual_norm(&c)?;
        let bh = metric.apply(&h)?;
        let r2 = h.dot(&bh);
        let cert = certify(l3, g, r2.sqrt());
        on_iter(&AuxIterate {
            iteration: t,
            model_value: value,
            certified_gap: cert.gap,
            grad_dual_norm: g,
        });
        if best.as_ref().is_none_or(|(b, _)| cert.gap < *b) {
            best = Some((cert.gap, h.clone()));
        }
        if cert.gap <= cfg.eps {
            return Ok(AuxResult {
                x_next: y + &h,
                iterations: t + 1,
                final_gap_bound: cert.gap,
                distance_bound: cert.distance,
                model_value: value,
                displacement_b_norm: r2.sqrt(),
                linear_solves: solves,
            });
        }
        if t == cfg.max_iters {
            break;
        }
        let (next, _, used) = match cfg.rule {
            StepRule::Bregman => {
                let scaling_grad = model.hess() * &h + &bh * (l3 * r2);
                family.secular(&(scaling_grad - &c / RELATIVE_SMOOTHNESS), l3)?
            }
            StepRule::Displacement => {
                let (s, rho, used) =
                    family.secular(&(-&c * std::f64::consts::FRAC_1_SQRT_2), l3)?;
                (&h + s, rho, used)
            }
        };
        solves += used;
        h = next;
    }
    let (gap, h) = best.expect("at least one iterate");
    Err(Error::Convergence {
        iterations: cfg.max_iters + 1,
        certified_gap: gap,
        tolerance: cfg.eps,
        best: (y + h).iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::RowMatrix;

    fn one_d() -> StructuredQuartic {
        StructuredQuartic::pure_quartic(RowMatrix::from_rows(&[vec![1.0]], 1).unwrap()).unwrap()
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let m = Metric::identity(2);
        let s = solve_inner_step(&m, &DMatrix::identity(2, 2), &DVector::zeros(2), 1.0).unwrap();
        assert_eq!(s, DVector::zeros(2));
    }

    #[test]
    fn scalar_inner_step_closed_form() {
        // minimize −s + (√2/4)s⁴: s³ = 1/√2
        let m = Metric::identity(1);
        let s = solve_inner_step(&m, &DMatrix::zeros(1, 1), &DVector::from_element(1, -1.0), 1.0)
            .unwrap();
        assert!((s[0].powi(3) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn already_optimal_center() {
        let q = one_d();
        let m = Metric::from_quartic(&q).unwrap();
        let y = DVector::zeros(1);
        let r = approx_aux_min(&q, &m, &y, &AuxConfig::default()).unwrap();
        assert_eq!(r.x_next, y);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_gap_bound, 0.0);
    }

    #[test]
    fn certificate_branches() {
        let c = certify(1.0, 1e-6, 0.0);
        assert!((c.gap - 0.75 * 12f64.cbrt() * 1e-8).abs() < 1e-20);
        // far from the center the strong-convexity bound takes over
        let far = certify(1.0, 1e-12, 1.0);
        assert!(far.distance < 3e-12);
        assert!(far.gap < 1e-23);
    }

    #[test]
    fn max_iters_reports_best_iterate() {
        let q = one_d();
        let m = Metric::from_quartic(&q).unwrap();
        let cfg = AuxConfig {
            max_iters: 1,
            eps: 1e-300,
            ..Default::default()
        };
        match approx_aux_min(&q, &m, &DVector::from_element(1, 1.0), &cfg) {
            Err(Error::Convergence { best, certified_gap, .. }) => {
                assert_eq!(best.len(), 1);
                assert!(certified_gap > 0.0);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
