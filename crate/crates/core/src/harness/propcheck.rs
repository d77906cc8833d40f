//! Property suite: the model inequalities on random point pairs, and the
//! estimate-sequence invariants observed while the solver runs on instances
//! with a known optimum.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::RowMatrix;
use crate::error::{Error, Result};
use crate::fast_quartic::{solve_observed, SolverConfig};
use crate::harness::generate::{gen_instance, InstanceKind};
use crate::fast_quartic::{Event, ExitBranch};
use crate::metric::Metric;
use crate::par::{self, Exec};
use crate::quartic::{SmoothnessConstants, StructuredQuartic, TaylorModel};

/// Absolute slack allowed on every inequality.
pub const SLACK: f64 = 1e-9;
/// Relative tolerance on the exact Taylor remainder identity.
pub const TAYLOR_TOL: f64 = 1e-10;
/// Relative slack for inequalities between `O(f)`-sized quantities, where
/// rounding of the individual terms dominates.
pub const ROUNDING: f64 = 1e-12;
/// Epochs that start with a true gap below this multiple of `1 + |f*|` are
/// already at the rounding floor and are not required to halve it.
pub const HALVING_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Largest observed `lhs − rhs` (after slack); negative when every
    /// sample holds with room to spare.
    pub worst: f64,
}

impl PropertyResult {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tally(BTreeMap<String, PropertyResult>);

impl Tally {
    /// Records one check of `lhs ≤ rhs + tol`.
    pub fn check(&mut self, name: &str, lhs: f64, rhs: f64, tol: f64) {
        let margin = lhs - rhs - tol;
        let r = self.0.entry(name.to_string()).or_insert_with(|| PropertyResult {
            name: name.to_string(),
            checked: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
        });
        r.checked += 1;
        // NaN counts as a violation
        if !(margin <= 0.0) {
            r.violations += 1;
        }
        r.worst = r.worst.max(margin);
    }

    pub fn merge(&mut self, other: Tally) {
        for (k, v) in other.0 {
            match self.0.get_mut(&k) {
                Some(r) => {
                    r.checked += v.checked;
                    r.violations += v.violations;
                    r.worst = r.worst.max(v.worst);
                }
                None => {
                    self.0.insert(k, v);
                }
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.0.get(name)
    }

    pub fn results(&self) -> Vec<PropertyResult> {
        self.0.values().cloned().collect()
    }
}

pub mod names {
    pub const MODEL_UPPER_BOUND: &str = "model-upper-bound";
    pub const TAYLOR_REMAINDER: &str = "taylor-remainder";
    pub const UNIFORM_CONVEXITY: &str = "uniform-convexity";
    pub const POWER_MEAN: &str = "power-mean";
    pub const MODEL_UNIFORM_CONVEXITY: &str = "model-uniform-convexity";
    pub const RHO_CONDITION: &str = "rho-condition";
    pub const A_CONSISTENCY: &str = "a-consistency";
    pub const PSI_STATIONARITY: &str = "psi-stationarity";
    pub const ENVELOPE: &str = "psi-envelope";
    pub const GAP_VS_A: &str = "gap-vs-A";
    pub const A_GROWTH: &str = "A-growth";
    pub const A_VS_RHO: &str = "A-vs-rho";
    pub const RATE_ENVELOPE: &str = "rate-envelope";
    pub const V_BOUNDED: &str = "v-bounded";
    pub const B_BOUND: &str = "B-bound";
    pub const EARLY_EXIT: &str = "early-exit-gap";
    pub const HALVING: &str = "epoch-halving";
    pub const MONOTONE_EPOCHS: &str = "monotone-epochs";
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Checks, on `pairs` random `(x, y)` pairs:
/// `f(y) ≤ Ω_x(y)`, `f(y) − Φ_x(y) = (1/24)‖A(y−x)‖₄⁴`, quartic growth with
/// modulus `1/(72n)`, the power-mean inequality `‖v‖₄⁴ ≥ ‖v‖₂⁴/n`, and
/// `(L₃/12)`-uniform convexity of `Ω_x`.
pub fn model_inequalities(
    q: &StructuredQuartic,
    metric: &Metric,
    pairs: usize,
    seed: u64,
    exec: Exec,
) -> Result<Tally> {
    use names::*;
    let consts = SmoothnessConstants::for_quartic(q);
    let l3 = consts.l3;
    let d = q.dim();
    let n = q.rows() as f64;
    let tallies = par::map_range(exec, pairs, |i| -> Result<Tally> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64));
        let mut t = Tally::default();
        let x = random_point(&mut rng, d, 1.0);
        let y = random_point(&mut rng, d, 1.0);
        let z = random_point(&mut rng, d, 1.0);
        let h = &y - &x;
        let model = TaylorModel::new(q, &x)?;
        let fy_rel = q.eval_diff(&x, &y)?;
        let scale = 1.0 + model.value().abs() + fy_rel.abs();

        // values relative to f(x)
        let omega_y = model.omega(l3, metric, &h)? - model.value();
        t.check(MODEL_UPPER_BOUND, fy_rel, omega_y, ROUNDING * scale);

        // Φ_x(y) − f(x) term by term, without the cancellation against f(x)
        let phi_y = model.grad().dot(&h) + 0.5 * h.dot(&(model.hess() * &h)) + q.third_form(&x, &h)? / 6.0;
        let remainder = q.fourth_form(&h)? / 24.0;
        t.check(
            TAYLOR_REMAINDER,
            (fy_rel - phi_y - remainder).abs(),
            0.0,
            TAYLOR_TOL * (fy_rel.abs() + phi_y.abs() + remainder),
        );

        let ah = q.a().mul(&h);
        let l2 = ah.iter().map(|v| v * v).sum::<f64>();
        let l4 = ah.iter().map(|v| v.powi(4)).sum::<f64>();
        t.check(UNIFORM_CONVEXITY, consts.mu4 * l2 * l2, q.bregman(&x, &y)?, ROUNDING * scale);
        t.check(POWER_MEAN, l2 * l2 / n, l4, ROUNDING * l4);

        let hz = &z - &x;
        let (om_y, g_y) = model.omega_with_grad(l3, metric, &h)?;
        let om_z = model.omega(l3, metric, &hz)?;
        let dz = &z - &y;
        let lower = om_y + g_y.dot(&dz) + l3 / 12.0 * metric.b_norm_sq(&dz)?.powi(2);
        t.check(MODEL_UNIFORM_CONVEXITY, lower, om_z, ROUNDING * (scale + om_y.abs() + om_z.abs()));
        Ok(t)
    });
    let mut all = Tally::default();
    for t in tallies {
        all.merge(t?);
    }
    Ok(all)
}

/// The instance showing that the printed modulus `n/72` is wrong: `A = I₂`,
/// `x = (−1/3, 0)`, `y = x + e₁`. Returns `(remainder, μ·‖h‖⁴ with n/72,
/// μ·‖h‖⁴ with 1/(72n))`; the remainder is exactly `1/72`.
pub fn printed_modulus_counterexample() -> Result<(f64, f64, f64)> {
    let a = RowMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2)?;
    let q = StructuredQuartic::pure_quartic(a)?;
    let x = DVector::from_vec(vec![-1.0 / 3.0, 0.0]);
    let y = DVector::from_vec(vec![2.0 / 3.0, 0.0]);
    let n = 2.0;
    Ok((q.bregman(&x, &y)?, n / 72.0, 1.0 / (72.0 * n)))
}

/// Event observer checking the estimate-sequence invariants against a known
/// optimum. Feed it every solver event, then read the tally.
pub struct InvariantMonitor<'a> {
    q: &'a StructuredQuartic,
    metric: &'a Metric,
    x_star: DVector<f64>,
    f_star: f64,
    l3: f64,
    /// `Σ ρᵢ^{-1/2}` over the current epoch.
    inv_sqrt_rho: f64,
    prev_a: f64,
    last_epoch_end: Option<f64>,
    pub tally: Tally,
    /// First failure encountered while evaluating a check, if any.
    pub error: Option<String>,
}

impl<'a> InvariantMonitor<'a> {
    pub fn new(q: &'a StructuredQuartic, metric: &'a Metric, x_star: DVector<f64>, f_star: f64) -> Self {
        Self {
            q,
            metric,
            x_star,
            f_star,
            l3: SmoothnessConstants::for_quartic(q).l3,
            inv_sqrt_rho: 0.0,
            prev_a: 0.0,
            last_epoch_end: None,
            tally: Tally::default(),
            error: None,
        }
    }

    /// `f(x) − f*`, from the expansion at `x*` to avoid cancellation.
    fn gap(&self, x: &DVector<f64>) -> Result<f64> {
        self.q.eval_diff(&self.x_star, x)
    }

    pub fn observe(&mut self, ev: &Event) {
        if let Err(e) = self.try_observe(ev) {
            self.error.get_or_insert_with(|| e.to_string());
        }
    }

    fn try_observe(&mut self, ev: &Event) -> Result<()> {
        use names::*;
        let l3 = self.l3;
        match ev {
            Event::Accepted {
                state,
                budget,
                info,
                ..
            } => {
                if state.k == 1 {
                    self.inv_sqrt_rho = 0.0;
                    self.prev_a = 0.0;
                }
                let t = &mut self.tally;
                let zeta = self.metric.b_norm_sq(&(&state.x - &info.y))?;
                let eps = budget.eps_rs;
                t.check(RHO_CONDITION, (1.0 - eps) * zeta, info.rho_k, 0.0);
                t.check(RHO_CONDITION, info.rho_k, (1.0 + eps) * zeta, 0.0);
                let a = info.a_next;
                let lhs = a * a;
                let rhs = (self.prev_a + a) / (l3 * info.rho_k);
                t.check(A_CONSISTENCY, (lhs - rhs).abs(), 0.0, 1e-12 * rhs);
                self.prev_a = state.a_sum;
                self.inv_sqrt_rho += info.rho_k.powf(-0.5);

                let resid = state.psi_grad_residual(self.metric)?;
                self.tally.check(PSI_STATIONARITY, resid, 0.0, 1e-9);
                let slack = state.envelope_slack(self.metric)?;
                self.tally.check(ENVELOPE, -slack, 0.0, SLACK);

                let d2 = self.metric.b_norm_sq(&(&state.x0 - &self.x_star))?;
                let gap = self.gap(&state.x)?;
                let k = state.k as f64;
                let ak = state.a_sum;
                let t = &mut self.tally;
                t.check(GAP_VS_A, gap, d2 / (2.0 * ak), SLACK);
                t.check(A_GROWTH, 3.0 / (256.0 * l3 * d2) * ((k + 1.0) / 2.0).powi(5), ak, SLACK);
                t.check(A_VS_RHO, self.inv_sqrt_rho.powi(2) / (4.0 * l3), ak, SLACK.max(1e-12 * ak));
                t.check(
                    RATE_ENVELOPE,
                    gap,
                    128.0 * l3 * d2 * d2 / 3.0 * (2.0 / (k + 1.0)).powi(5),
                    SLACK,
                );
                let dv = self.metric.b_norm_sq(&(&state.v - &self.x_star))?;
                t.check(V_BOUNDED, dv, d2, SLACK);
                t.check(B_BOUND, state.b_sum, 0.5 * d2, SLACK);
            }
            Event::EarlyExit {
                state, budget, x, ..
            } => {
                let d2 = self.metric.b_norm_sq(&(&state.x0 - &self.x_star))?;
                let gap = self.gap(x)?;
                self.tally
                    .check(EARLY_EXIT, gap, 2.0 * l3 * budget.rho_init_minus * d2, SLACK);
            }
            Event::EpochEnd {
                x_start, x_best, ..
            } => {
                let start = self.gap(x_start)?;
                let end = self.gap(x_best)?;
                if start > HALVING_FLOOR * (1.0 + self.f_star.abs()) {
                    self.tally.check(names::HALVING, end, 0.5 * start, 0.0);
                }
                if let Some(start) = self.last_epoch_end {
                    self.tally.check(MONOTONE_EPOCHS, end, start, 0.0);
                }
                // the first epoch starts wherever the caller started
                self.last_epoch_end = Some(end);
            }
        }
        Ok(())
    }
}

/// Tags for the early-exit branches, for reports.
pub fn branch_name(b: ExitBranch) -> &'static str {
    match b {
        ExitBranch::A => "a",
        ExitBranch::B => "b",
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub instances: usize,
    pub d: usize,
    pub n: usize,
    pub pairs: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub exec: Exec,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 3,
            d: 8,
            n: 64,
            pairs: 1000,
            seed: 0,
            solver: SolverConfig::default(),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub properties: Vec<PropertyResult>,
    /// Whether the printed modulus `n/72` fails on the known counterexample,
    /// as it should.
    pub printed_modulus_refuted: bool,
    pub errors: Vec<String>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.errors.is_empty()
            && self.printed_modulus_refuted
            && self.properties.iter().all(PropertyResult::pass)
    }
}

/// Runs the model inequalities and the solver invariants on planted and
/// dense-quartic instances. Instances are processed concurrently; each solve
/// is sequential.
pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    let jobs: Vec<(InstanceKind, u64)> = (0..cfg.instances as u64)
        .flat_map(|i| {
            let s = cfg.seed.wrapping_add(i);
            [(InstanceKind::Planted, s), (InstanceKind::DenseQuartic, s)]
        })
        .collect();
    let results = par::map_slice(cfg.exec, &jobs, |&(kind, seed)| -> Result<Tally> {
        let file = gen_instance(kind, cfg.d, cfg.n, seed)?;
        let q = file.to_quartic()?;
        let metric = Metric::from_quartic(&q)?;
        // pairs are already spread over threads at the instance level
        let mut tally = model_inequalities(&q, &metric, cfg.pairs, seed, Exec::Sequential)?;
        let p = file.planted().expect("generated with a planted optimum");
        let mut mon =
            InvariantMonitor::new(&q, &metric, DVector::from_column_slice(&p.x_star), p.f_star);
        solve_observed(&q, &metric, &cfg.solver, &mut |ev| mon.observe(ev))?;
        if let Some(e) = mon.error {
            return Err(Error::Oracle(e));
        }
        tally.merge(mon.tally);
        Ok(tally)
    });
    let mut all = Tally::default();
    let mut errors = Vec::new();
    for (r, (kind, seed)) in results.into_iter().zip(&jobs) {
        match r {
            Ok(t) => all.merge(t),
            Err(e) => errors.push(format!("{kind:?} seed {seed}: {e}")),
        }
    }
    let printed_modulus_refuted = match printed_modulus_counterexample() {
        Ok((rem, printed, corrected)) => rem < printed && rem >= corrected,
        Err(e) => {
            errors.push(e.to_string());
            false
        }
    };
    SuiteReport {
        properties: all.results(),
        printed_modulus_refuted,
        errors,
    }
}
