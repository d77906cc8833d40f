//! Accelerated third-order method for structured quartics: an estimate
//! sequence outer loop whose step weights come from the ρ bisection, plus the
//! restart wrapper that turns the sublinear smooth rate into linear
//! convergence under quartic growth.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::aux_min::{AuxConfig, StepRule, EPS_AAM_FLOOR};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::quartic::{SmoothnessConstants, StructuredQuartic};
use crate::rho_search::{rho_search, zeta_hat, BisectionEntry, SearchConfig, ZetaEval};

/// Largest admissible `ρ_init⁻`; the lower bracket must stay below `1/2`.
const RHO_MINUS_CAP: f64 = 0.49;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Target accuracy `ε` on `f(x) − f*`.
    pub eps: f64,
    /// Inner tolerance; derived from the budget when `None`.
    pub eps_aam: Option<f64>,
    /// `ρ_init⁻`; `ε/(2L₃P̂)` when `None`.
    pub rho_min: Option<f64>,
    /// Seed for the squared diameter surrogate `P̂`, e.g. `4‖x₀ − x_ref‖²_B`.
    pub p_hat: Option<f64>,
    /// Lower limit for the relative ρ tolerance.
    pub eps_rs_floor: f64,
    pub max_epochs: usize,
    /// Overrides the restart length `⌈(512L₃/(3μ₄))^{1/5}⌉`.
    pub epoch_length: Option<usize>,
    pub max_bisections: usize,
    pub aux_max_iters: usize,
    pub step_rule: StepRule,
    /// Starting point; the origin when `None`.
    pub x0: Option<DVector<f64>>,
    /// Record wall-clock time. Off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            eps_aam: None,
            rho_min: None,
            p_hat: None,
            eps_rs_floor: 1e-6,
            max_epochs: 100,
            epoch_length: None,
            max_bisections: 128,
            aux_max_iters: 200,
            step_rule: StepRule::Bregman,
            x0: None,
            timing: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        for (name, v) in [("eps_aam", self.eps_aam), ("rho_min", self.rho_min), ("p_hat", self.p_hat)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{name} must be positive")));
                }
            }
        }
        if self.rho_min.is_some_and(|r| r >= 0.5) {
            return Err(Error::InvalidArgument("rho_min must be below 1/2".into()));
        }
        if !(self.eps_rs_floor > 0.0 && self.eps_rs_floor <= 0.5) {
            return Err(Error::InvalidArgument("eps_rs_floor must lie in (0, 1/2]".into()));
        }
        Ok(())
    }
}

/// Computable stand-ins for the problem constants of the analysis, and the
/// tolerances derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBudget {
    pub l3: f64,
    /// Squared diameter surrogate; never decreases.
    pub p_hat: f64,
    /// Running max of `‖∇f‖²_{B⁻¹}`.
    pub g_hat: f64,
    pub t_hat: f64,
    pub rho_init_minus: f64,
    pub rho_init_plus: f64,
    pub eps_fs: f64,
    pub eps_rs: f64,
    pub q_hat: f64,
    pub eps_aam: f64,
}

impl TheoryBudget {
    /// Budget for an epoch starting at `x0`. Without a seed, `P̂` is four
    /// times the square of the quartic-growth distance bound
    /// `‖x₀ − x*‖³_B ≤ ‖∇f(x₀)‖_{B⁻¹}/(2μ₄)`.
    pub fn seed(
        consts: &SmoothnessConstants,
        grad_dual_norm: f64,
        cfg: &SolverConfig,
    ) -> Self {
        let p_hat = cfg.p_hat.unwrap_or_else(|| {
            let d = (grad_dual_norm / (2.0 * consts.mu4)).cbrt();
            (4.0 * d * d).max(f64::MIN_POSITIVE)
        });
        Self::from_surrogates(consts.l3, cfg.eps, p_hat, grad_dual_norm.powi(2), cfg)
    }

    pub fn from_surrogates(l3: f64, eps: f64, p_hat: f64, g_hat: f64, cfg: &SolverConfig) -> Self {
        let rho_init_minus = cfg
            .rho_min
            .unwrap_or_else(|| (eps / (2.0 * l3 * p_hat)).min(RHO_MINUS_CAP));
        let mut b = Self {
            l3,
            p_hat,
            g_hat,
            t_hat: 0.0,
            rho_init_minus,
            rho_init_plus: p_hat.max(2.0 * rho_init_minus),
            eps_fs: 0.0,
            eps_rs: 0.0,
            q_hat: 0.0,
            eps_aam: 0.0,
        };
        b.derive(cfg);
        b
    }

    fn derive(&mut self, cfg: &SolverConfig) {
        let (l3, p, rho) = (self.l3, self.p_hat, self.rho_init_minus);
        self.t_hat = self.g_hat / l3 + 0.01;
        self.eps_fs = if self.g_hat > 0.0 {
            (3.0 * l3 * l3 * p * rho / (32.0 * self.g_hat)).min(0.5)
        } else {
            0.5
        };
        let eps_rs = (3.0 * l3 * rho * p * p / (16.0 * self.t_hat)).min(rho).min(0.5);
        self.eps_rs = eps_rs.max(cfg.eps_rs_floor);
        self.q_hat = 6.0 * p.sqrt() / l3.powf(0.25) + 5.0 / l3.sqrt();
        self.eps_aam = cfg.eps_aam.unwrap_or_else(|| {
            let a = (self.eps_rs.powi(2) / (100.0 * self.q_hat)).powi(4);
            let b = (self.eps_fs * rho / (self.q_hat * (1.0 + self.eps_fs))).powi(4);
            a.min(b).clamp(EPS_AAM_FLOOR, 0.5)
        });
    }

    /// Folds in an observed squared distance between iterates. `ρ_init⁻`
    /// stays fixed; only the upper bracket and the accept band widen.
    pub fn observe_distance(&mut self, d2: f64) {
        if d2 > self.p_hat {
            self.p_hat = d2;
            self.rho_init_plus = self.rho_init_plus.max(d2);
            self.q_hat = 6.0 * d2.sqrt() / self.l3.powf(0.25) + 5.0 / self.l3.sqrt();
        }
    }

    pub fn observe_gradient(&mut self, g2: f64) {
        if g2 > self.g_hat {
            self.g_hat = g2;
            self.t_hat = g2 / self.l3 + 0.01;
        }
    }

    /// `Q̂·ε^{1/4}` for an inner solve whose certified distance corresponds
    /// to tolerance `eps`.
    pub fn probe_slack(&self, eps: f64) -> f64 {
        self.q_hat * eps.powf(0.25)
    }

    pub fn aux_config(&self, cfg: &SolverConfig) -> AuxConfig {
        AuxConfig {
            l3: self.l3,
            eps: self.eps_aam,
            max_iters: cfg.aux_max_iters,
            rule: cfg.step_rule,
        }
    }

    pub fn search_config(&self, cfg: &SolverConfig) -> SearchConfig {
        SearchConfig {
            eps_rs: self.eps_rs,
            p_hat: self.p_hat,
            max_bisections: cfg.max_bisections,
        }
    }
}

/// State of the estimate sequence
/// `ψ_k(x) = ½‖x − x₀‖²_B + Σ aᵢ[f(xᵢ) + ⟨∇f(xᵢ), x − xᵢ⟩]`.
///
/// Function values are stored relative to `f(x₀)`, so `psi_scalar` is
/// `Σ aᵢ[f(xᵢ) − f(x₀) + ⟨∇f(xᵢ), x₀ − xᵢ⟩]` and `ψ_k(x) − A_k f(x₀) =
/// ½‖x − x₀‖² + ⟨psi_lin, x − x₀⟩ + psi_scalar`.
#[derive(Debug, Clone)]
pub struct AccelState {
    pub x0: DVector<f64>,
    pub f0: f64,
    pub x: DVector<f64>,
    /// `f(x_k) − f(x₀)`.
    pub fx_rel: f64,
    pub grad: DVector<f64>,
    pub v: DVector<f64>,
    pub a_sum: f64,
    pub b_sum: f64,
    pub psi_lin: DVector<f64>,
    pub psi_scalar: f64,
    pub k: usize,
}

impl AccelState {
    pub fn new(q: &StructuredQuartic, x0: &DVector<f64>) -> Result<Self> {
        let (f0, grad) = q.eval_grad(x0)?;
        Ok(Self {
            x0: x0.clone(),
            f0,
            x: x0.clone(),
            fx_rel: 0.0,
            grad,
            v: x0.clone(),
            a_sum: 0.0,
            b_sum: 0.0,
            psi_lin: DVector::zeros(x0.len()),
            psi_scalar: 0.0,
            k: 0,
        })
    }

    /// `ψ_k(x) − A_k f(x₀)`.
    pub fn psi_rel(&self, metric: &Metric, x: &DVector<f64>) -> Result<f64> {
        let d = x - &self.x0;
        Ok(0.5 * metric.b_norm_sq(&d)? + self.psi_lin.dot(&d) + self.psi_scalar)
    }

    /// `ψ_k* − A_k f(x₀) = psi_scalar − ½‖psi_lin‖²_{B⁻¹}`.
    pub fn psi_star_rel(&self, metric: &Metric) -> Result<f64> {
        Ok(self.psi_scalar - 0.5 * metric.dual_norm_sq(&self.psi_lin)?)
    }

    /// `ψ_k* − (A_k f(x_k) + B_k)`; nonnegative when the envelope holds.
    pub fn envelope_slack(&self, metric: &Metric) -> Result<f64> {
        Ok(self.psi_star_rel(metric)? - (self.a_sum * self.fx_rel + self.b_sum))
    }

    /// `‖∇ψ_k(v_k)‖_{B⁻¹}`.
    pub fn psi_grad_residual(&self, metric: &Metric) -> Result<f64> {
        let r = metric.apply(&(&self.v - &self.x0))? + &self.psi_lin;
        metric.dual_norm(&r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitBranch {
    /// `ρ⁻ > (1 + ε_fs)ζ̂(ρ⁻)`.
    A,
    /// `ρ⁻ > ζ̂(ρ⁻) − Q̂ε^{1/4}`.
    B,
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub rho_k: f64,
    pub a_next: f64,
    pub zeta: f64,
    /// The extrapolated point `y_k(ρ_k)` the accepted step was taken from.
    pub y: DVector<f64>,
    pub aux_iterations: usize,
    pub rho_evaluations: usize,
    pub linear_solves: usize,
    pub search_log: Vec<BisectionEntry>,
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Accepted(StepInfo),
    EarlyExit {
        x: DVector<f64>,
        branch: ExitBranch,
        aux_iterations: usize,
        linear_solves: usize,
    },
}

fn accumulate(counts: &mut (usize, usize, usize), e: &ZetaEval) {
    counts.0 += e.aux.iterations;
    counts.1 += 1;
    counts.2 += e.aux.linear_solves;
}

/// One outer iteration. On acceptance `state` advances to `k + 1`.
pub fn step(
    q: &StructuredQuartic,
    metric: &Metric,
    state: &mut AccelState,
    budget: &mut TheoryBudget,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let k = state.k;
    let aux = budget.aux_config(cfg);
    let l3 = budget.l3;
    // (aux iterations, ζ̂ evaluations, linear solves)
    let mut counts = (0, 0, 0);

    let rho_lo = budget.rho_init_minus;
    let probe = zeta_hat(q, metric, &state.x, &state.v, state.a_sum, rho_lo, &aux)
        .map_err(|e| e.at_iteration(k))?;
    accumulate(&mut counts, &probe);
    let slack = budget.probe_slack(probe.aux.effective_eps(l3));
    let branch = if rho_lo > (1.0 + budget.eps_fs) * probe.zeta {
        Some(ExitBranch::A)
    } else if rho_lo > probe.zeta - slack {
        Some(ExitBranch::B)
    } else {
        None
    };
    if let Some(branch) = branch {
        return Ok(StepOutcome::EarlyExit {
            x: probe.x_next,
            branch,
            aux_iterations: counts.0,
            linear_solves: counts.2,
        });
    }

    // make sure the upper end really lies above the fixed point
    let mut rho_hi = budget.rho_init_plus.max(2.0 * rho_lo);
    let mut doublings = 0;
    loop {
        let top = zeta_hat(q, metric, &state.x, &state.v, state.a_sum, rho_hi, &aux)
            .map_err(|e| e.at_iteration(k))?;
        accumulate(&mut counts, &top);
        if rho_hi >= top.zeta {
            break;
        }
        doublings += 1;
        if doublings > 64 {
            return Err(Error::Search {
                reason: format!("no upper bracket found: zeta({rho_hi:e}) = {:e}", top.zeta),
                log: Vec::new(),
            }
            .at_iteration(k));
        }
        rho_hi = 2.0 * top.zeta.max(rho_hi);
        budget.observe_distance(rho_hi);
    }

    let res = rho_search(
        q,
        metric,
        &state.x,
        &state.v,
        state.a_sum,
        rho_lo,
        rho_hi,
        &budget.search_config(cfg),
        &aux,
    )
    .map_err(|e| e.at_iteration(k))?;
    counts.0 += res.inner_iterations;
    counts.1 += res.evaluations;
    counts.2 += res.linear_solves;

    // ψ_{k+1} = ψ_k + a[f(x₊) + ⟨∇f(x₊), · − x₊⟩]
    let x_next = res.x_next;
    let a = res.a_next;
    let grad = q.grad(&x_next)?;
    let fx_rel = q.eval_diff(&state.x0, &x_next)?;
    let breg = q.bregman(&x_next, &state.x0)?;
    state.psi_lin += &grad * a;
    state.psi_scalar -= a * breg;
    state.a_sum += a;
    state.b_sum += 3.0 * l3 / 16.0 * state.a_sum * res.zeta * res.zeta;
    state.v = &state.x0 - metric.solve_b(&state.psi_lin)?;
    counts.2 += 1;
    state.x = x_next;
    state.fx_rel = fx_rel;
    budget.observe_gradient(metric.dual_norm_sq(&grad)?);
    budget.observe_distance(res.zeta);
    budget.observe_distance(4.0 * metric.b_norm_sq(&(&state.x - &state.x0))?);
    state.grad = grad;
    state.k += 1;

    Ok(StepOutcome::Accepted(StepInfo {
        rho_k: res.rho_k,
        a_next: a,
        zeta: res.zeta,
        y: res.y,
        aux_iterations: counts.0,
        rho_evaluations: counts.1,
        linear_solves: counts.2,
        search_log: res.log,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    GapMet,
    EarlyExitA,
    EarlyExitB,
    EpochCap,
    Failure,
}

/// One record per outer iteration (accepted step or early exit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub k: usize,
    pub f: f64,
    pub dual_grad_norm: f64,
    #[serde(rename = "A_k")]
    pub a_k: f64,
    pub rho_k: Option<f64>,
    pub aux_iterations: usize,
    pub rho_evaluations: usize,
    /// `"accepted"`, `"early-exit-a"` or `"early-exit-b"`.
    pub branch: String,
    pub wall_nanos: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub f_start: f64,
    pub f_end: f64,
    /// `f(end) − f(start)`, computed without cancellation.
    pub decrease: f64,
    pub iterations: usize,
    pub exit_reason: ExitReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub certified_gap: f64,
    pub outer_iterations: usize,
    pub epochs: usize,
    pub aux_iterations_total: usize,
    pub rho_evaluations_total: usize,
    pub linear_solves_total: usize,
    pub wall_nanos: u64,
    pub exit_reason: ExitReason,
    pub epoch_summaries: Vec<EpochSummary>,
    pub trace: Vec<TraceRecord>,
}

/// Notifications for observers that need more than the trace, such as the
/// invariant checks in the test suite.
#[derive(Debug)]
pub enum Event<'a> {
    Accepted {
        epoch: usize,
        state: &'a AccelState,
        budget: &'a TheoryBudget,
        info: &'a StepInfo,
    },
    EarlyExit {
        epoch: usize,
        state: &'a AccelState,
        budget: &'a TheoryBudget,
        x: &'a DVector<f64>,
        branch: ExitBranch,
    },
    EpochEnd {
        epoch: usize,
        x_start: &'a DVector<f64>,
        x_best: &'a DVector<f64>,
        summary: &'a EpochSummary,
    },
}

struct Counters {
    outer: usize,
    aux: usize,
    rho_evals: usize,
    solves: usize,
    started: Option<Instant>,
}

impl Counters {
    fn new(timing: bool) -> Self {
        Self {
            outer: 0,
            aux: 0,
            rho_evals: 0,
            solves: 0,
            started: timing.then(Instant::now),
        }
    }

    fn nanos(&self) -> u64 {
        self.started.map_or(0, |t| t.elapsed().as_nanos() as u64)
    }
}

struct EpochResult {
    x_best: DVector<f64>,
    summary: EpochSummary,
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    q: &StructuredQuartic,
    metric: &Metric,
    consts: &SmoothnessConstants,
    x0: &DVector<f64>,
    max_steps: usize,
    epoch: usize,
    cfg: &SolverConfig,
    counters: &mut Counters,
    trace: &mut Vec<TraceRecord>,
    on_event: &mut dyn FnMut(&Event),
) -> Result<EpochResult> {
    let mut state = AccelState::new(q, x0)?;
    let g0 = metric.dual_norm(&state.grad)?;
    let mut budget = TheoryBudget::seed(consts, g0, cfg);
    let mut best = (0.0, x0.clone());
    let mut exit = ExitReason::EpochCap;

    for _ in 0..max_steps {
        let g = metric.dual_norm(&state.grad)?;
        if budget.p_hat.sqrt() * g <= cfg.eps || g == 0.0 {
            exit = ExitReason::GapMet;
            break;
        }
        match step(q, metric, &mut state, &mut budget, cfg)? {
            StepOutcome::Accepted(info) => {
                counters.outer += 1;
                counters.aux += info.aux_iterations;
                counters.rho_evals += info.rho_evaluations;
                counters.solves += info.linear_solves;
                if state.fx_rel < best.0 {
                    best = (state.fx_rel, state.x.clone());
                }
                trace.push(TraceRecord {
                    epoch,
                    k: state.k,
                    f: state.f0 + state.fx_rel,
                    dual_grad_norm: metric.dual_norm(&state.grad)?,
                    a_k: state.a_sum,
                    rho_k: Some(info.rho_k),
                    aux_iterations: info.aux_iterations,
                    rho_evaluations: info.rho_evaluations,
                    branch: "accepted".into(),
                    wall_nanos: counters.nanos(),
                });
                on_event(&Event::Accepted {
                    epoch,
                    state: &state,
                    budget: &budget,
                    info: &info,
                });
            }
            StepOutcome::EarlyExit {
                x,
                branch,
                aux_iterations,
                linear_solves,
            } => {
                counters.aux += aux_iterations;
                counters.rho_evals += 1;
                counters.solves += linear_solves;
                let f_rel = q.eval_diff(x0, &x)?;
                if f_rel < best.0 {
                    best = (f_rel, x.clone());
                }
                exit = match branch {
                    ExitBranch::A => ExitReason::EarlyExitA,
                    ExitBranch::B => ExitReason::EarlyExitB,
                };
                trace.push(TraceRecord {
                    epoch,
                    k: state.k,
                    f: state.f0 + f_rel,
                    dual_grad_norm: metric.dual_norm(&q.grad(&x)?)?,
                    a_k: state.a_sum,
                    rho_k: None,
                    aux_iterations,
                    rho_evaluations: 1,
                    branch: match branch {
                        ExitBranch::A => "early-exit-a".into(),
                        ExitBranch::B => "early-exit-b".into(),
                    },
                    wall_nanos: counters.nanos(),
                });
                on_event(&Event::EarlyExit {
                    epoch,
                    state: &state,
                    budget: &budget,
                    x: &x,
                    branch,
                });
                break;
            }
        }
    }
    let summary = EpochSummary {
        epoch,
        f_start: state.f0,
        f_end: state.f0 + best.0,
        decrease: best.0,
        iterations: state.k,
        exit_reason: exit,
    };
    on_event(&Event::EpochEnd {
        epoch,
        x_start: x0,
        x_best: &best.1,
        summary: &summary,
    });
    Ok(EpochResult {
        x_best: best.1,
        summary,
    })
}

fn start_point(q: &StructuredQuartic, cfg: &SolverConfig) -> Result<DVector<f64>> {
    match &cfg.x0 {
        Some(x) if x.len() != q.dim() => Err(Error::Dimension {
            what: "x0",
            expected: q.dim(),
            got: x.len(),
        }),
        Some(x) => Ok(x.clone()),
        None => Ok(DVector::zeros(q.dim())),
    }
}

/// Runs the accelerated method without restarts for at most `max_steps`
/// outer iterations, stopping early on either early-exit branch or when
/// `√P̂‖∇f(x_k)‖_{B⁻¹} ≤ ε`.
pub fn solve_smooth(
    q: &StructuredQuartic,
    metric: &Metric,
    cfg: &SolverConfig,
    max_steps: usize,
    on_event: &mut dyn FnMut(&Event),
) -> Result<SolveReport> {
    cfg.validate()?;
    let consts = SmoothnessConstants::for_quartic(q);
    let x0 = start_point(q, cfg)?;
    let mut counters = Counters::new(cfg.timing);
    let mut trace = Vec::new();
    let r = run_epoch(
        q, metric, &consts, &x0, max_steps, 0, cfg, &mut counters, &mut trace, on_event,
    )?;
    let g = metric.dual_norm(&q.grad(&r.x_best)?)?;
    Ok(SolveReport {
        x_final: r.x_best.iter().copied().collect(),
        f_final: r.summary.f_end,
        certified_gap: consts.gap_certificate(g),
        outer_iterations: counters.outer,
        epochs: 1,
        aux_iterations_total: counters.aux,
        rho_evaluations_total: counters.rho_evals,
        linear_solves_total: counters.solves,
        wall_nanos: counters.nanos(),
        exit_reason: r.summary.exit_reason,
        epoch_summaries: vec![r.summary],
        trace,
    })
}

/// Restarted solver: epochs of `⌈(512L₃/(3μ₄))^{1/5}⌉` accelerated steps,
/// each restarted from the previous epoch's best point, until the
/// quartic-growth certificate drops to `ε`.
pub fn solve(q: &StructuredQuartic, metric: &Metric, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_observed(q, metric, cfg, &mut |_| {})
}

pub fn solve_observed(
    q: &StructuredQuartic,
    metric: &Metric,
    cfg: &SolverConfig,
    on_event: &mut dyn FnMut(&Event),
) -> Result<SolveReport> {
    cfg.validate()?;
    let consts = SmoothnessConstants::for_quartic(q);
    let epoch_len = cfg.epoch_length.unwrap_or_else(|| consts.epoch_length());
    let mut x = start_point(q, cfg)?;
    let mut counters = Counters::new(cfg.timing);
    let mut trace = Vec::new();
    let mut summaries = Vec::new();

    let mut epoch = 0;
    loop {
        let (f, grad) = q.eval_grad(&x)?;
        let gap = consts.gap_certificate(metric.dual_norm(&grad)?);
        if gap <= cfg.eps || epoch == cfg.max_epochs {
            let report = SolveReport {
                x_final: x.iter().copied().collect(),
                f_final: f,
                certified_gap: gap,
                outer_iterations: counters.outer,
                epochs: epoch,
                aux_iterations_total: counters.aux,
                rho_evaluations_total: counters.rho_evals,
                linear_solves_total: counters.solves,
                wall_nanos: counters.nanos(),
                exit_reason: if gap <= cfg.eps {
                    ExitReason::GapMet
                } else {
                    ExitReason::EpochCap
                },
                epoch_summaries: summaries,
                trace,
            };
            if gap <= cfg.eps {
                return Ok(report);
            }
            return Err(Error::EpochCap(Box::new(report)));
        }
        let r = run_epoch(
            q,
            metric,
            &consts,
            &x,
            epoch_len,
            epoch,
            cfg,
            &mut counters,
            &mut trace,
            on_event,
        )
        .map_err(|e| match e {
            Error::Outer { .. } => e,
            other => other.at_iteration(counters.outer),
        })?;
        x = r.x_best;
        summaries.push(r.summary);
        epoch += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::RowMatrix;

    fn pure(rows: &[Vec<f64>], d: usize) -> (StructuredQuartic, Metric) {
        let q = StructuredQuartic::pure_quartic(RowMatrix::from_rows(rows, d).unwrap()).unwrap();
        let m = Metric::from_quartic(&q).unwrap();
        (q, m)
    }

    #[test]
    fn optimal_start_returns_immediately() {
        let (q, m) = pure(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2);
        let r = solve(&q, &m, &SolverConfig::default()).unwrap();
        assert_eq!(r.epochs, 0);
        assert_eq!(r.outer_iterations, 0);
        assert_eq!(r.exit_reason, ExitReason::GapMet);
    }

    #[test]
    fn first_step_has_unit_tau() {
        let (q, m) = pure(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2);
        let cfg = SolverConfig {
            x0: Some(DVector::from_vec(vec![1.0, 1.0])),
            ..Default::default()
        };
        let mut state = AccelState::new(&q, cfg.x0.as_ref().unwrap()).unwrap();
        assert_eq!(state.v, state.x);
        let consts = SmoothnessConstants::for_quartic(&q);
        let g = m.dual_norm(&state.grad).unwrap();
        let mut budget = TheoryBudget::seed(&consts, g, &cfg);
        assert!(budget.rho_init_minus < budget.rho_init_plus);
        assert!(budget.eps_fs > 0.0 && budget.eps_fs <= 0.5);
        assert!(budget.eps_rs > 0.0 && budget.eps_rs <= 0.5);
        if let StepOutcome::Accepted(info) = step(&q, &m, &mut state, &mut budget, &cfg).unwrap() {
            // A₀ = 0 forces a² = a/(L₃ρ)
            assert!((info.a_next * info.rho_k - 1.0).abs() < 1e-12);
            assert!(state.psi_grad_residual(&m).unwrap() < 1e-9);
        } else {
            panic!("expected an accepted step from a far start");
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let (q, m) = pure(&[vec![1.0]], 1);
        let cfg = SolverConfig {
            eps: 0.0,
            ..Default::default()
        };
        assert!(matches!(solve(&q, &m, &cfg), Err(Error::InvalidArgument(_))));
    }
}
