//! Scaling benchmark: solve seeded instances across an `n`-grid and fit the
//! log-log slope of outer iterations against `n`.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::agd::agd;
use super::generate::{gen_instance, InstanceKind};
use super::newton::reference_newton;
use super::propcheck::{names, InvariantMonitor};
use crate::error::{Error, Result};
use crate::fast_quartic::{solve_observed, ExitReason, SolverConfig};
use crate::metric::Metric;
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    None,
    Agd,
    Newton,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Baseline::None),
            "agd" => Ok(Baseline::Agd),
            "newton" => Ok(Baseline::Newton),
            other => Err(Error::InvalidArgument(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub d: usize,
    pub instances_per_n: usize,
    pub seed: u64,
    pub kind: InstanceKind,
    pub baseline: Baseline,
    pub solver: SolverConfig,
    pub exec: Exec,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns: vec![16, 64, 256, 1024],
            d: 8,
            instances_per_n: 3,
            seed: 0,
            kind: InstanceKind::Planted,
            baseline: Baseline::None,
            solver: SolverConfig {
                eps: 1e-6,
                ..Default::default()
            },
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub outer_iterations: usize,
    pub epochs: usize,
    pub aux_iterations: usize,
    pub rho_evaluations: usize,
    pub linear_solves: usize,
    pub f_final: f64,
    pub certified_gap: f64,
    pub exit_reason: ExitReason,
    /// Accepted steps whose `ρ_k` failed the relative recheck.
    pub rho_violations: usize,
    pub rho_checks: usize,
    /// Known or Newton-computed optimal value.
    pub f_star: Option<f64>,
    pub baseline_iterations: Option<usize>,
    pub baseline_f: Option<f64>,
    pub wall_nanos: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub rows: usize,
    pub failures: usize,
    /// Least-squares slope of `log(mean outer iterations)` on `log n`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub rho_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: BenchSummary,
}

/// Ordinary least squares `y ≈ a + b·x`; `None` with fewer than two
/// distinct abscissae.
pub fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let m = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

fn run_one(cfg: &BenchConfig, n: usize, seed: u64) -> BenchRow {
    let mut row = BenchRow {
        n,
        d: cfg.d,
        seed,
        outer_iterations: 0,
        epochs: 0,
        aux_iterations: 0,
        rho_evaluations: 0,
        linear_solves: 0,
        f_final: f64::NAN,
        certified_gap: f64::NAN,
        exit_reason: ExitReason::Failure,
        rho_violations: 0,
        rho_checks: 0,
        f_star: None,
        baseline_iterations: None,
        baseline_f: None,
        wall_nanos: 0,
        error: None,
    };
    if let Err(e) = fill_row(cfg, n, seed, &mut row) {
        row.error = Some(e.to_string());
        row.exit_reason = ExitReason::Failure;
    }
    row
}

fn fill_row(cfg: &BenchConfig, n: usize, seed: u64, row: &mut BenchRow) -> Result<()> {
    let file = gen_instance(cfg.kind, cfg.d, n, seed)?;
    let q = file.to_quartic()?;
    let metric = Metric::from_quartic(&q)?;
    let x0 = DVector::zeros(cfg.d);
    let planted = file
        .planted()
        .map(|p| (DVector::from_column_slice(&p.x_star), p.f_star));
    // without a planted optimum the monitor's gap-based checks are
    // meaningless, but the ρ recheck only needs the iterates
    let (xs, fs) = planted.clone().unwrap_or_else(|| (x0.clone(), 0.0));
    let mut monitor = InvariantMonitor::new(&q, &metric, xs, fs);
    let started = Instant::now();
    let result = solve_observed(&q, &metric, &cfg.solver, &mut |ev| monitor.observe(ev));
    let elapsed = started.elapsed().as_nanos() as u64;
    if cfg.solver.timing {
        row.wall_nanos = elapsed;
    }
    if let Some(r) = monitor.tally.get(names::RHO_CONDITION) {
        row.rho_violations = r.violations;
        row.rho_checks = r.checked;
    }
    let report = match result {
        Ok(r) => r,
        Err(Error::EpochCap(r)) => *r,
        Err(e) => return Err(e),
    };
    row.outer_iterations = report.outer_iterations;
    row.epochs = report.epochs;
    row.aux_iterations = report.aux_iterations_total;
    row.rho_evaluations = report.rho_evaluations_total;
    row.linear_solves = report.linear_solves_total;
    row.f_final = report.f_final;
    row.certified_gap = report.certified_gap;
    row.exit_reason = report.exit_reason;
    row.f_star = planted.map(|p| p.1);
    match cfg.baseline {
        Baseline::None => {}
        Baseline::Newton => {
            let r = reference_newton(&q, &metric, &x0, 1e-12)?;
            row.baseline_iterations = Some(r.iterations);
            row.baseline_f = Some(r.f_star);
            row.f_star.get_or_insert(r.f_star);
        }
        Baseline::Agd => {
            let r = agd(&q, &metric, &x0, cfg.solver.eps, 100_000)?;
            row.baseline_iterations = Some(r.iterations);
            row.baseline_f = Some(r.f);
        }
    }
    Ok(())
}

/// Runs every `(n, instance)` pair, concurrently when `cfg.exec` allows.
/// A failed solve marks its row and the run continues.
pub fn bench(cfg: &BenchConfig) -> BenchReport {
    let jobs: Vec<(usize, u64)> = cfg
        .ns
        .iter()
        .flat_map(|&n| (0..cfg.instances_per_n as u64).map(move |i| (n, i)))
        .map(|(n, i)| (n, cfg.seed.wrapping_add(i)))
        .collect();
    let rows = par::map_slice(cfg.exec, &jobs, |&(n, seed)| run_one(cfg, n, seed));

    let mut points = Vec::new();
    for &n in &cfg.ns {
        let ok: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n && r.error.is_none() && r.outer_iterations > 0)
            .map(|r| r.outer_iterations as f64)
            .collect();
        if !ok.is_empty() {
            let mean = ok.iter().sum::<f64>() / ok.len() as f64;
            points.push(((n as f64).ln(), mean.ln()));
        }
    }
    let fit = fit_line(&points);
    let summary = BenchSummary {
        rows: rows.len(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        slope: fit.map(|f| f.1),
        intercept: fit.map(|f| f.0),
        rho_violations: rows.iter().map(|r| r.rho_violations).sum(),
    };
    BenchReport { rows, summary }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_slope() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 0.2 * i as f64 + 1.0)).collect();
        let (a, b) = fit_line(&pts).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 0.2).abs() < 1e-12);
        assert!(fit_line(&pts[..1]).is_none());
    }

    #[test]
    fn empty_grid() {
        let cfg = BenchConfig {
            ns: vec![],
            ..Default::default()
        };
        let r = bench(&cfg);
        assert!(r.rows.is_empty());
        assert_eq!(r.summary.slope, None);
    }
}
