//! `quartic`: solve, benchmark and verify structured convex quartics.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 a property or
//! derivative check failed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use quartic_core::fast_quartic::{solve, SolveReport, SolverConfig};
use quartic_core::harness::agd::agd;
use quartic_core::harness::bench::{bench, Baseline, BenchConfig};
use quartic_core::harness::derivcheck;
use quartic_core::harness::generate::{gen_instance, InstanceKind};
use quartic_core::harness::io::ProblemFile;
use quartic_core::harness::newton::reference_newton;
use quartic_core::harness::propcheck::{run_suite, SuiteConfig};
use quartic_core::metric::Metric;
use quartic_core::par::Exec;
use quartic_core::Error;

#[derive(Parser)]
#[command(name = "quartic", version, about = "Accelerated tensor method for structured convex quartics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a problem file (or a generated planted instance).
    Solve(SolveArgs),
    /// Solve seeded instances over an n-grid and fit the iteration slope.
    Bench(BenchArgs),
    /// Check the derivative oracles against finite differences.
    Derivcheck(DerivArgs),
    /// Run the inequality and solver-invariant suite.
    Propcheck(PropArgs),
    /// Write a generated instance to a problem file.
    Gen(GenArgs),
}

#[derive(Args)]
struct SolverFlags {
    /// Target accuracy on f(x) − f*.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Inner-solver tolerance (derived from the budget by default).
    #[arg(long = "eps-aam")]
    eps_aam: Option<f64>,
    /// Lower end of the ρ bracket (ε/(2P̂) by default).
    #[arg(long = "rho-min")]
    rho_min: Option<f64>,
    #[arg(long = "max-epochs", default_value_t = 100)]
    max_epochs: usize,
    /// Record wall-clock times (makes output run-dependent).
    #[arg(long)]
    timing: bool,
}

impl SolverFlags {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            eps: self.eps,
            eps_aam: self.eps_aam,
            rho_min: self.rho_min,
            max_epochs: self.max_epochs,
            timing: self.timing,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file; without it a planted instance is generated from --seed.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Also run a baseline: none, agd or newton.
    #[arg(long, default_value = "none")]
    baseline: String,
    /// Emit one JSON line per outer iteration before the summary.
    #[arg(long)]
    trace: bool,
    /// Write the summary here; the trace goes to `<out>.trace.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated row counts.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    instances: usize,
    #[arg(long, default_value = "planted")]
    kind: String,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "none")]
    baseline: String,
    /// Run instances one at a time.
    #[arg(long)]
    sequential: bool,
    /// Rows as JSON lines followed by the summary line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DerivArgs {
    /// Check a single problem file instead of generated instances.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long = "max-d", default_value_t = 8)]
    max_d: usize,
    #[arg(long = "max-n", default_value_t = 16)]
    max_n: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PropArgs {
    #[arg(long, default_value_t = 3)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// l4, planted or dense-quartic.
    #[arg(long, default_value = "planted")]
    kind: String,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(String),
    Solver(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension { .. }
            | Error::InvalidArgument(_)
            | Error::NotPositiveDefinite(_)
            | Error::Io(_)
            | Error::Parse(_) => Failure::Input(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(w: &mut dyn Write, v: &impl serde::Serialize) -> Result<(), Failure> {
    let line = serde_json::to_string(v).map_err(|e| Failure::Solver(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

fn load_or_generate(input: Option<&Path>, seed: u64, d: usize, n: usize) -> Result<ProblemFile, Failure> {
    Ok(match input {
        Some(p) => ProblemFile::load(p)?,
        None => gen_instance(InstanceKind::Planted, d, n, seed)?,
    })
}

fn summary_value(report: &SolveReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if let Value::Object(m) = &mut v {
        m.remove("trace");
    }
    v
}

fn run_solve(args: &SolveArgs) -> Result<(), Failure> {
    let baseline: Baseline = args.baseline.parse()?;
    let file = load_or_generate(args.input.as_deref(), args.seed, args.d, args.n)?;
    let q = file.to_quartic()?;
    let metric = Metric::from_quartic(&q)?;
    let cfg = args.solver.config();
    let (report, failure) = match solve(&q, &metric, &cfg) {
        Ok(r) => (r, None),
        Err(Error::EpochCap(r)) => {
            let msg = format!("epoch cap reached with certified gap {:e}", r.certified_gap);
            (*r, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };

    if args.trace {
        let mut tw: Box<dyn Write> = match &args.out {
            Some(p) => {
                let mut name = p.clone().into_os_string();
                name.push(".trace.jsonl");
                Box::new(BufWriter::new(File::create(PathBuf::from(name))?))
            }
            None => Box::new(io::stdout().lock()),
        };
        for rec in &report.trace {
            emit(&mut tw, rec)?;
        }
        tw.flush()?;
    }

    let mut summary = summary_value(&report);
    if let Some(p) = file.planted() {
        let xs = nalgebra::DVector::from_column_slice(&p.x_star);
        let x = nalgebra::DVector::from_column_slice(&report.x_final);
        summary["true_gap"] = json!(q.eval_diff(&xs, &x)?);
    }
    if let ProblemFile::L4 { b, .. } = &file {
        // the expansion drops the constant ‖b‖₄⁴
        summary["objective"] = json!(report.f_final + b.iter().map(|v| v.powi(4)).sum::<f64>());
    }
    let x0 = nalgebra::DVector::zeros(q.dim());
    match baseline {
        Baseline::None => {}
        Baseline::Newton => {
            let r = reference_newton(&q, &metric, &x0, 1e-12)?;
            summary["baseline"] = json!({
                "kind": "newton", "iterations": r.iterations, "f": r.f_star,
                "agreement": (r.f_star - report.f_final).abs(),
            });
        }
        Baseline::Agd => {
            let r = agd(&q, &metric, &x0, cfg.eps, 100_000)?;
            summary["baseline"] = json!({
                "kind": "agd", "iterations": r.iterations, "f": r.f,
                "certified_gap": r.certified_gap, "converged": r.converged,
            });
        }
    }
    let mut w = writer(args.out.as_deref())?;
    emit(&mut w, &summary)?;
    w.flush()?;
    match failure {
        Some(msg) => Err(Failure::Solver(msg)),
        None => Ok(()),
    }
}

fn run_bench(args: &BenchArgs) -> Result<(), Failure> {
    let cfg = BenchConfig {
        ns: args.ns.clone(),
        d: args.d,
        instances_per_n: args.instances,
        seed: args.seed,
        kind: args.kind.parse()?,
        baseline: args.baseline.parse()?,
        solver: args.solver.config(),
        exec: if args.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
    };
    let report = bench(&cfg);
    let mut w = writer(args.out.as_deref())?;
    for row in &report.rows {
        emit(&mut w, row)?;
    }
    emit(&mut w, &json!({ "summary": report.summary }))?;
    w.flush()?;
    Ok(())
}

fn run_derivcheck(args: &DerivArgs) -> Result<(), Failure> {
    let report = match &args.input {
        Some(p) => derivcheck::check_instance(&ProblemFile::load(p)?.to_quartic()?, args.samples, args.seed)?,
        None => derivcheck::run_suite(
            args.instances,
            args.max_d,
            args.max_n,
            args.samples,
            args.seed,
            Exec::Parallel,
        )?,
    };
    let mut out = io::stdout().lock();
    emit(&mut out, &json!({ "report": report, "pass": report.pass() }))?;
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn run_propcheck(args: &PropArgs) -> Result<(), Failure> {
    let cfg = SuiteConfig {
        instances: args.instances,
        d: args.d,
        n: args.n,
        pairs: args.pairs,
        seed: args.seed,
        solver: args.solver.config(),
        exec: Exec::Parallel,
    };
    if cfg.d == 0 || cfg.n < cfg.d {
        return Err(Failure::Input(format!("need n ≥ d ≥ 1, got d={}, n={}", cfg.d, cfg.n)));
    }
    let report = run_suite(&cfg);
    let mut w = writer(args.out.as_deref())?;
    for p in &report.properties {
        emit(&mut w, &json!({ "property": p, "pass": p.pass() }))?;
    }
    emit(
        &mut w,
        &json!({
            "printed_modulus_refuted": report.printed_modulus_refuted,
            "errors": report.errors,
            "pass": report.pass(),
        }),
    )?;
    w.flush()?;
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn run_gen(args: &GenArgs) -> Result<(), Failure> {
    let kind: InstanceKind = args.kind.parse()?;
    gen_instance(kind, args.d, args.n, args.seed)?.save(&args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Derivcheck(a) => run_derivcheck(a),
        Command::Propcheck(a) => run_propcheck(a),
        Command::Gen(a) => run_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Check) => ExitCode::from(4),
    }
}
