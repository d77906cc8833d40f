use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical failure: {reason} (residual {residual:e})")]
    Numerical { reason: String, residual: f64 },

    /// The inner solver ran out of iterations before its gap certificate
    /// dropped below the requested tolerance.
    #[error("convergence failure after {iterations} iterations: certified gap {certified_gap:e} > {tolerance:e}")]
    Convergence {
        iterations: usize,
        certified_gap: f64,
        tolerance: f64,
        best: Vec<f64>,
    },

    /// The ρ bisection returned a point that fails its own acceptance
    /// recheck, or exhausted its budget without finding one.
    #[error("rho search failed: {reason}")]
    Search {
        reason: String,
        log: Vec<crate::rho_search::BisectionEntry>,
    },

    /// The restarted solver used every epoch without certifying the target
    /// gap; the report describes the best point reached.
    #[error("epoch cap reached: certified gap {:e} after {} epochs", .0.certified_gap, .0.epochs)]
    EpochCap(Box<crate::fast_quartic::SolveReport>),

    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reference oracle failed: {0}")]
    Oracle(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Outer {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
