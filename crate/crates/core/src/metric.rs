//! Linear algebra in the geometry of a positive-definite matrix `B`
//! (normally `AᵀA`): norms, dual norms, solves and shifted solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::design::RowMatrix;
use crate::error::{Error, Result};

/// Largest dimension for which `B` is materialized and factored densely.
pub const DENSE_LIMIT: usize = 4096;

const SOLVE_RTOL: f64 = 1e-10;
const CG_RTOL: f64 = 1e-12;

/// A symmetric positive-semidefinite linear operator.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
    /// Dense form, when one is available; enables direct factorization.
    fn dense(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

impl SymOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
    fn dense(&self) -> Option<&DMatrix<f64>> {
        Some(self)
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense {
        b: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
    /// `B = AᵀA` kept as a product; solves use Jacobi-preconditioned CG.
    Operator { a: RowMatrix, diag: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct Metric {
    dim: usize,
    repr: Repr,
    lambda_min: f64,
    lambda_max: f64,
}

/// Generalized eigendecomposition of a pencil `(H, B)`: `Wᵀ B W = I` and
/// `Wᵀ H W = Diag(values)`, so `(H + σB)⁻¹ = W (Diag(values) + σ)⁻¹ Wᵀ`.
#[derive(Debug, Clone)]
pub struct PencilSpectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl PencilSpectrum {
    /// Coordinates `Wᵀ g` of a dual vector.
    pub fn coords(&self, g: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(g)
    }

    /// The primal vector `W z`.
    pub fn primal(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.vectors * z
    }
}

impl Metric {
    /// `B = AᵀA` for the quartic's design matrix.
    pub fn from_quartic(q: &crate::quartic::StructuredQuartic) -> Result<Self> {
        Self::from_design(q.a())
    }

    /// `B = AᵀA`, dense up to [`DENSE_LIMIT`], operator form above.
    pub fn from_design(a: &RowMatrix) -> Result<Self> {
        if a.ncols() <= DENSE_LIMIT {
            Self::from_matrix(a.gram())
        } else {
            Self::operator(a)
        }
    }

    /// Operator form regardless of dimension.
    pub fn operator(a: &RowMatrix) -> Result<Self> {
        let d = a.ncols();
        let mut diag = DVector::zeros(d);
        for i in 0..a.nrows() {
            let (idx, val) = a.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                diag[j] += v * v;
            }
        }
        if diag.iter().any(|&v| v <= 0.0) {
            return Err(Error::NotPositiveDefinite("AᵀA has an empty column".into()));
        }
        let mut m = Self {
            dim: d,
            repr: Repr::Operator {
                a: a.clone(),
                diag,
            },
            lambda_min: f64::NAN,
            lambda_max: f64::NAN,
        };
        m.estimate_extremes()?;
        Ok(m)
    }

    pub fn from_matrix(b: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() || b.nrows() == 0 {
            return Err(Error::InvalidArgument("B must be square and non-empty".into()));
        }
        let b = (&b + b.transpose()) * 0.5;
        let chol = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("B".into()))?;
        let mut m = Self {
            dim: b.nrows(),
            repr: Repr::Dense { b, chol },
            lambda_min: f64::NAN,
            lambda_max: f64::NAN,
        };
        m.estimate_extremes()?;
        Ok(m)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, Repr::Dense { .. })
    }

    /// Dense `B`, if materialized.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Dense { b, .. } => Some(b),
            Repr::Operator { .. } => None,
        }
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    fn check(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dim(what, self.dim, v.len()));
        }
        Ok(())
    }

    fn apply_unchecked(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Dense { b, .. } => b * v,
            Repr::Operator { a, .. } => a.tr_mul(&a.mul(v)),
        }
    }

    /// `B v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("v", v)?;
        Ok(self.apply_unchecked(v))
    }

    pub fn b_norm_sq(&self, v: &DVector<f64>) -> Result<f64> {
        self.check("v", v)?;
        let q = match &self.repr {
            Repr::Dense { b, .. } => v.dot(&(b * v)),
            Repr::Operator { a, .. } => a.mul(v).iter().map(|x| x * x).sum(),
        };
        Ok(q.max(0.0))
    }

    /// `‖v‖_B = √(vᵀBv)`.
    pub fn b_norm(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.b_norm_sq(v)?.sqrt())
    }

    pub fn dual_norm_sq(&self, g: &DVector<f64>) -> Result<f64> {
        self.check("g", g)?;
        match &self.repr {
            // gᵀB⁻¹g = ‖L⁻¹g‖² with one triangular solve
            Repr::Dense { chol, .. } => {
                let z = chol
                    .l_dirty()
                    .solve_lower_triangular(g)
                    .ok_or_else(|| Error::Numerical {
                        reason: "triangular solve".into(),
                        residual: f64::NAN,
                    })?;
                Ok(z.norm_squared())
            }
            Repr::Operator { .. } => Ok(g.dot(&self.solve_b(g)?).max(0.0)),
        }
    }

    /// `‖g‖_{B⁻¹} = √(gᵀB⁻¹g)`.
    pub fn dual_norm(&self, g: &DVector<f64>) -> Result<f64> {
        Ok(self.dual_norm_sq(g)?.sqrt())
    }

    /// `B⁻¹ rhs` with residual `‖B·out − rhs‖₂ ≤ 1e−10‖rhs‖₂`.
    pub fn solve_b(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("rhs", rhs)?;
        match &self.repr {
            Repr::Dense { b, chol } => refine(b, chol, rhs),
            Repr::Operator { diag, .. } => {
                let d = diag.clone();
                pcg(
                    |v| self.apply_unchecked(v),
                    |r| r.component_div(&d),
                    rhs,
                    CG_RTOL,
                    10 * self.dim + 100,
                )
            }
        }
    }

    /// `(√2·λ·B + H)⁻¹ rhs` for symmetric positive-semidefinite `H`.
    pub fn solve_shifted(
        &self,
        h: &dyn SymOperator,
        lambda: f64,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("shift λ = {lambda} must be positive")));
        }
        self.solve_shift_sigma(h, std::f64::consts::SQRT_2 * lambda, rhs)
    }

    /// `(σB + H)⁻¹ rhs`.
    pub fn solve_shift_sigma(
        &self,
        h: &dyn SymOperator,
        sigma: f64,
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check("rhs", rhs)?;
        if h.dim() != self.dim {
            return Err(Error::dim("H", self.dim, h.dim()));
        }
        if let (Repr::Dense { b, .. }, Some(hd)) = (&self.repr, h.dense()) {
            let m = b * sigma + hd;
            let chol = m.clone().cholesky().ok_or_else(|| Error::Numerical {
                reason: "shifted system is not positive definite".into(),
                residual: f64::NAN,
            })?;
            return refine(&m, &chol, rhs);
        }
        pcg(
            |v| self.apply_unchecked(v) * sigma + h.apply(v),
            |r| match &self.repr {
                Repr::Dense { chol, .. } => chol.solve(r) / sigma,
                Repr::Operator { diag, .. } => r.component_div(diag) / sigma,
            },
            rhs,
            CG_RTOL,
            10 * self.dim + 100,
        )
    }

    /// Generalized eigendecomposition of `(H, B)`; dense metrics only.
    pub fn pencil(&self, h: &DMatrix<f64>) -> Result<PencilSpectrum> {
        let Repr::Dense { chol, .. } = &self.repr else {
            return Err(Error::InvalidArgument(
                "pencil decomposition needs a dense metric".into(),
            ));
        };
        if h.nrows() != self.dim || h.ncols() != self.dim {
            return Err(Error::dim("H", self.dim, h.nrows()));
        }
        let l = chol.l();
        let fail = || Error::Numerical {
            reason: "triangular solve in pencil reduction".into(),
            residual: f64::NAN,
        };
        let x = l.solve_lower_triangular(h).ok_or_else(fail)?;
        let m = l.solve_lower_triangular(&x.transpose()).ok_or_else(fail)?;
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let vectors = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(fail)?;
        Ok(PencilSpectrum {
            values: eig.eigenvalues,
            vectors,
        })
    }

    fn estimate_extremes(&mut self) -> Result<()> {
        let d = self.dim;
        if let Repr::Dense { b, .. } = &self.repr {
            if d <= 256 {
                let ev = b.symmetric_eigenvalues();
                self.lambda_min = ev.min();
                self.lambda_max = ev.max();
                return Ok(());
            }
        }
        let start = DVector::from_fn(d, |i, _| 1.0 + 0.1 * ((i * 7919 % 97) as f64 / 97.0));
        let mut v = start.normalize();
        let mut hi = 0.0;
        for _ in 0..100 {
            let w = self.apply_unchecked(&v);
            hi = v.dot(&w);
            v = w.normalize();
        }
        let mut u = start.normalize();
        let mut inv = 0.0;
        for _ in 0..50 {
            let w = self.solve_b(&u)?;
            inv = u.dot(&w);
            u = w.normalize();
        }
        self.lambda_max = hi;
        self.lambda_min = 1.0 / inv;
        Ok(())
    }
}

/// Cholesky solve followed by iterative refinement.
fn refine(m: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let target = SOLVE_RTOL * rhs.norm();
    let mut x = chol.solve(rhs);
    let mut res = rhs - m * &x;
    for _ in 0..4 {
        if res.norm() <= target {
            return Ok(x);
        }
        x += chol.solve(&res);
        res = rhs - m * &x;
    }
    let r = res.norm();
    if r <= target {
        Ok(x)
    } else {
        Err(Error::Numerical {
            reason: "direct solve did not reach the residual bound".into(),
            residual: r,
        })
    }
}

/// Preconditioned conjugate gradients.
fn pcg<A, P>(
    apply: A,
    precond: P,
    rhs: &DVector<f64>,
    rtol: f64,
    max_iter: usize,
) -> Result<DVector<f64>>
where
    A: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(&DVector<f64>) -> DVector<f64>,
{
    let bnorm = rhs.norm();
    let mut x = DVector::zeros(rhs.len());
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= rtol * bnorm {
            // recompute the true residual to guard against drift
            let true_res = (rhs - apply(&x)).norm();
            if true_res <= SOLVE_RTOL * bnorm {
                return Ok(x);
            }
            r = rhs - apply(&x);
        }
        z = precond(&r);
        let rz_next = r.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    Err(Error::Numerical {
        reason: format!("conjugate gradients did not converge in {max_iter} iterations"),
        residual: (rhs - apply(&x)).norm() / bnorm,
    })
}
