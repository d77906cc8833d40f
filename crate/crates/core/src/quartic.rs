//! Structured convex quartics
//! `f(x) = cᵀx + xᵀGx + T[x,x,x] + (1/24)‖Ax‖₄⁴`
//! with exact derivative oracles, the third-order Taylor model and its
//! quartically regularized upper model.

use nalgebra::{DMatrix, DVector};

use crate::design::RowMatrix;
use crate::error::{Error, Result};
use crate::metric::{Metric, DENSE_LIMIT};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone)]
pub struct StructuredQuartic {
    c: DVector<f64>,
    g: DMatrix<f64>,
    /// `G + Gᵀ`, the Hessian of the quadratic term.
    g_twice_sym: DMatrix<f64>,
    t: SymTensor3,
    a: RowMatrix,
}

/// Smoothness and uniform-convexity constants of a structured quartic in the
/// `AᵀA` geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessConstants {
    /// Lipschitz constant of the third differential. Exactly 1 for `B = AᵀA`.
    pub l3: f64,
    /// Coefficient of the quartic growth term, `1/(72n)`.
    pub mu4: f64,
}

impl SmoothnessConstants {
    pub fn for_quartic(q: &StructuredQuartic) -> Self {
        Self {
            l3: 1.0,
            mu4: 1.0 / (72.0 * q.rows() as f64),
        }
    }

    pub fn kappa4(&self) -> f64 {
        self.l3 / self.mu4
    }

    /// Upper bound on `f(x) − f*` from the dual norm of `∇f(x)`, by Fenchel
    /// inversion of the quartic growth lower bound.
    pub fn gap_certificate(&self, grad_dual_norm: f64) -> f64 {
        0.75 * (1.0 / self.mu4).cbrt() * grad_dual_norm.powf(4.0 / 3.0)
    }

    /// Restart epoch length `⌈(512 L₃ / (3 μ₄))^{1/5}⌉`.
    pub fn epoch_length(&self) -> usize {
        (512.0 * self.l3 / (3.0 * self.mu4)).powf(0.2).ceil() as usize
    }
}

fn check_len(what: &'static str, v: &DVector<f64>, d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::dim(what, d, v.len()));
    }
    Ok(())
}

impl StructuredQuartic {
    /// Validates dimensions and that `AᵀA` is positive definite.
    pub fn new(c: DVector<f64>, g: DMatrix<f64>, t: SymTensor3, a: RowMatrix) -> Result<Self> {
        let d = c.len();
        if d == 0 || a.nrows() == 0 {
            return Err(Error::InvalidArgument("empty problem".into()));
        }
        if g.nrows() != d || g.ncols() != d {
            return Err(Error::dim("G", d, if g.nrows() != d { g.nrows() } else { g.ncols() }));
        }
        if t.dim() != d {
            return Err(Error::dim("T", d, t.dim()));
        }
        if a.ncols() != d {
            return Err(Error::dim("columns of A", d, a.ncols()));
        }
        if c.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        if d <= DENSE_LIMIT && a.gram().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("AᵀA".into()));
        }
        let g_twice_sym = &g + g.transpose();
        Ok(Self {
            c,
            g,
            g_twice_sym,
            t,
            a,
        })
    }

    /// The pure quartic `(1/24)‖Ax‖₄⁴`.
    pub fn pure_quartic(a: RowMatrix) -> Result<Self> {
        let d = a.ncols();
        Self::new(
            DVector::zeros(d),
            DMatrix::zeros(d, d),
            SymTensor3::zeros(d),
            a,
        )
    }

    /// Rewrites `cᵀx + ‖Ax − b‖₄⁴` as a structured quartic by expanding the
    /// binomial. The constant `‖b‖₄⁴` is dropped: the returned `f` satisfies
    /// `f(x) + ‖b‖₄⁴ = cᵀx + ‖Ax − b‖₄⁴`.
    pub fn from_l4_regression(a: &RowMatrix, b: &DVector<f64>, c: &DVector<f64>) -> Result<Self> {
        let (n, d) = (a.nrows(), a.ncols());
        check_len("b", b, n)?;
        check_len("c", c, d)?;
        let b2: Vec<f64> = b.iter().map(|v| v * v).collect();
        let b3: Vec<f64> = b.iter().map(|v| v * v * v).collect();
        let lin = c - a.tr_mul(&b3) * 4.0;
        let quad = a.weighted_gram(&b2) * 6.0;
        let mut entries = Vec::new();
        for (i, &bi) in b.iter().enumerate() {
            if bi == 0.0 {
                continue;
            }
            let (idx, val) = a.row(i);
            for p in 0..idx.len() {
                for q in p..idx.len() {
                    for r in q..idx.len() {
                        entries.push((idx[p], idx[q], idx[r], -4.0 * bi * val[p] * val[q] * val[r]));
                    }
                }
            }
        }
        let t = SymTensor3::from_entries(d, &entries)?;
        Self::new(lin, quad, t, a.scaled(24f64.powf(0.25)))
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Number of rows `n` of `A`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn t(&self) -> &SymTensor3 {
        &self.t
    }

    pub fn a(&self) -> &RowMatrix {
        &self.a
    }

    fn check(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        check_len(what, v, self.dim())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check("x", x)?;
        let ax = self.a.mul(x);
        let quartic: f64 = ax.iter().map(|v| v.powi(4)).sum::<f64>() / 24.0;
        Ok(self.c.dot(x) + x.dot(&(&self.g * x)) + self.t.form(x, x, x) + quartic)
    }

    /// `f(x) − f(x0)`, computed from the exact Taylor expansion at `x0` so
    /// that the large constant parts of the two values never cancel.
    pub fn eval_diff(&self, x0: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        let (linear, rest) = self.expansion(x0, x)?;
        Ok(linear + rest)
    }

    /// Bregman divergence `f(x) − f(x0) − ⟨∇f(x0), x − x0⟩ ≥ 0`, from the
    /// second- and higher-order Taylor terms only.
    pub fn bregman(&self, x0: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        Ok(self.expansion(x0, x)?.1)
    }

    /// First-order and higher-order parts of `f(x) − f(x0)`.
    fn expansion(&self, x0: &DVector<f64>, x: &DVector<f64>) -> Result<(f64, f64)> {
        self.check("x0", x0)?;
        self.check("x", x)?;
        let s = x - x0;
        let ax0 = self.a.mul(x0);
        let as_ = self.a.mul(&s);
        let (mut lin_a, mut quad_a, mut cub_a, mut quart_a) = (0.0, 0.0, 0.0, 0.0);
        for (&u, &w) in ax0.iter().zip(&as_) {
            let w2 = w * w;
            lin_a += u * u * u * w;
            quad_a += u * u * w2;
            cub_a += u * w2 * w;
            quart_a += w2 * w2;
        }
        let gs = &self.g_twice_sym * &s;
        let linear = self.c.dot(&s)
            + x0.dot(&gs)
            + 3.0 * self.t.form(x0, x0, &s)
            + lin_a / 6.0;
        let quadratic = 0.5 * s.dot(&gs) + 3.0 * self.t.form(x0, &s, &s) + quad_a / 4.0;
        let cubic = self.t.form(&s, &s, &s) + cub_a / 6.0;
        Ok((linear, quadratic + cubic + quart_a / 24.0))
    }

    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eval_grad(x)?.1)
    }

    /// Value and gradient sharing one product `Ax`.
    pub fn eval_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check("x", x)?;
        let ax = self.a.mul(x);
        let cubes: Vec<f64> = ax.iter().map(|v| v * v * v).collect();
        let quartic: f64 = ax.iter().zip(&cubes).map(|(v, c)| v * c).sum::<f64>() / 24.0;
        let gx = &self.g * x;
        let value = self.c.dot(x) + x.dot(&gx) + self.t.form(x, x, x) + quartic;
        let mut grad = &self.c + &self.g_twice_sym * x + self.t.contract2(x, x) * 3.0;
        grad += self.a.tr_mul(&cubes) / 6.0;
        Ok((value, grad))
    }

    pub fn hess_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check("x", x)?;
        let ax = self.a.mul(x);
        let w: Vec<f64> = ax.iter().map(|v| 0.5 * v * v).collect();
        let mut h = self.g_twice_sym.clone();
        if !self.t.is_zero() {
            h += self.t.contract1(x) * 6.0;
        }
        h += self.a.weighted_gram(&w);
        Ok(h)
    }

    pub fn hess_apply(&self, x: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("x", x)?;
        self.check("h", h)?;
        let ax = self.a.mul(x);
        let ah = self.a.mul(h);
        let w: Vec<f64> = ax.iter().zip(&ah).map(|(u, v)| 0.5 * u * u * v).collect();
        Ok(&self.g_twice_sym * h + self.t.contract2(x, h) * 6.0 + self.a.tr_mul(&w))
    }

    /// `∇³f(x)[h, h, ·]`.
    pub fn third_apply(&self, x: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("x", x)?;
        self.check("h", h)?;
        let ax = self.a.mul(x);
        let ah = self.a.mul(h);
        let w: Vec<f64> = ax.iter().zip(&ah).map(|(u, v)| u * v * v).collect();
        Ok(self.t.contract2(h, h) * 6.0 + self.a.tr_mul(&w))
    }

    /// `∇³f(x)[h]³`.
    pub fn third_form(&self, x: &DVector<f64>, h: &DVector<f64>) -> Result<f64> {
        self.check("x", x)?;
        self.check("h", h)?;
        let ax = self.a.mul(x);
        let ah = self.a.mul(h);
        let rows: f64 = ax.iter().zip(&ah).map(|(u, v)| u * v * v * v).sum();
        Ok(6.0 * self.t.form(h, h, h) + rows)
    }

    /// `∇⁴f[h]⁴ = ‖Ah‖₄⁴`, independent of the base point.
    pub fn fourth_form(&self, h: &DVector<f64>) -> Result<f64> {
        self.check("h", h)?;
        Ok(self.a.mul(h).iter().map(|v| v.powi(4)).sum())
    }

    /// Third-order Taylor expansion of `f` at `x`, evaluated at `y`.
    pub fn taylor_phi(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check("y", y)?;
        TaylorModel::new(self, x)?.phi(&(y - x))
    }

    /// `Ω_x(y) = Φ_x(y) + (L₃/4)‖y − x‖_B⁴`.
    pub fn omega_eval(
        &self,
        l3: f64,
        metric: &Metric,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<f64> {
        self.check("y", y)?;
        TaylorModel::new(self, x)?.omega(l3, metric, &(y - x))
    }

    /// Gradient of `Ω_x` at `y`.
    pub fn omega_grad(
        &self,
        l3: f64,
        metric: &Metric,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check("y", y)?;
        TaylorModel::new(self, x)?.omega_grad(l3, metric, &(y - x))
    }
}

/// Derivatives of `f` frozen at a center, for repeated evaluation of the
/// Taylor model `Φ` and the regularized model `Ω` in the displacement `h`.
#[derive(Debug, Clone)]
pub struct TaylorModel<'a> {
    q: &'a StructuredQuartic,
    center: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    a_center: Vec<f64>,
}

impl<'a> TaylorModel<'a> {
    pub fn new(q: &'a StructuredQuartic, center: &DVector<f64>) -> Result<Self> {
        let (value, grad) = q.eval_grad(center)?;
        let hess = q.hess_matrix(center)?;
        Ok(Self {
            q,
            center: center.clone(),
            value,
            grad,
            hess,
            a_center: q.a.mul(center),
        })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &DVector<f64> {
        &self.grad
    }

    pub fn hess(&self) -> &DMatrix<f64> {
        &self.hess
    }

    /// `∇³f(center)[h]³`, and optionally the vector `∇³f(center)[h, h, ·]`.
    fn third(&self, h: &DVector<f64>, want_vec: bool) -> (f64, Option<DVector<f64>>) {
        let ah = self.q.a.mul(h);
        let w: Vec<f64> = self.a_center.iter().zip(&ah).map(|(u, v)| u * v * v).collect();
        let form = 6.0 * self.q.t.form(h, h, h) + w.iter().zip(&ah).map(|(a, b)| a * b).sum::<f64>();
        let vec = want_vec.then(|| self.q.t.contract2(h, h) * 6.0 + self.q.a.tr_mul(&w));
        (form, vec)
    }

    /// `Φ(center + h)`.
    pub fn phi(&self, h: &DVector<f64>) -> Result<f64> {
        check_len("h", h, self.q.dim())?;
        let (third, _) = self.third(h, false);
        Ok(self.value + self.grad.dot(h) + 0.5 * h.dot(&(&self.hess * h)) + third / 6.0)
    }

    /// `∇Φ(center + h) = ∇f + ∇²f h + ½∇³f[h, h, ·]`.
    pub fn phi_grad(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("h", h, self.q.dim())?;
        let (_, third) = self.third(h, true);
        Ok(&self.grad + &self.hess * h + third.expect("requested") * 0.5)
    }

    /// `Ω(center + h)`; equivalently `f(center) + Γ(h)`.
    pub fn omega(&self, l3: f64, metric: &Metric, h: &DVector<f64>) -> Result<f64> {
        let r2 = metric.b_norm_sq(h)?;
        Ok(self.phi(h)? + 0.25 * l3 * r2 * r2)
    }

    /// `∇Ω(center + h) = ∇Γ(h)`.
    pub fn omega_grad(&self, l3: f64, metric: &Metric, h: &DVector<f64>) -> Result<DVector<f64>> {
        let bh = metric.apply(h)?;
        let r2 = h.dot(&bh);
        Ok(self.phi_grad(h)? + bh * (l3 * r2))
    }

    /// Value and gradient of `Ω` at `center + h` in one pass.
    pub fn omega_with_grad(
        &self,
        l3: f64,
        metric: &Metric,
        h: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>)> {
        check_len("h", h, self.q.dim())?;
        let bh = metric.apply(h)?;
        let r2 = h.dot(&bh);
        let hh = &self.hess * h;
        let (third, third_vec) = self.third(h, true);
        let value =
            self.value + self.grad.dot(h) + 0.5 * h.dot(&hh) + third / 6.0 + 0.25 * l3 * r2 * r2;
        let grad = &self.grad + hh + third_vec.expect("requested") * 0.5 + bh * (l3 * r2);
        Ok((value, grad))
    }
}
