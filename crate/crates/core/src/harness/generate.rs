//! Seeded instance generators.
//!
//! Every design is `A = [Ā; 0.5·I]` with `Ā` uniform on `[−1, 1]`, so
//! `AᵀA ⪰ 0.25·I` regardless of the random block.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{Planted, ProblemFile};
use crate::design::RowMatrix;
use crate::error::{Error, Result};
use crate::quartic::StructuredQuartic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    /// `cᵀx + ‖Ax − b‖₄⁴` with random `c` and `b`.
    L4,
    /// ℓ4 regression whose `c` is chosen so a random `x*` is optimal.
    Planted,
    /// Planted ℓ4 regression plus a random PSD quadratic.
    DenseQuartic,
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l4" => Ok(InstanceKind::L4),
            "planted" => Ok(InstanceKind::Planted),
            "dense-quartic" => Ok(InstanceKind::DenseQuartic),
            other => Err(Error::InvalidArgument(format!("unknown instance kind '{other}'"))),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn design(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<Vec<f64>> {
    if d == 1 && n == 1 {
        return vec![vec![1.0]];
    }
    let mut rows: Vec<Vec<f64>> = (0..n - d).map(|_| uniform(rng, d)).collect();
    rows.extend((0..d).map(|i| {
        let mut r = vec![0.0; d];
        r[i] = 0.5;
        r
    }));
    rows
}

/// `c = −4Aᵀ(Ax* − b)³` makes `x*` stationary for `cᵀx + ‖Ax − b‖₄⁴`.
fn planted_c(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; x.len()];
    for (row, bi) in a.iter().zip(b) {
        let r: f64 = row.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() - bi;
        let w = 4.0 * r * r * r;
        for (cj, aj) in c.iter_mut().zip(row) {
            *cj -= w * aj;
        }
    }
    c
}

/// Deterministic instance of the given kind. `d = n = 1` yields the
/// canonical `x⁴/24` for every kind.
pub fn gen_instance(kind: InstanceKind, d: usize, n: usize, seed: u64) -> Result<ProblemFile> {
    if d == 0 || n < d {
        return Err(Error::InvalidArgument(format!("need n ≥ d ≥ 1, got d={d}, n={n}")));
    }
    if d == 1 && n == 1 {
        let a = RowMatrix::from_rows(&[vec![1.0]], 1)?;
        let q = StructuredQuartic::pure_quartic(a)?;
        let planted = (kind != InstanceKind::L4).then(|| Planted {
            x_star: vec![0.0],
            f_star: 0.0,
        });
        return Ok(ProblemFile::from_quartic(&q, planted));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = design(&mut rng, d, n);
    let b = uniform(&mut rng, n);
    match kind {
        InstanceKind::L4 => Ok(ProblemFile::L4 {
            c: uniform(&mut rng, d),
            a,
            b,
            planted: None,
        }),
        InstanceKind::Planted => {
            let x_star = uniform(&mut rng, d);
            let c = planted_c(&a, &b, &x_star);
            let mut file = ProblemFile::L4 {
                a,
                b,
                c,
                planted: None,
            };
            let q = file.to_quartic()?;
            let f_star = q.eval(&DVector::from_column_slice(&x_star))?;
            if let ProblemFile::L4 { planted, .. } = &mut file {
                *planted = Some(Planted { x_star, f_star });
            }
            Ok(file)
        }
        InstanceKind::DenseQuartic => {
            let x_star = uniform(&mut rng, d);
            let m = DMatrix::from_iterator(d, d, uniform(&mut rng, d * d)) / (d as f64).sqrt();
            let p = &m * m.transpose() * 0.5;
            // the quadratic xᵀPx contributes 2P(x − x*) to the gradient
            // after shifting c by −2Px*
            let mut c = DVector::from_vec(planted_c(&a, &b, &x_star));
            let xs = DVector::from_column_slice(&x_star);
            c -= &p * &xs * 2.0;
            let base = StructuredQuartic::from_l4_regression(
                &RowMatrix::from_rows(&a, d)?,
                &DVector::from_column_slice(&b),
                &c,
            )?;
            let q = StructuredQuartic::new(
                base.c().clone(),
                base.g() + &p,
                base.t().clone(),
                base.a().clone(),
            )?;
            let f_star = q.eval(&xs)?;
            Ok(ProblemFile::from_quartic(&q, Some(Planted { x_star, f_star })))
        }
    }
}
