//! JSON problem files.
//!
//! Two shapes are accepted, tagged by `"kind"`:
//!
//! ```json
//! {"kind": "general", "d": 2, "c": [..], "G": [[..], ..], "T": [[i, j, k, v], ..], "A": [[..], ..]}
//! {"kind": "l4", "A": [[..], ..], "b": [..], "c": [..]}
//! ```
//!
//! Either may carry a `"planted"` object with a known minimizer and value.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::RowMatrix;
use crate::error::{Error, Result};
use crate::quartic::StructuredQuartic;
use crate::tensor::SymTensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub x_star: Vec<f64>,
    /// Optimal value of the structured quartic (for `l4` files, with the
    /// constant `‖b‖₄⁴` already removed).
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemFile {
    General {
        d: usize,
        c: Vec<f64>,
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        /// Canonical entries `[i, j, k, value]` with `i ≤ j ≤ k`.
        #[serde(rename = "T", default)]
        t: Vec<(usize, usize, usize, f64)>,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        planted: Option<Planted>,
    },
    L4 {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        planted: Option<Planted>,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>], d: usize) -> Result<RowMatrix> {
    RowMatrix::from_rows(rows, d)
}

impl ProblemFile {
    pub fn from_quartic(q: &StructuredQuartic, planted: Option<Planted>) -> Self {
        let g = q.g();
        ProblemFile::General {
            d: q.dim(),
            c: q.c().iter().copied().collect(),
            g: (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect(),
            t: q.t().entries().to_vec(),
            a: q.a().to_rows(),
            planted,
        }
    }

    pub fn planted(&self) -> Option<&Planted> {
        match self {
            ProblemFile::General { planted, .. } | ProblemFile::L4 { planted, .. } => {
                planted.as_ref()
            }
        }
    }

    pub fn to_quartic(&self) -> Result<StructuredQuartic> {
        match self {
            ProblemFile::General { d, c, g, t, a, .. } => {
                if g.len() != *d {
                    return Err(Error::dim("G rows", *d, g.len()));
                }
                let mut gm = DMatrix::zeros(*d, *d);
                for (i, row) in g.iter().enumerate() {
                    if row.len() != *d {
                        return Err(Error::dim("G columns", *d, row.len()));
                    }
                    for (j, v) in row.iter().enumerate() {
                        gm[(i, j)] = *v;
                    }
                }
                StructuredQuartic::new(
                    DVector::from_column_slice(c),
                    gm,
                    SymTensor3::from_entries(*d, t)?,
                    rows_to_matrix(a, *d)?,
                )
            }
            ProblemFile::L4 { a, b, c, .. } => {
                let d = c.len();
                StructuredQuartic::from_l4_regression(
                    &rows_to_matrix(a, d)?,
                    &DVector::from_column_slice(b),
                    &DVector::from_column_slice(c),
                )
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l4_round_trip() {
        let p = ProblemFile::L4 {
            a: vec![vec![1.0, 0.0], vec![0.5, 2.0]],
            b: vec![0.1, -0.3],
            c: vec![0.0, 1.0],
            planted: None,
        };
        let back: ProblemFile = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let q = back.to_quartic().unwrap();
        let q2 = ProblemFile::from_quartic(&q, None).to_quartic().unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7]);
        assert!((q.eval(&x).unwrap() - q2.eval(&x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn ragged_matrix_rejected() {
        let p = ProblemFile::General {
            d: 2,
            c: vec![0.0, 0.0],
            g: vec![vec![0.0, 0.0], vec![0.0]],
            t: vec![],
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            planted: None,
        };
        assert!(p.to_quartic().is_err());
    }
}
