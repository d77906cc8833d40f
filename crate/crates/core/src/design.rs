//! Compressed-row storage for the design matrix `A` of the quartic term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Row-major sparse matrix. Dense inputs are stored the same way with their
/// explicit zeros dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl RowMatrix {
    pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::dim("row of A", ncols, row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self::from_rows(&rows, m.ncols()).expect("rows have matching length")
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut dense_rows: Vec<std::collections::BTreeMap<usize, f64>> =
            vec![Default::default(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            *dense_rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in dense_rows {
            for (j, v) in row {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let d = self.to_dense();
        d.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn work(&self) -> usize {
        self.nnz() + self.nrows
    }

    /// `A x`.
    pub fn mul(&self, x: &DVector<f64>) -> Vec<f64> {
        self.mul_with(Exec::auto(self.work()), x)
    }

    pub fn mul_with(&self, exec: Exec, x: &DVector<f64>) -> Vec<f64> {
        let xs = x.as_slice();
        par::map_range(exec, self.nrows, |i| self.row_dot(i, xs))
    }

    /// `Aᵀ w`.
    pub fn tr_mul(&self, w: &[f64]) -> DVector<f64> {
        self.tr_mul_with(Exec::auto(self.work()), w)
    }

    pub fn tr_mul_with(&self, exec: Exec, w: &[f64]) -> DVector<f64> {
        debug_assert_eq!(w.len(), self.nrows);
        let out = par::sum_vectors(exec, self.nrows, self.ncols, |rows, acc| {
            for i in rows {
                let wi = w[i];
                if wi == 0.0 {
                    continue;
                }
                let (idx, val) = self.row(i);
                for (&j, &v) in idx.iter().zip(val) {
                    acc[j] += wi * v;
                }
            }
        });
        DVector::from_vec(out)
    }

    /// `Aᵀ Diag(w) A`, symmetric.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let work = self.values.len() * self.ncols.max(1);
        self.weighted_gram_with(Exec::auto(work), w)
    }

    pub fn weighted_gram_with(&self, exec: Exec, w: &[f64]) -> DMatrix<f64> {
        let d = self.ncols;
        let upper = par::sum_vectors(exec, self.nrows, d * d, |rows, acc| {
            for i in rows {
                let wi = w[i];
                if wi == 0.0 {
                    continue;
                }
                let (idx, val) = self.row(i);
                for (p, (&j, &vj)) in idx.iter().zip(val).enumerate() {
                    let s = wi * vj;
                    for (&k, &vk) in idx[p..].iter().zip(&val[p..]) {
                        acc[j * d + k] += s * vk;
                    }
                }
            }
        });
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in j..d {
                let v = upper[j * d + k];
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        m
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.weighted_gram(&vec![1.0; self.nrows])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_products() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -2.0, 3.0, 0.5, 0.0]);
        let a = RowMatrix::from_dense(&m);
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.to_dense(), m);
        let x = DVector::from_vec(vec![2.0, -1.0]);
        let ax = a.mul(&x);
        assert_eq!(ax, (m.clone() * &x).as_slice());
        let w = [1.0, 2.0, 3.0];
        let atw = a.tr_mul(&w);
        assert_eq!(atw, m.transpose() * DVector::from_row_slice(&w));
        let g = a.weighted_gram(&w);
        let expect = m.transpose() * DMatrix::from_diagonal(&DVector::from_row_slice(&w)) * &m;
        assert!((g - expect).norm() < 1e-14);
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = RowMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -1.0, 0.0]));
        assert!(RowMatrix::from_triplets(1, 1, &[(1, 0, 1.0)]).is_err());
    }

    #[test]
    fn parallel_products_match_sequential() {
        let rows: Vec<Vec<f64>> = (0..700)
            .map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0).collect())
            .collect();
        let a = RowMatrix::from_rows(&rows, 5).unwrap();
        let w: Vec<f64> = (0..700).map(|i| (i as f64).cos()).collect();
        assert_eq!(
            a.tr_mul_with(Exec::Sequential, &w),
            a.tr_mul_with(Exec::Parallel, &w)
        );
        assert_eq!(
            a.weighted_gram_with(Exec::Sequential, &w),
            a.weighted_gram_with(Exec::Parallel, &w)
        );
    }
}
