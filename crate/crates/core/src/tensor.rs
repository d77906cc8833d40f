//! Symmetric order-3 tensors in canonical sparse form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A symmetric `d×d×d` tensor stored as canonical entries `(i, j, k, value)`
/// with `i ≤ j ≤ k`. Each canonical entry stands for the value at every
/// permutation of its indices. Application walks a precomputed list of the
/// distinct permutations, so every contraction is permutation invariant by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor3 {
    dim: usize,
    canonical: Vec<(usize, usize, usize, f64)>,
    expanded: Vec<(usize, usize, usize, f64)>,
}

impl SymTensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            canonical: Vec::new(),
            expanded: Vec::new(),
        }
    }

    /// Accepts entries in any index order; each is sorted into canonical
    /// position and duplicates are summed.
    pub fn from_entries(dim: usize, entries: &[(usize, usize, usize, f64)]) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for &(i, j, k, v) in entries {
            if i >= dim || j >= dim || k >= dim {
                return Err(Error::InvalidArgument(format!(
                    "tensor index ({i}, {j}, {k}) out of range for dimension {dim}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite tensor entry".into()));
            }
            let mut key = [i, j, k];
            key.sort_unstable();
            *map.entry((key[0], key[1], key[2])).or_insert(0.0) += v;
        }
        let canonical: Vec<_> = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j, k), v)| (i, j, k, v))
            .collect();
        let mut expanded = Vec::with_capacity(canonical.len() * 6);
        for &(i, j, k, v) in &canonical {
            let mut perms = [
                (i, j, k),
                (i, k, j),
                (j, i, k),
                (j, k, i),
                (k, i, j),
                (k, j, i),
            ];
            perms.sort_unstable();
            let mut last = None;
            for p in perms {
                if last != Some(p) {
                    expanded.push((p.0, p.1, p.2, v));
                    last = Some(p);
                }
            }
        }
        Ok(Self {
            dim,
            canonical,
            expanded,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_zero(&self) -> bool {
        self.canonical.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.canonical
    }

    /// `T[u, v, w]`.
    pub fn form(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.expanded
            .iter()
            .map(|&(i, j, k, t)| t * u[i] * v[j] * w[k])
            .sum()
    }

    /// The vector `T[u, v, ·]`.
    pub fn contract2(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, k, t) in &self.expanded {
            out[k] += t * u[i] * v[j];
        }
        out
    }

    /// The symmetric matrix `T[u, ·, ·]`.
    pub fn contract1(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, k, t) in &self.expanded {
            out[(j, k)] += t * u[i];
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let entries: Vec<_> = self
            .canonical
            .iter()
            .map(|&(i, j, k, v)| (i, j, k, s * v))
            .collect();
        Self::from_entries(self.dim, &entries).expect("entries already validated")
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::dim("tensor dimension", self.dim, other.dim));
        }
        let mut all = self.canonical.clone();
        all.extend_from_slice(&other.canonical);
        Self::from_entries(self.dim, &all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn expansion_counts_permutations() {
        let t = SymTensor3::from_entries(3, &[(0, 0, 0, 1.0), (0, 0, 1, 1.0), (0, 1, 2, 1.0)])
            .unwrap();
        assert_eq!(t.expanded.len(), 1 + 3 + 6);
        let ones = v(&[1.0, 1.0, 1.0]);
        assert_eq!(t.form(&ones, &ones, &ones), 10.0);
    }

    #[test]
    fn unsorted_input_is_canonicalised() {
        let a = SymTensor3::from_entries(3, &[(2, 0, 1, 1.5), (1, 2, 0, 0.5)]).unwrap();
        assert_eq!(a.entries(), &[(0, 1, 2, 2.0)]);
        assert!(SymTensor3::from_entries(2, &[(0, 0, 2, 1.0)]).is_err());
    }

    #[test]
    fn contractions_are_permutation_invariant() {
        let t = SymTensor3::from_entries(
            3,
            &[(0, 1, 2, 0.7), (0, 0, 2, -1.3), (1, 1, 1, 2.0), (1, 2, 2, 0.25)],
        )
        .unwrap();
        let (a, b, c) = (v(&[0.3, -1.0, 2.0]), v(&[1.5, 0.2, -0.7]), v(&[-0.4, 0.9, 0.1]));
        let base = t.form(&a, &b, &c);
        for (x, y, z) in [(&a, &c, &b), (&b, &a, &c), (&b, &c, &a), (&c, &a, &b), (&c, &b, &a)] {
            assert!((t.form(x, y, z) - base).abs() < 1e-14);
        }
        assert!((t.contract2(&a, &b).dot(&c) - base).abs() < 1e-14);
        assert!((t.contract2(&b, &a) - t.contract2(&a, &b)).norm() < 1e-14);
        let m = t.contract1(&a);
        assert!((m.clone() - m.transpose()).norm() < 1e-14);
        assert!(((m * &b).dot(&c) - base).abs() < 1e-14);
    }
}
