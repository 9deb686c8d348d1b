use std::sync::Arc;

use crate::error::{Error, Result};

/// Compressed-sparse-row structure shared by all matrices assembled on one
/// finite-element space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists; columns are sorted and
    /// deduplicated.
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Storage slot of entry `(i, j)`, if it is in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// Square sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>, symmetric: bool) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self {
            pattern,
            values,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::from_rows((0..n).map(|i| vec![i]).collect()));
        Self {
            pattern,
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            rows[i].push(j);
        }
        let mut m = Self::zeros(Arc::new(SparsityPattern::from_rows(rows)), false);
        for &(i, j, v) in triplets {
            m.add_at(i, j, v);
        }
        m.symmetric = m.is_numerically_symmetric(1e-14);
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` is not in the pattern.
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub(crate) fn add_at_slot(&mut self, slot: usize, v: f64) {
        self.values[slot] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate().take(p.n) {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`.
    pub fn mul_transpose(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        let mut y = vec![0.0; p.n];
        for (i, &xi) in x.iter().enumerate().take(p.n) {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                y[p.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = &self.pattern;
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate().take(p.n) {
            let mut row = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row += self.values[k] * y[p.col_idx[k]];
            }
            acc += xi * row;
        }
        acc
    }

    pub fn transpose(&self) -> Self {
        if self.symmetric {
            return self.clone();
        }
        let p = &self.pattern;
        let mut rows = vec![Vec::new(); p.n];
        for i in 0..p.n {
            for &j in p.row(i) {
                rows[j].push(i);
            }
        }
        let tp = SparsityPattern::from_rows(rows);
        let pattern = if tp == **p { Arc::clone(p) } else { Arc::new(tp) };
        let mut t = Self::zeros(pattern, false);
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                t.add_at(p.col_idx[k], i, self.values[k]);
            }
        }
        t
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.scale(alpha);
        m
    }

    /// `self += alpha * other`; both matrices must share the same pattern.
    pub fn add_scaled(&mut self, alpha: f64, other: &SparseMatrix) -> Result<()> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && self.pattern != other.pattern {
            return Err(Error::InvalidArgument(
                "matrices have different sparsity patterns".into(),
            ));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        self.symmetric &= other.symmetric;
        Ok(())
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry is below `tol`.
    pub fn is_numerically_symmetric(&self, tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let p = &self.pattern;
        (0..p.n).all(|i| {
            (p.row_ptr[i]..p.row_ptr[i + 1])
                .all(|k| (self.values[k] - self.get(p.col_idx[k], i)).abs() <= tol * scale)
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
