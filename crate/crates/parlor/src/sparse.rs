use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Immutable sparsity pattern (CSR layout, sorted column indices per row).
///
/// Patterns are shared through an `Arc` so that a whole family of matrices
/// (e.g. preconditioner snapshots) stores one index structure and per-matrix
/// value arrays; linear combinations then reduce to flat axpys.
#[derive(Debug, PartialEq, Eq)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    pub fn new(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize)>) -> Result<Arc<Self>> {
        entries.sort_unstable();
        entries.dedup();
        if let Some(&(i, j)) = entries.iter().find(|&&(i, j)| i >= nrows || j >= ncols) {
            return Err(Error::InvalidArgument(format!(
                "pattern entry ({i}, {j}) outside a {nrows}x{ncols} matrix"
            )));
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(i, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|&(_, j)| j).collect();
        Ok(Arc::new(Pattern { nrows, ncols, row_ptr, col_idx }))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Storage position of entry `(i, j)`, if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nrows {
            return None;
        }
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    /// All stored entries in storage order.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.push((i, self.col_idx[k]));
            }
        }
        out
    }
}

/// Sparse matrix with a shared pattern and owned values.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let vals = vec![0.0; pattern.nnz()];
        CsrMatrix { pattern, vals }
    }

    pub fn from_values(pattern: Arc<Pattern>, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != pattern.nnz() {
            return Err(Error::DimensionMismatch {
                context: "value array length must match pattern nnz",
                expected: pattern.nnz(),
                got: vals.len(),
            });
        }
        Ok(CsrMatrix { pattern, vals })
    }

    /// Builds from triplets; duplicates are summed. The resulting pattern is
    /// owned by this matrix alone.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let entries: Vec<(usize, usize)> = triplets.iter().map(|&(i, j, _)| (i, j)).collect();
        let pattern = Pattern::new(nrows, ncols, entries)?;
        let mut vals = vec![0.0; pattern.nnz()];
        for &(i, j, v) in triplets {
            let k = pattern.position(i, j).expect("triplet entry is in the pattern");
            vals[k] += v;
        }
        Ok(CsrMatrix { pattern, vals })
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.ncols());
        let p = &self.pattern;
        let mut y = DVector::zeros(p.nrows);
        for i in 0..p.nrows {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.vals[k] * x[p.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    /// `y = A' x`.
    pub fn tr_matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.nrows());
        let p = &self.pattern;
        let mut y = DVector::zeros(p.ncols);
        for i in 0..p.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                y[p.col_idx[k]] += self.vals[k] * xi;
            }
        }
        y
    }

    /// `w' A w` for square `A`.
    pub fn quad_form(&self, w: &DVector<f64>) -> f64 {
        let p = &self.pattern;
        let mut acc = 0.0;
        for i in 0..p.nrows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row += self.vals[k] * w[p.col_idx[k]];
            }
            acc += wi * row;
        }
        acc
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let n = self.nrows().min(self.ncols());
        let mut d = DVector::zeros(n);
        for i in 0..n {
            d[i] = self.get(i, i);
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = &self.pattern;
        let mut out = DMatrix::zeros(p.nrows, p.ncols);
        for i in 0..p.nrows {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                out[(i, p.col_idx[k])] = self.vals[k];
            }
        }
        out
    }

    /// `sum_i weights[i] * mats[i]` over a shared pattern.
    pub fn linear_combination(mats: &[CsrMatrix], weights: &[f64]) -> Result<CsrMatrix> {
        if mats.is_empty() || mats.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "linear combination needs matching, non-empty factor and weight lists".into(),
            ));
        }
        for m in &mats[1..] {
            if !mats[0].same_pattern(m) {
                return Err(Error::InvalidArgument(
                    "linear combination requires a shared sparsity pattern".into(),
                ));
            }
        }
        let mut out = CsrMatrix::zeros(mats[0].pattern.clone());
        for (m, &w) in mats.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.vals.iter_mut().zip(&m.vals) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// `A' B` as a new sparse matrix (fresh pattern).
    pub fn transpose_product(a: &CsrMatrix, b: &CsrMatrix) -> Result<CsrMatrix> {
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch {
                context: "transpose product row counts",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); a.ncols()];
        let (pa, pb) = (&a.pattern, &b.pattern);
        for k in 0..a.nrows() {
            for ka in pa.row_ptr[k]..pa.row_ptr[k + 1] {
                let i = pa.col_idx[ka];
                let av = a.vals[ka];
                if av == 0.0 {
                    continue;
                }
                let row = &mut rows[i];
                for kb in pb.row_ptr[k]..pb.row_ptr[k + 1] {
                    *row.entry(pb.col_idx[kb]).or_insert(0.0) += av * b.vals[kb];
                }
            }
        }
        let mut row_ptr = vec![0usize; a.ncols() + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (&j, &v) in row {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        let pattern = Arc::new(Pattern {
            nrows: a.ncols(),
            ncols: b.ncols(),
            row_ptr,
            col_idx,
        });
        Ok(CsrMatrix { pattern, vals })
    }
}
