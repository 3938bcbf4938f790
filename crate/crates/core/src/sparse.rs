//! Compressed-sparse-row matrices and the kernels every model is built on.
//!
//! [`CsrMatrix`] is the universal model input. Binary matrices (the implicit
//! feedback case) carry no value array at all; every stored entry then has
//! weight one. [`SparseWeights`] is the square, zero-diagonal item-item weight
//! matrix produced by the linear and graph models.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A CSR matrix with optional values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Option<Vec<f64>>,
}

/// User x item interactions. Weights are non-negative; binary matrices store no values.
pub type InteractionMatrix = CsrMatrix;

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub cols: &'a [u32],
    values: Option<&'a [f64]>,
}

impl<'a> RowView<'a> {
    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    #[inline]
    pub fn weight(&self, pos: usize) -> f64 {
        match self.values {
            Some(v) => v[pos],
            None => 1.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        let values = self.values;
        self.cols
            .iter()
            .enumerate()
            .map(move |(p, &c)| (c as usize, values.map_or(1.0, |v| v[p])))
    }
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, weight)` records.
    ///
    /// Duplicate coordinates collapse to the last record. When every weight
    /// is exactly one the value array is dropped.
    pub fn build(records: &[(usize, usize, f64)], n_rows: usize, n_cols: usize) -> Result<Self> {
        for (index, &(row, col, weight)) in records.iter().enumerate() {
            if row >= n_rows || col >= n_cols {
                return Err(Error::RecordOutOfBounds {
                    index,
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::InvalidWeight { index, weight });
            }
        }
        if n_cols > u32::MAX as usize {
            return Err(Error::DimensionMismatch(format!(
                "{n_cols} columns exceed the u32 index range"
            )));
        }

        // Stable counting sort by row keeps the input order within each row,
        // so "last record wins" survives the per-row column sort below.
        let mut counts = vec![0usize; n_rows + 1];
        for &(row, _, _) in records {
            counts[row + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut cursor = counts.clone();
        let mut bucketed = vec![(0u32, 0.0f64); records.len()];
        for &(row, col, weight) in records {
            bucketed[cursor[row]] = (col as u32, weight);
            cursor[row] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(records.len());
        let mut values = Vec::with_capacity(records.len());
        for r in 0..n_rows {
            let row = &mut bucketed[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            for (pos, &(c, w)) in row.iter().enumerate() {
                if row.get(pos + 1).is_some_and(|&(next, _)| next == c) {
                    continue;
                }
                col_indices.push(c);
                values.push(w);
            }
            row_offsets.push(col_indices.len());
        }
        let values = if values.iter().all(|&w| w == 1.0) {
            None
        } else {
            Some(values)
        };
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Binary matrix from per-row column lists (sorted and deduplicated here).
    pub fn from_binary_rows(rows: Vec<Vec<u32>>, n_cols: usize) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last as usize >= n_cols {
                    return Err(Error::RecordOutOfBounds {
                        index: r,
                        row: r,
                        col: last as usize,
                        n_rows,
                        n_cols,
                    });
                }
            }
            col_indices.extend_from_slice(&row);
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values: None,
        })
    }

    /// Assembles a matrix from raw arrays, checking every layout invariant.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Option<Vec<f64>>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::Malformed(msg));
        if row_offsets.len() != n_rows + 1 {
            return bad(format!(
                "expected {} row offsets, found {}",
                n_rows + 1,
                row_offsets.len()
            ));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != col_indices.len() {
            return bad("row offsets do not span the index array".into());
        }
        if let Some(v) = &values {
            if v.len() != col_indices.len() {
                return bad("value and index arrays differ in length".into());
            }
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return bad(format!("row offsets decrease at row {r}"));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {r} columns are not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c as usize >= n_cols) {
                return bad(format!("row {r} has a column index >= {n_cols}"));
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: None,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    pub fn is_binary(&self) -> bool {
        self.values.is_none()
    }

    /// Row view; panics when `row >= n_rows`.
    #[inline]
    pub fn row(&self, row: usize) -> RowView<'_> {
        let (lo, hi) = (self.row_offsets[row], self.row_offsets[row + 1]);
        RowView {
            cols: &self.col_indices[lo..hi],
            values: self.values.as_deref().map(|v| &v[lo..hi]),
        }
    }

    /// Column indices and weights of one row.
    pub fn row_nonzeros(&self, row: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        if row >= self.n_rows {
            return Err(Error::IndexOutOfBounds {
                index: row,
                len: self.n_rows,
            });
        }
        Ok(self.row(row).iter().unzip())
    }

    pub fn row_len(&self, row: usize) -> usize {
        self.row_offsets[row + 1] - self.row_offsets[row]
    }

    /// Stored weight at `(row, col)`, zero when absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let view = self.row(row);
        match view.cols.binary_search(&(col as u32)) {
            Ok(pos) => view.weight(pos),
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut offsets = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            offsets[c as usize + 1] += 1;
        }
        for c in 0..self.n_cols {
            offsets[c + 1] += offsets[c];
        }
        let mut cursor = offsets.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = self.values.as_ref().map(|_| vec![0.0; self.nnz()]);
        for r in 0..self.n_rows {
            let view = self.row(r);
            for (pos, &c) in view.cols.iter().enumerate() {
                let dst = cursor[c as usize];
                indices[dst] = r as u32;
                if let Some(v) = values.as_mut() {
                    v[dst] = view.weight(pos);
                }
                cursor[c as usize] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: offsets,
            col_indices: indices,
            values,
        }
    }

    /// Number of stored entries per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_indices {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Sum of weights per column.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        match &self.values {
            None => {
                for &c in &self.col_indices {
                    sums[c as usize] += 1.0;
                }
            }
            Some(v) => {
                for (&c, &w) in self.col_indices.iter().zip(v) {
                    sums[c as usize] += w;
                }
            }
        }
        sums
    }

    /// Divides each row by its weight sum. Empty rows stay empty.
    pub fn row_normalized(&self) -> CsrMatrix {
        let mut values = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let view = self.row(r);
            let total: f64 = view.iter().map(|(_, w)| w).sum();
            values.extend(view.iter().map(|(_, w)| w / total));
        }
        CsrMatrix {
            values: Some(values),
            ..self.clone()
        }
    }

    /// Applies `f` to every stored weight, keeping the sparsity pattern.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CsrMatrix {
        let values = (0..self.nnz())
            .map(|p| f(self.values.as_ref().map_or(1.0, |v| v[p])))
            .collect();
        CsrMatrix {
            values: Some(values),
            ..self.clone()
        }
    }

    /// Dense row-major copy, for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, out) in dense.iter_mut().enumerate() {
            for (c, w) in self.row(r).iter() {
                out[c] = w;
            }
        }
        dense
    }

    /// Memory held by the arrays, in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.row_offsets.len() * std::mem::size_of::<usize>()
            + self.col_indices.len() * 4
            + self.values.as_ref().map_or(0, |v| v.len() * 8)
    }
}

/// Square item x item weights with no diagonal entries. Values may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeights {
    inner: CsrMatrix,
}

impl SparseWeights {
    /// Wraps a square matrix, dropping its diagonal and any exact zeros.
    pub fn from_csr(m: CsrMatrix) -> Result<Self> {
        if m.n_rows != m.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "weights must be square, got {}x{}",
                m.n_rows, m.n_cols
            )));
        }
        let n = m.n_rows;
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(m.nnz());
        let mut values = Vec::with_capacity(m.nnz());
        for r in 0..n {
            for (c, w) in m.row(r).iter() {
                if c != r && w != 0.0 {
                    col_indices.push(c as u32);
                    values.push(w);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseWeights {
            inner: CsrMatrix {
                n_rows: n,
                n_cols: n,
                row_offsets,
                col_indices,
                values: Some(values),
            },
        })
    }

    /// Assembles weights from per-row `(col, value)` lists already sorted by column.
    pub(crate) fn from_sorted_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (r, row) in rows.into_iter().enumerate() {
            for (c, w) in row {
                debug_assert!(c as usize != r);
                col_indices.push(c);
                values.push(w);
            }
            row_offsets.push(col_indices.len());
        }
        SparseWeights {
            inner: CsrMatrix {
                n_rows: n,
                n_cols: n,
                row_offsets,
                col_indices,
                values: Some(values),
            },
        }
    }

    pub fn empty(n_items: usize) -> Self {
        SparseWeights {
            inner: CsrMatrix {
                values: Some(Vec::new()),
                ..CsrMatrix::empty(n_items, n_items)
            },
        }
    }

    pub fn n_items(&self) -> usize {
        self.inner.n_rows
    }

    pub fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    pub fn row(&self, item: usize) -> RowView<'_> {
        self.inner.row(item)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner.get(row, col)
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.inner
    }

    pub fn into_csr(self) -> CsrMatrix {
        self.inner
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.inner.to_dense()
    }

    pub fn max_row_len(&self) -> usize {
        (0..self.n_items())
            .map(|r| self.inner.row_len(r))
            .max()
            .unwrap_or(0)
    }
}

/// Orders entries by descending magnitude, breaking ties by lower column.
fn topk_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.abs()
        .partial_cmp(&a.1.abs())
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Keeps the `k` largest-magnitude entries of a row, returned sorted by column.
pub(crate) fn truncate_row(row: &mut Vec<(u32, f64)>, k: Option<usize>) {
    if let Some(k) = k {
        if row.len() > k {
            if k == 0 {
                row.clear();
                return;
            }
            row.select_nth_unstable_by(k - 1, topk_order);
            row.truncate(k);
        }
    }
    row.sort_unstable_by_key(|&(c, _)| c);
}

/// Sparse accumulator for one output row.
struct RowAccumulator {
    dense: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl RowAccumulator {
    fn new(n: usize) -> Self {
        RowAccumulator {
            dense: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn product_row(
        &mut self,
        a: &CsrMatrix,
        b: &CsrMatrix,
        row: usize,
        skip_col: Option<usize>,
    ) -> Vec<(u32, f64)> {
        let lhs = a.row(row);
        for (p, &mid) in lhs.cols.iter().enumerate() {
            let wa = lhs.weight(p);
            let rhs = b.row(mid as usize);
            for (q, &c) in rhs.cols.iter().enumerate() {
                let ci = c as usize;
                if !self.seen[ci] {
                    self.seen[ci] = true;
                    self.touched.push(c);
                }
                self.dense[ci] += wa * rhs.weight(q);
            }
        }
        let mut out = Vec::with_capacity(self.touched.len());
        for &c in &self.touched {
            let ci = c as usize;
            let v = self.dense[ci];
            if v != 0.0 && Some(ci) != skip_col {
                out.push((c, v));
            }
            self.dense[ci] = 0.0;
            self.seen[ci] = false;
        }
        self.touched.clear();
        out
    }
}

/// Row-parallel `a * b` with per-row top-k truncation.
///
/// Within a row, products accumulate in a fixed order, so the result does not
/// depend on the worker count.
pub(crate) fn product_rows(
    a: &CsrMatrix,
    b: &CsrMatrix,
    k: Option<usize>,
    skip_diagonal: bool,
) -> Result<Vec<Vec<(u32, f64)>>> {
    if a.n_cols != b.n_rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.n_rows, a.n_cols, b.n_rows, b.n_cols
        )));
    }
    let rows = (0..a.n_rows)
        .into_par_iter()
        .map_init(
            || RowAccumulator::new(b.n_cols),
            |acc, r| {
                let mut row = acc.product_row(a, b, r, skip_diagonal.then_some(r));
                truncate_row(&mut row, k);
                row
            },
        )
        .collect();
    Ok(rows)
}

/// Exact sparse product `a * b`, keeping at most `k` largest-magnitude entries
/// per row (`None` keeps everything). Ties go to the lower column index.
pub fn sparse_topk_product(a: &CsrMatrix, b: &CsrMatrix, k: Option<usize>) -> Result<CsrMatrix> {
    let rows = product_rows(a, b, k, false)?;
    let mut row_offsets = Vec::with_capacity(rows.len() + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        for (c, v) in row {
            col_indices.push(c);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }
    Ok(CsrMatrix {
        n_rows: a.n_rows,
        n_cols: b.n_cols,
        row_offsets,
        col_indices,
        values: Some(values),
    })
}
