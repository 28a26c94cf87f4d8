//! Compressed sparse row storage with a fixed pattern.
//!
//! Operators are assembled pattern-first: the nonzero structure is derived
//! from grid stencils, then local contributions are accumulated into the
//! preallocated values. Column indices are `u32` to halve index memory on
//! large 3D grids.

use crate::error::{check_len, Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero-valued matrix with the given per-row sorted, deduplicated columns.
    pub fn from_pattern(nrows: usize, ncols: usize, rows: impl IntoIterator<Item = Vec<u32>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for cols in rows {
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c as usize >= ncols) {
                return Err(Error::Assembly("row pattern must be sorted, unique and in range".into()));
            }
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        check_len(nrows, row_ptr.len() - 1)?;
        let values = vec![0.0; col_idx.len()];
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Build from unsorted triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Assembly(format!("triplet ({r}, {c}) outside {nrows}x{ncols}")));
            }
            rows[r].push((c as u32, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
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

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(r, c)`, zero when outside the pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&(c as u32)).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// Position of column `c` in row `r`.
    pub(crate) fn find(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].binary_search(&(c as u32)).ok().map(|k| a + k)
    }

    pub(crate) fn value_at_mut(&mut self, pos: usize) -> &mut f64 {
        &mut self.values[pos]
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols, x.len())?;
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` into a preallocated buffer; sizes are the caller's contract.
    pub(crate) fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        par::for_each_chunk_mut(y, 4096, |chunk, ys| {
            let base = chunk * 4096;
            for (k, yk) in ys.iter_mut().enumerate() {
                let (cols, vals) = self.row(base + k);
                *yk = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
            }
        });
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    /// Drop stored zeros in place.
    pub fn prune(&mut self) {
        let mut w = 0;
        let mut start = 0;
        for r in 0..self.nrows {
            let end = self.row_ptr[r + 1];
            for k in start..end {
                if self.values[k] != 0.0 {
                    self.col_idx[w] = self.col_idx[k];
                    self.values[w] = self.values[k];
                    w += 1;
                }
            }
            start = end;
            self.row_ptr[r + 1] = w;
        }
        self.col_idx.truncate(w);
        self.values.truncate(w);
        self.col_idx.shrink_to_fit();
        self.values.shrink_to_fit();
    }

    /// Matrix whose row `r` is `Σ s · row(k)` over the `(k, s)` pairs of
    /// `sources(r)`. Entries are summed in source order; no intermediate
    /// triplets are formed.
    pub fn combine_rows<I>(&self, nrows: usize, mut sources: impl FnMut(usize) -> I) -> Self
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut acc = vec![0.0; self.ncols];
        let mut seen = vec![false; self.ncols];
        let mut touched: Vec<u32> = Vec::new();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let (mut col_idx, mut values) = (Vec::new(), Vec::new());
        for r in 0..nrows {
            for (k, s) in sources(r) {
                let (cols, vals) = self.row(k);
                for (&c, &v) in cols.iter().zip(vals) {
                    let c = c as usize;
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c as u32);
                    }
                    acc[c] += s * v;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                col_idx.push(c);
                values.push(acc[c as usize]);
                acc[c as usize] = 0.0;
                seen[c as usize] = false;
            }
            touched.clear();
            row_ptr.push(col_idx.len());
        }
        col_idx.shrink_to_fit();
        values.shrink_to_fit();
        Self { nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c as usize, v))
        })
    }
}
