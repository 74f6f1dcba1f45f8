//! Compressed sparse row matrices.

use crate::autodiff::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Build from triplets. Duplicate `(row, col)` entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < n_rows && c < n_cols, "triplet ({r},{c}) outside {n_rows}x{n_cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `self · x` for dense `x`.
    pub fn mul_dense(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(self.n_cols, x.rows());
        let m = x.cols();
        let mut out = Tensor::zeros(self.n_rows, m);
        let od = out.data_mut();
        for r in 0..self.n_rows {
            let o_row = &mut od[r * m..(r + 1) * m];
            for (c, v) in self.row(r) {
                for (o, &b) in o_row.iter_mut().zip(x.row_slice(c)) {
                    *o += v * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · g` for dense `g`.
    pub fn tmul_dense(&self, g: &Tensor) -> Tensor {
        debug_assert_eq!(self.n_rows, g.rows());
        let m = g.cols();
        let mut out = Tensor::zeros(self.n_cols, m);
        let od = out.data_mut();
        for r in 0..self.n_rows {
            let g_row = g.row_slice(r);
            for (c, v) in self.row(r) {
                let o_row = &mut od[c * m..(c + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(g_row) {
                    *o += v * b;
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }
}
