//! Compressed sparse row matrices and a banded LU factorization with partial pivoting.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("zero pivot in column {0}")]
    ZeroPivot(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
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

    /// `(column, value)` pairs of row `r`, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `alpha * self + beta * I`, keeping the sparsity pattern plus the diagonal.
    pub fn scale_shift(&self, alpha: f64, beta: f64) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + self.nrows);
        for r in 0..self.nrows {
            t.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            t.push((r, r, beta));
        }
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for r in 0..self.nrows {
            for (c, _) in self.row(r) {
                if c < r {
                    lower = lower.max(r - c);
                } else {
                    upper = upper.max(c - r);
                }
            }
        }
        (lower, upper)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// LU factors of a banded matrix, stored row-wise with room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self, FactorError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FactorError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        let (kl, ku) = matrix.bandwidths();
        // row i holds columns i-kl ..= i+ku+kl
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            lower: kl,
            upper: ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for r in 0..n {
            for (c, v) in matrix.row(r) {
                *lu.at_mut(r, c) += v;
            }
        }
        let reach = kl + ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.at(k, k).abs();
            for r in k + 1..=last_row {
                let v = lu.at(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(FactorError::ZeroPivot(k));
            }
            lu.pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let a = lu.at(k, c);
                    let b = lu.at(p, c);
                    *lu.at_mut(k, c) = b;
                    *lu.at_mut(p, c) = a;
                }
            }
            let pivot = lu.at(k, k);
            for r in k + 1..=last_row {
                let l = lu.at(r, k) / pivot;
                *lu.at_mut(r, k) = l;
                if l != 0.0 {
                    for c in k + 1..=last_col {
                        let u = lu.at(k, c);
                        *lu.at_mut(r, c) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn offset(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.lower >= r && c <= r + self.upper + self.lower);
        r * self.width + (c + self.lower - r)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[self.offset(r, c)]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let o = self.offset(r, c);
        &mut self.data[o]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + self.lower).min(n.saturating_sub(1)) {
                    b[r] -= self.at(r, k) * bk;
                }
            }
        }
        let reach = self.lower + self.upper;
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + reach).min(n - 1) {
                s -= self.at(k, c) * b[c];
            }
            b[k] = s / self.at(k, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        a.mul_vec(x, &mut ax);
        ax.iter()
            .zip(b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 0, 2.0), (1, 0, 3.0)]);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn tridiagonal_solve() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        assert_eq!(a.bandwidths(), (1, 1));
        let lu = BandedLu::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        assert!(residual(&a, &x, &b) < 1e-13);
    }

    #[test]
    fn pivoting_required() {
        // zero leading entry forces a row swap
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 1, 1.0),
                (1, 0, 2.0),
                (1, 1, 1.0),
                (1, 2, 1.0),
                (2, 1, 3.0),
                (2, 2, 1.0),
            ],
        );
        let lu = BandedLu::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x);
        assert!(residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn singular_detected() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]);
        assert_eq!(BandedLu::factor(&a).unwrap_err(), FactorError::ZeroPivot(1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn banded_matches_dense(
                n in 2usize..30,
                kl in 0usize..4,
                ku in 0usize..4,
                entries in proptest::collection::vec(-1.0f64..1.0, 30 * 9),
                rhs in proptest::collection::vec(-1.0f64..1.0, 30),
            ) {
                let mut t = Vec::new();
                let mut k = 0;
                for r in 0..n {
                    for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                        let v = entries[k % entries.len()];
                        k += 1;
                        let v = if r == c { 8.0 + v } else { v };
                        t.push((r, c, v));
                    }
                }
                let a = CsrMatrix::from_triplets(n, n, t);
                let b = &rhs[..n];
                let lu = BandedLu::factor(&a).unwrap();
                let mut x = b.to_vec();
                lu.solve_in_place(&mut x);
                let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap();
                for i in 0..n {
                    prop_assert!((x[i] - dense[i]).abs() < 1e-9 * (1.0 + dense[i].abs()));
                }
            }
        }
    }
}
