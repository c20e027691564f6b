//! Compressed sparse row storage and a small dense LU.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square or rectangular matrix in CSR layout with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Zero matrix with the given per-row column sets (duplicates removed).
    pub fn from_pattern(ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values: vec![T::zero(); nnz],
        }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(ncols, rows);
        for &(i, j, v) in triplets {
            let k = m.find(i, j).expect("entry in pattern");
            m.values[k] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, T::one())).collect::<Vec<_>>())
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of entry (i, j) in the value array.
    #[inline]
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.find(i, j).map_or(T::zero(), |k| self.values[k])
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    /// y = A x
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut s = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let dst = next[j];
                col_idx[dst] = i;
                values[dst] = self.values[k];
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Replaces row `i` by the unit row `e_i`. Entries outside the pattern
    /// are not created, so the diagonal must be present.
    pub fn set_identity_row(&mut self, i: usize) {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            self.values[k] = if self.col_idx[k] == i { T::one() } else { T::zero() };
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.col_idx[k]] = self.values[k];
            }
        }
        d
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, b: &Self) -> Self {
        assert_eq!(self.ncols, b.nrows, "inner dimensions");
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![T::zero(); b.ncols];
        let mut marker = vec![usize::MAX; b.ncols];
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            cols.clear();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (aik, kk) = (self.values[k], self.col_idx[k]);
                for m in b.row_ptr[kk]..b.row_ptr[kk + 1] {
                    let j = b.col_idx[m];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = T::zero();
                        cols.push(j);
                    }
                    acc[j] += aik * b.values[m];
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: b.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `diag(A, …, A)` with `blocks` copies.
    pub fn block_diagonal(&self, blocks: usize) -> Self {
        let mut t = Vec::with_capacity(blocks * self.nnz());
        for b in 0..blocks {
            for i in 0..self.nrows {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    t.push((b * self.nrows + i, b * self.ncols + self.col_idx[k], self.values[k]));
                }
            }
        }
        Self::from_triplets(blocks * self.nrows, blocks * self.ncols, &t)
    }

    /// Symmetric permutation `B[i][j] = A[perm[i]][perm[j]]` of a square matrix.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        let mut buf: Vec<(usize, T)> = Vec::new();
        for &old in perm {
            buf.clear();
            for k in self.row_ptr[old]..self.row_ptr[old + 1] {
                buf.push((inv[self.col_idx[k]], self.values[k]));
            }
            buf.sort_unstable_by_key(|e| e.0);
            for &(j, v) in &buf {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Dense LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut lu = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::dim("dense LU row", n, r.len()));
            }
            lu.extend_from_slice(r);
        }
        Self::factor(n, lu)
    }

    pub fn from_csr(a: &CsrMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim("dense LU of non-square matrix", a.nrows(), a.ncols()));
        }
        let n = a.nrows();
        let mut lu = vec![T::zero(); n * n];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                lu[i * n + j] = v;
            }
        }
        Self::factor(n, lu)
    }

    /// Factorizes the row-major `n × n` matrix `a`.
    pub fn factor(n: usize, mut lu: Vec<T>) -> Result<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for k in 0..n {
            let (mut p, mut best) = (k, lu[k * n + k].abs());
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * T::epsilon() * T::lit(1e-3)) {
                return Err(Error::Singular(format!("dense LU pivot {k} vanishes")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= f * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_and_matvec_agree() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (0, 2, 1.0)]);
        assert_eq!(a.get(0, 2), 3.0);
        let t = a.transpose();
        assert_eq!(t.nrows(), 3);
        assert_eq!(t.get(2, 0), 3.0);
        let x = [1.0, -1.0];
        assert_eq!(t.mul_vec(&x), vec![1.0, -3.0, 3.0]);
    }

    #[test]
    fn product_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0f64), (0, 2, 2.0), (1, 1, -1.0)]);
        let b = CsrMatrix::from_triplets(3, 2, &[(0, 1, 4.0), (1, 0, 3.0), (2, 0, 1.0), (2, 1, 1.0)]);
        assert_eq!(a.matmul(&b).to_dense(), vec![vec![2.0, 6.0], vec![-3.0, 0.0]]);
        let d = b.block_diagonal(2);
        assert_eq!((d.nrows(), d.ncols(), d.nnz()), (6, 4, 8));
        assert_eq!(d.get(4, 2), 3.0);
    }

    #[test]
    fn lu_solves_pivoting_system() {
        let rows = vec![vec![0.0f64, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let lu = DenseLu::factor_rows(&rows).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-14);
        }
        assert!(DenseLu::factor_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }

    #[test]
    fn symmetric_permutation() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, 5.0), (2, 0, 7.0), (1, 1, 1.0)]);
        let b = a.permute_symmetric(&[2, 0, 1]);
        // b[i][j] = a[perm i][perm j]
        assert_eq!(b.get(0, 1), 7.0);
        assert_eq!(b.get(1, 2), 5.0);
        assert_eq!(b.get(2, 2), 1.0);
    }
}
