//! Compressed-row complex sparse matrices.
//!
//! Every operator in the crate (fields, second quantizations, processes,
//! integrals) is a [`SparseOperator`]. Operators are immutable once assembled;
//! arithmetic returns new operators.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::linalg;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl SparseOperator {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(diag.len(), diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, C64::new(v, 0.0))),
        )
    }

    /// Assembles from `(row, col, value)` triplets. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "entry ({r}, {c}) outside {nrows}x{ncols}");
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != ZERO {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    /// Converts a dense matrix, dropping entries with modulus `<= drop_tol`.
    pub fn from_dense(m: &DMatrix<C64>, drop_tol: f64) -> Self {
        let trip = (0..m.nrows()).flat_map(|r| {
            (0..m.ncols()).filter_map(move |c| {
                let v = m[(r, c)];
                (v.norm() > drop_tol).then_some((r, c, v))
            })
        });
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => ZERO,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols, "vector length does not match operator");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn scaled(&self, s: C64) -> Self {
        if s == ZERO {
            return Self::zeros(self.nrows, self.ncols);
        }
        Self { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn scaled_real(&self, s: f64) -> Self {
        self.scaled(C64::new(s, 0.0))
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &Self, s: C64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sum");
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().chain(other.iter().map(|(r, c, v)| (r, c, v * s))),
        )
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ in product");
        let mut acc = vec![ZERO; other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut cols_seen = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.nrows {
            let (acols, avals) = self.row(r);
            for (&k, &a) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k);
                for (&c, &b) in bcols.iter().zip(bvals) {
                    if !touched[c] {
                        touched[c] = true;
                        cols_seen.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols_seen.sort_unstable();
            for &c in &cols_seen {
                if acc[c] != ZERO {
                    indices.push(c);
                    values.push(acc[c]);
                }
                acc[c] = ZERO;
                touched[c] = false;
            }
            cols_seen.clear();
            indptr.push(indices.len());
        }
        Self { nrows: self.nrows, ncols: other.ncols, indptr, indices, values }
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// `{self, other} = self·other + other·self`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        &self.matmul(other) + &other.matmul(self)
    }

    /// Kronecker product `self ⊗ other`; row index is `i·other.nrows + k`.
    pub fn kron(&self, other: &Self) -> Self {
        let trip = self.iter().flat_map(|(r, c, v)| {
            other
                .iter()
                .map(move |(r2, c2, w)| (r * other.nrows + r2, c * other.ncols + c2, v * w))
        });
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, trip)
    }

    /// Ampliation `1_{initial} ⊗ self` onto an initial space of dimension `initial`.
    pub fn ampliate(&self, initial: usize) -> Self {
        if initial == 1 {
            return self.clone();
        }
        SparseOperator::identity(initial).kron(self)
    }

    /// Submatrix on the given rows and columns (in the given order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_pos = vec![usize::MAX; self.ncols];
        for (i, &c) in cols.iter().enumerate() {
            col_pos[c] = i;
        }
        let trip = rows.iter().enumerate().flat_map(|(ri, &r)| {
            let (cs, vs) = self.row(r);
            let col_pos = &col_pos;
            cs.iter().zip(vs).filter_map(move |(&c, &v)| {
                let p = col_pos[c];
                (p != usize::MAX).then_some((ri, p, v))
            })
        });
        Self::from_triplets(rows.len(), cols.len(), trip)
    }

    /// Same-index compression `P A P` onto a set of basis indices.
    pub fn compress(&self, keep: &[usize]) -> Self {
        self.restrict(keep, keep)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, ZERO);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral norm; see [`linalg::operator_norm`].
    pub fn norm(&self) -> f64 {
        linalg::operator_norm(self)
    }

    pub fn is_diagonal(&self) -> bool {
        self.iter().all(|(r, c, _)| r == c)
    }

    /// True when every row and every column holds at most one entry.
    pub(crate) fn is_monomial(&self) -> bool {
        let mut col_used = vec![false; self.ncols];
        for r in 0..self.nrows {
            let (cols, _) = self.row(r);
            if cols.len() > 1 {
                return false;
            }
            for &c in cols {
                if col_used[c] {
                    return false;
                }
                col_used[c] = true;
            }
        }
        true
    }
}

impl Add for &SparseOperator {
    type Output = SparseOperator;

    fn add(self, rhs: &SparseOperator) -> SparseOperator {
        self.add_scaled(rhs, C64::new(1.0, 0.0))
    }
}

impl Sub for &SparseOperator {
    type Output = SparseOperator;

    fn sub(self, rhs: &SparseOperator) -> SparseOperator {
        self.add_scaled(rhs, C64::new(-1.0, 0.0))
    }
}

impl Mul for &SparseOperator {
    type Output = SparseOperator;

    fn mul(self, rhs: &SparseOperator) -> SparseOperator {
        self.matmul(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn arb_op(n: usize, m: usize) -> impl Strategy<Value = SparseOperator> {
        proptest::collection::vec((0..n, 0..m, -2.0..2.0f64, -2.0..2.0f64), 0..12).prop_map(move |t| {
            SparseOperator::from_triplets(n, m, t.into_iter().map(|(r, c, a, b)| (r, c, C64::new(a, b))))
        })
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = SparseOperator::from_triplets(2, 2, [(0, 1, c(1.0, 0.0)), (0, 1, c(2.0, 0.0)), (1, 0, c(1.0, 0.0)), (1, 0, c(-1.0, 0.0))]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 1), c(3.0, 0.0));
        assert_eq!(a.get(1, 0), ZERO);
    }

    #[test]
    fn restrict_and_kron() {
        let a = SparseOperator::from_triplets(3, 3, [(0, 0, c(1.0, 0.0)), (1, 2, c(2.0, 0.0)), (2, 1, c(0.0, 3.0))]);
        let r = a.restrict(&[1, 2], &[2, 1]);
        assert_eq!(r.get(0, 0), c(2.0, 0.0));
        assert_eq!(r.get(1, 1), c(0.0, 3.0));
        let k = SparseOperator::identity(2).kron(&a);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k.get(4, 5), c(2.0, 0.0));
        assert_eq!(k.get(1, 2), c(2.0, 0.0));
    }

    proptest! {
        #[test]
        fn products_and_adjoints_match_dense(a in arb_op(4, 3), b in arb_op(3, 5)) {
            let prod = a.matmul(&b).to_dense();
            let dense = a.to_dense() * b.to_dense();
            prop_assert!((prod - dense).iter().all(|z| z.norm() < 1e-12));
            prop_assert_eq!(a.adjoint().to_dense(), a.to_dense().adjoint());
            prop_assert_eq!(a.adjoint().adjoint(), a);
        }

        #[test]
        fn apply_matches_dense(a in arb_op(5, 4), x in proptest::collection::vec(-1.0..1.0f64, 4)) {
            let xv: Vec<C64> = x.iter().map(|&v| C64::new(v, -v)).collect();
            let y = a.apply(&xv);
            let yd = a.to_dense() * nalgebra::DVector::from_vec(xv);
            for (u, v) in y.iter().zip(yd.iter()) {
                prop_assert!((u - v).norm() < 1e-12);
            }
        }
    }
}
