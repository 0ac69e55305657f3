use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Default cap on the dimension of an enumerated Fock basis.
pub const DEFAULT_DIM_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Bose,
    Fermi,
}

impl Statistics {
    pub fn name(self) -> &'static str {
        match self {
            Statistics::Bose => "bose",
            Statistics::Fermi => "fermi",
        }
    }
}

/// Occupation-number basis of a truncated Bose or Fermi Fock space.
///
/// Labels are occupation vectors (`0/1` entries for Fermi). Ordering is graded
/// by particle number and lexicographic in the sorted list of occupied modes
/// within each grade, so for two Bose modes and `M = 2` the order is
/// `(0,0) (1,0) (0,1) (2,0) (1,1) (0,2)`.
#[derive(Clone, Debug)]
pub struct FockBasis {
    statistics: Statistics,
    modes: usize,
    truncation: usize,
    labels: Vec<Box<[u16]>>,
    grade_offsets: Vec<usize>,
    index: HashMap<Box<[u16]>, usize>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.statistics == other.statistics
            && self.modes == other.modes
            && self.truncation == other.truncation
    }
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Number of basis states in grade `n`.
pub fn grade_dimension(statistics: Statistics, modes: usize, n: usize) -> Option<usize> {
    match statistics {
        Statistics::Bose if modes == 0 => Some(usize::from(n == 0)),
        Statistics::Bose => binomial(modes + n - 1, n),
        Statistics::Fermi => binomial(modes, n),
    }
}

/// Total dimension of the truncated space, `None` on overflow.
pub fn fock_dimension(statistics: Statistics, modes: usize, truncation: usize) -> Option<usize> {
    let top = max_grade(statistics, modes, truncation);
    (0..=top).try_fold(0usize, |acc, n| acc.checked_add(grade_dimension(statistics, modes, n)?))
}

fn max_grade(statistics: Statistics, modes: usize, truncation: usize) -> usize {
    match statistics {
        Statistics::Bose => truncation,
        Statistics::Fermi => truncation.min(modes),
    }
}

impl FockBasis {
    /// Enumerates the basis with the default dimension cap.
    pub fn new(statistics: Statistics, modes: usize, truncation: usize) -> Result<Self> {
        Self::with_cap(statistics, modes, truncation, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(statistics: Statistics, modes: usize, truncation: usize, cap: usize) -> Result<Self> {
        let dim = fock_dimension(statistics, modes, truncation)
            .ok_or(Error::SizeOverflow { size: usize::MAX, cap })?;
        if dim > cap || truncation > u16::MAX as usize {
            return Err(Error::SizeOverflow { size: dim, cap });
        }
        let top = max_grade(statistics, modes, truncation);
        let mut labels = Vec::with_capacity(dim);
        let mut grade_offsets = Vec::with_capacity(top + 2);
        for n in 0..=top {
            grade_offsets.push(labels.len());
            let to_label = |occupied: Vec<usize>| {
                let mut occ = vec![0u16; modes];
                for m in occupied {
                    occ[m] += 1;
                }
                occ.into_boxed_slice()
            };
            match statistics {
                Statistics::Bose => labels.extend((0..modes).combinations_with_replacement(n).map(to_label)),
                Statistics::Fermi => labels.extend((0..modes).combinations(n).map(to_label)),
            }
            if n == 0 && labels.is_empty() {
                labels.push(vec![0u16; modes].into_boxed_slice());
            }
        }
        grade_offsets.push(labels.len());
        debug_assert_eq!(labels.len(), dim);
        let index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        Ok(Self { statistics, modes, truncation, labels, grade_offsets, index })
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Highest grade present (`M`, or `min(M, D)` for Fermi).
    pub fn max_grade(&self) -> usize {
        self.grade_offsets.len() - 2
    }

    pub fn label(&self, i: usize) -> &[u16] {
        &self.labels[i]
    }

    pub fn labels(&self) -> impl Iterator<Item = &[u16]> {
        self.labels.iter().map(|l| &**l)
    }

    pub fn index_of(&self, label: &[u16]) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn grade(&self, i: usize) -> usize {
        self.grade_offsets.partition_point(|&o| o <= i) - 1
    }

    pub fn grade_range(&self, n: usize) -> std::ops::Range<usize> {
        if n > self.max_grade() {
            return self.dim()..self.dim();
        }
        self.grade_offsets[n]..self.grade_offsets[n + 1]
    }

    /// Indices of all states with at most `k` particles.
    pub fn up_to_grade(&self, k: usize) -> Vec<usize> {
        (0..self.grade_offsets[(k + 1).min(self.max_grade() + 1)]).collect()
    }

    /// Occupied modes with multiplicity, ascending.
    pub fn mode_list(&self, i: usize) -> Vec<usize> {
        self.labels[i]
            .iter()
            .enumerate()
            .flat_map(|(m, &n)| std::iter::repeat_n(m, n as usize))
            .collect()
    }

    /// Applies the truncated creator of mode `m` to a label in place.
    /// Returns the amplitude, or `None` when the result vanishes.
    pub(crate) fn create_in_place(&self, label: &mut [u16], m: usize) -> Option<f64> {
        let total: usize = label.iter().map(|&n| n as usize).sum();
        if total >= self.truncation {
            return None;
        }
        match self.statistics {
            Statistics::Bose => {
                label[m] += 1;
                Some((label[m] as f64).sqrt())
            }
            Statistics::Fermi => {
                if label[m] != 0 {
                    return None;
                }
                let before: u32 = label[..m].iter().map(|&n| n as u32).sum();
                label[m] = 1;
                Some(if before.is_multiple_of(2) { 1.0 } else { -1.0 })
            }
        }
    }

    /// Applies the annihilator of mode `m` to a label in place.
    pub(crate) fn annihilate_in_place(&self, label: &mut [u16], m: usize) -> Option<f64> {
        if label[m] == 0 {
            return None;
        }
        match self.statistics {
            Statistics::Bose => {
                let amp = (label[m] as f64).sqrt();
                label[m] -= 1;
                Some(amp)
            }
            Statistics::Fermi => {
                let before: u32 = label[..m].iter().map(|&n| n as u32).sum();
                label[m] = 0;
                Some(if before.is_multiple_of(2) { 1.0 } else { -1.0 })
            }
        }
    }

    /// Diagonal operator with entry `f(label)`.
    pub fn diagonal_operator<F>(&self, f: F) -> SparseOperator
    where
        F: Fn(&[u16]) -> f64,
    {
        let diag: Vec<C64> = self.labels.iter().map(|l| C64::new(f(l), 0.0)).collect();
        SparseOperator::diagonal(&diag)
    }

    /// Total number operator.
    pub fn number_operator(&self) -> SparseOperator {
        self.diagonal_operator(|l| l.iter().map(|&n| n as f64).sum())
    }
}

/// A vector in a truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    basis: Arc<FockBasis>,
    coeffs: Vec<C64>,
}

impl FockVector {
    pub fn new(basis: &Arc<FockBasis>, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::DimMismatch { expected: basis.dim(), got: coeffs.len() });
        }
        Ok(Self { basis: basis.clone(), coeffs })
    }

    /// The Fock vacuum `Φ = (1, 0, 0, …)`.
    pub fn vacuum(basis: &Arc<FockBasis>) -> Self {
        Self::basis_state(basis, 0)
    }

    pub fn basis_state(basis: &Arc<FockBasis>, i: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); basis.dim()];
        coeffs[i] = C64::new(1.0, 0.0);
        Self { basis: basis.clone(), coeffs }
    }

    pub fn from_label(basis: &Arc<FockBasis>, label: &[u16]) -> Option<Self> {
        basis.index_of(label).map(|i| Self::basis_state(basis, i))
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn inner(&self, other: &Self) -> C64 {
        crate::grid::dot(&self.coeffs, &other.coeffs)
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::vec_norm(&self.coeffs)
    }

    pub fn apply(&self, op: &SparseOperator) -> Self {
        Self { basis: self.basis.clone(), coeffs: op.apply(&self.coeffs) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Self { basis: self.basis.clone(), coeffs }
    }

    /// Keeps only the components with at most `k` particles.
    pub fn truncated(&self, k: usize) -> Self {
        let end = self.basis.up_to_grade(k).len();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| if i < end { c } else { C64::new(0.0, 0.0) })
            .collect();
        Self { basis: self.basis.clone(), coeffs }
    }

    /// Component of grade exactly `n`.
    pub fn grade_component(&self, n: usize) -> Self {
        let r = self.basis.grade_range(n);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| if r.contains(&i) { c } else { C64::new(0.0, 0.0) })
            .collect();
        Self { basis: self.basis.clone(), coeffs }
    }
}
