//! Dense helpers: operator norms, permanents, one-particle matrix functions,
//! and seeded random one-particle data.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Largest dimension for which norms are computed exactly by SVD.
pub const EXACT_NORM_MAX_DIM: usize = 512;
/// Power-iteration budget on the Gram operator above [`EXACT_NORM_MAX_DIM`].
pub const POWER_ITERATIONS: usize = 20;
pub const POWER_RTOL: f64 = 1e-6;
/// Largest matrix accepted by [`permanent`].
pub const PERMANENT_CAP: usize = 12;

/// Spectral norm of a sparse operator.
///
/// Exact (singular values) up to [`EXACT_NORM_MAX_DIM`]; beyond that, power
/// iteration on `A†A`. Monomial matrices (at most one entry per row and
/// column, which covers diagonals and partial permutations) are handled
/// exactly at any size.
pub fn operator_norm(a: &SparseOperator) -> f64 {
    if a.nnz() == 0 {
        return 0.0;
    }
    if a.is_monomial() {
        return a.max_abs();
    }
    if a.nrows().max(a.ncols()) <= EXACT_NORM_MAX_DIM {
        let svd = a.to_dense().svd(false, false);
        return svd.singular_values.iter().cloned().fold(0.0, f64::max);
    }
    power_norm(a)
}

fn power_norm(a: &SparseOperator) -> f64 {
    let adj = a.adjoint();
    let n = a.ncols();
    // deterministic start with no special symmetry
    let mut v: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 + 0.37 * ((i as f64) * 0.7).sin(), 0.11 * ((i as f64) * 1.3).cos()))
        .collect();
    normalize(&mut v);
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let av = a.apply(&v);
        let norm_av = vec_norm(&av);
        if norm_av == 0.0 {
            return estimate;
        }
        let mut w = adj.apply(&av);
        let next = norm_av;
        if normalize(&mut w) == 0.0 {
            return next;
        }
        v = w;
        let converged = (next - estimate).abs() <= POWER_RTOL * next;
        estimate = next;
        if converged {
            break;
        }
    }
    vec_norm(&a.apply(&v)).max(estimate)
}

pub(crate) fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = vec_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
    n
}

/// Matrix permanent by Ryser's inclusion–exclusion formula, visiting column
/// subsets in Gray-code order so each step updates the row sums by one column.
pub fn permanent(a: &DMatrix<C64>) -> Result<C64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch { expected: n, got: a.ncols() });
    }
    if n > PERMANENT_CAP {
        return Err(Error::SizeOverflow { size: n, cap: PERMANENT_CAP });
    }
    Ok(permanent_unchecked(a))
}

pub(crate) fn permanent_unchecked(a: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    match n {
        0 => return C64::new(1.0, 0.0),
        1 => return a[(0, 0)],
        2 => return a[(0, 0)] * a[(1, 1)] + a[(0, 1)] * a[(1, 0)],
        _ => {}
    }
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut in_set = vec![false; n];
    let mut total = C64::new(0.0, 0.0);
    let mut size = 0usize;
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        let sign = if in_set[j] { -1.0 } else { 1.0 };
        in_set[j] = !in_set[j];
        if in_set[j] {
            size += 1;
        } else {
            size -= 1;
        }
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += a[(i, j)] * sign;
        }
        let prod: C64 = row_sums.iter().product();
        if size % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}

/// `exp(i t H)` for Hermitian `H`, through its eigendecomposition.
pub fn hermitian_exp(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(0.0, l * t).exp()));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n).map(|_| random_complex(rng)).collect()
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |_, _| random_complex(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let a = random_matrix(rng, n);
    (&a + a.adjoint()).scale(0.5)
}

/// A unitary from the QR factorization of a random matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<C64> {
    random_matrix(rng, n).qr().q()
}

/// Largest entry modulus of a dense difference.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Permanent by summing over all permutations.
    fn permanent_brute(a: &DMatrix<C64>) -> C64 {
        let n = a.nrows();
        (0..n)
            .permutations(n)
            .map(|p| p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product::<C64>())
            .sum()
    }

    #[test]
    fn small_permanents() {
        let ones = DMatrix::from_element(2, 2, c(1.0));
        assert_eq!(permanent(&ones).unwrap(), c(2.0));
        let id = DMatrix::<C64>::identity(3, 3);
        assert_eq!(permanent(&id).unwrap(), c(1.0));
        let (a, b, cc, d) = (C64::new(1.0, 2.0), c(3.0), C64::new(0.0, -1.0), c(5.0));
        let m = DMatrix::from_row_slice(2, 2, &[a, b, cc, d]);
        assert_eq!(permanent(&m).unwrap(), a * d + b * cc);
        assert_eq!(permanent(&DMatrix::<C64>::zeros(0, 0)).unwrap(), c(1.0));
        let big = DMatrix::<C64>::identity(13, 13);
        assert!(matches!(permanent(&big), Err(Error::SizeOverflow { .. })));
    }

    #[test]
    fn ryser_matches_permutation_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            let a = random_matrix(&mut rng, n);
            let diff = (permanent(&a).unwrap() - permanent_brute(&a)).norm();
            assert!(diff < 1e-12, "n={n} diff={diff}");
        }
    }

    #[test]
    fn norms_exact_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = random_matrix(&mut rng, 6);
        let op = SparseOperator::from_dense(&dense, 0.0);
        let exact = dense.svd(false, false).singular_values.max();
        assert!((operator_norm(&op) - exact).abs() < 1e-12);
        let approx = power_norm(&op);
        assert!(approx <= exact * (1.0 + 1e-12));
        assert!(approx > 0.9 * exact);

        let diag = SparseOperator::real_diagonal(&[0.5, -3.0, 2.0]);
        assert_eq!(operator_norm(&diag), 3.0);
        assert_eq!(operator_norm(&SparseOperator::zeros(4, 4)), 0.0);
    }

    #[test]
    fn large_diagonal_dominant_uses_power_iteration() {
        let n = EXACT_NORM_MAX_DIM + 10;
        let trip = (0..n).map(|i| (i, i, c(if i == 3 { 2.0 } else { 1.0 })))
            .chain((0..n - 1).map(|i| (i, i + 1, c(1e-3))));
        let op = SparseOperator::from_triplets(n, n, trip);
        let est = operator_norm(&op);
        assert!((est - 2.0).abs() < 1e-2, "{est}");
    }

    #[test]
    fn hermitian_exponential_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 4);
        let u = hermitian_exp(&h, 0.7);
        let id = DMatrix::<C64>::identity(4, 4);
        assert!(max_abs_diff(&(&u * u.adjoint()), &id) < 1e-12);
        let direct = (h.map(|z| z * C64::new(0.0, 0.7))).exp();
        assert!(max_abs_diff(&u, &direct) < 1e-10);
    }
}
