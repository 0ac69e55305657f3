use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::basis::{FockBasis, Statistics};
use crate::error::{Error, Result};
use crate::linalg::{permanent, PERMANENT_CAP};
use crate::sparse::SparseOperator;

fn check_square(basis: &FockBasis, u: &DMatrix<C64>) -> Result<()> {
    let d = basis.modes();
    if u.nrows() != d {
        return Err(Error::DimMismatch { expected: d, got: u.nrows() });
    }
    if u.ncols() != d {
        return Err(Error::DimMismatch { expected: d, got: u.ncols() });
    }
    Ok(())
}

fn factorial_product(label: &[u16]) -> f64 {
    label.iter().map(|&n| (1..=n as u64).product::<u64>() as f64).product()
}

/// `Γ±(U)`: grade-preserving, with permanent (Bose) or determinant (Fermi)
/// matrix elements of the mode-selected submatrix of `U`.
pub fn second_quantize(basis: &FockBasis, u: &DMatrix<C64>) -> Result<SparseOperator> {
    check_square(basis, u)?;
    if basis.statistics() == Statistics::Bose && basis.max_grade() > PERMANENT_CAP {
        return Err(Error::SizeOverflow { size: basis.max_grade(), cap: PERMANENT_CAP });
    }
    let dim = basis.dim();
    let mut trip = Vec::new();
    let lists: Vec<Vec<usize>> = (0..dim).map(|i| basis.mode_list(i)).collect();
    for n in 0..=basis.max_grade() {
        let range = basis.grade_range(n);
        for row in range.clone() {
            let r = &lists[row];
            for col in range.clone() {
                let c = &lists[col];
                let sub = DMatrix::from_fn(n, n, |i, j| u[(r[i], c[j])]);
                if (0..n).any(|i| sub.row(i).iter().all(|z| *z == C64::new(0.0, 0.0))) {
                    continue;
                }
                let value = match basis.statistics() {
                    Statistics::Bose => {
                        let norm = (factorial_product(basis.label(row)) * factorial_product(basis.label(col))).sqrt();
                        permanent(&sub)? / norm
                    }
                    Statistics::Fermi if n == 0 => C64::new(1.0, 0.0),
                    Statistics::Fermi => sub.determinant(),
                };
                trip.push((row, col, value));
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, dim, trip))
}

/// `up·down` for two single-mode amplitudes (each `±√k`), formed as one square
/// root so diagonal counts stay exact integers.
fn pair_amplitude(up: f64, down: f64) -> f64 {
    let mag = ((up * up).round() * (down * down).round()).sqrt();
    mag * (up * down).signum()
}

/// `γ±(H) = Σ_{pq} H_pq a⁺_p a⁻_q`, the one-body lift of `H`.
pub fn diff_second_quantize(basis: &FockBasis, h: &DMatrix<C64>) -> Result<SparseOperator> {
    check_square(basis, h)?;
    let d = basis.modes();
    let dim = basis.dim();
    let mut trip = Vec::new();
    let mut mid = vec![0u16; d];
    let mut out = vec![0u16; d];
    for col in 0..dim {
        for q in 0..d {
            mid.copy_from_slice(basis.label(col));
            let Some(down) = basis.annihilate_in_place(&mut mid, q) else { continue };
            for p in 0..d {
                let hpq = h[(p, q)];
                if hpq == C64::new(0.0, 0.0) {
                    continue;
                }
                out.copy_from_slice(&mid);
                if let Some(up) = basis.create_in_place(&mut out, p) {
                    let row = basis.index_of(&out).expect("label lies in the basis");
                    trip.push((row, col, hpq * pair_amplitude(up, down)));
                }
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, dim, trip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fields::{field_from_coeffs, FieldKind};
    use crate::linalg::{hermitian_exp, random_hermitian, random_unitary, random_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn swap2() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    #[test]
    fn identity_and_swap() {
        let b = FockBasis::new(Statistics::Bose, 2, 3).unwrap();
        let id = second_quantize(&b, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id, SparseOperator::identity(b.dim()));
        let g = second_quantize(&b, &swap2()).unwrap();
        for i in 0..b.dim() {
            let l = b.label(i);
            let j = b.index_of(&[l[1], l[0]]).unwrap();
            assert!((g.get(j, i) - c(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn fermi_top_element_is_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(&mut rng, 2);
        let b = FockBasis::new(Statistics::Fermi, 2, 2).unwrap();
        let g = second_quantize(&b, &u).unwrap();
        assert!((g.get(3, 3) - u.determinant()).norm() < 1e-14);
    }

    #[test]
    fn number_operator_from_identity() {
        let b = FockBasis::new(Statistics::Bose, 2, 3).unwrap();
        let n = diff_second_quantize(&b, &DMatrix::identity(2, 2)).unwrap();
        let i = b.index_of(&[2, 1]).unwrap();
        assert_eq!(n.get(i, i), c(3.0));
        assert_eq!(n, b.number_operator());
    }

    #[test]
    fn multiplicative_and_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for stat in [Statistics::Bose, Statistics::Fermi] {
            let b = FockBasis::new(stat, 3, 2).unwrap();
            let u = random_unitary(&mut rng, 3);
            let v = crate::linalg::random_matrix(&mut rng, 3);
            let lhs = second_quantize(&b, &(&u * &v)).unwrap();
            let rhs = second_quantize(&b, &u).unwrap().matmul(&second_quantize(&b, &v).unwrap());
            assert!((&lhs - &rhs).norm() < 1e-12);

            let h = random_hermitian(&mut rng, 3);
            let gamma = diff_second_quantize(&b, &h).unwrap().to_dense();
            let lifted = second_quantize(&b, &hermitian_exp(&h, 0.7)).unwrap().to_dense();
            let direct = gamma.map(|z| z * C64::new(0.0, 0.7)).exp();
            assert!(crate::linalg::max_abs_diff(&lifted, &direct) < 1e-10);
        }
    }

    #[test]
    fn rank_one_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = FockBasis::new(Statistics::Bose, 4, 3).unwrap();
        let f = random_vector(&mut rng, 4);
        let g = random_vector(&mut rng, 4);
        let rank_one = DMatrix::from_fn(4, 4, |p, q| f[p] * g[q].conj());
        let gamma = diff_second_quantize(&b, &rank_one).unwrap();
        let prod = field_from_coeffs(&b, FieldKind::Creation, &f)
            .unwrap()
            .matmul(&field_from_coeffs(&b, FieldKind::Annihilation, &g).unwrap());
        assert!((&gamma - &prod).max_abs() < 1e-14);
    }
}
