use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::basis::{FockBasis, FockVector, Statistics};
use crate::error::{Error, Result};
use crate::grid::OneParticleVector;

/// Exponential vector `ε(φ) = ⊕ φ^{⊗n}/√n!`, truncated at the basis cutoff.
pub fn exponential_vector(basis: &Arc<FockBasis>, phi: &OneParticleVector) -> Result<FockVector> {
    exponential_from_coeffs(basis, phi.coeffs(), basis.truncation())
}

/// `ε(φ)` with every grade above `max_grade` removed.
pub fn exponential_from_coeffs(basis: &Arc<FockBasis>, phi: &[C64], max_grade: usize) -> Result<FockVector> {
    if basis.statistics() != Statistics::Bose {
        return Err(Error::StatisticsMismatch { expected: "bose" });
    }
    if phi.len() != basis.modes() {
        return Err(Error::DimMismatch { expected: basis.modes(), got: phi.len() });
    }
    let end = basis.up_to_grade(max_grade).len();
    let coeffs = (0..basis.dim())
        .map(|i| {
            if i >= end {
                return C64::new(0.0, 0.0);
            }
            basis
                .label(i)
                .iter()
                .zip(phi)
                .filter(|(&n, _)| n > 0)
                .map(|(&n, &c)| {
                    let fact: f64 = (1..=n).map(f64::from).product();
                    c.powu(n as u32) / fact.sqrt()
                })
                .product()
        })
        .collect();
    FockVector::new(basis, coeffs)
}

/// Partial exponential sum `Σ_{n ≤ k} zⁿ/n!`.
pub fn partial_exp(z: C64, k: usize) -> C64 {
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    for n in 1..=k {
        term *= z / n as f64;
        sum += term;
    }
    sum
}

/// Lagrange tail bound `|z|^{k+1} e^{|z|} / (k+1)!` for `|e^z − Σ_{n≤k} zⁿ/n!|`.
pub fn exp_tail_bound(z: C64, k: usize) -> f64 {
    let r = z.norm();
    let fact: f64 = (1..=k as u64 + 1).map(|x| x as f64).product();
    r.powi(k as i32 + 1) * r.exp() / fact
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn single_mode_components() {
        let b = Arc::new(FockBasis::new(Statistics::Bose, 1, 2).unwrap());
        let e = exponential_from_coeffs(&b, &[c(1.0)], 2).unwrap();
        let expected = [1.0, 1.0, 1.0 / 2f64.sqrt()];
        for (z, x) in e.coeffs().iter().zip(expected) {
            assert!((z - c(x)).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_argument_is_vacuum() {
        let g = Arc::new(SpectralGrid::uniform(1.0, 3, 1).unwrap());
        let b = Arc::new(FockBasis::new(Statistics::Bose, 3, 3).unwrap());
        let e = exponential_vector(&b, &OneParticleVector::zeros(&g)).unwrap();
        assert_eq!(e, FockVector::vacuum(&b));
    }

    #[test]
    fn fermi_rejected() {
        let b = Arc::new(FockBasis::new(Statistics::Fermi, 2, 2).unwrap());
        assert!(matches!(exponential_from_coeffs(&b, &[c(1.0), c(0.0)], 2), Err(Error::StatisticsMismatch { .. })));
    }

    #[test]
    fn partial_sum_example() {
        let b = Arc::new(FockBasis::new(Statistics::Bose, 2, 2).unwrap());
        // <f|g> = 0.1
        let f = [c(1.0), c(0.0)];
        let g = [c(0.1), c(3.0)];
        let ef = exponential_from_coeffs(&b, &f, 2).unwrap();
        let eg = exponential_from_coeffs(&b, &g, 2).unwrap();
        let ip = ef.inner(&eg);
        assert!((ip - c(1.105)).norm() < 1e-14);
        assert!((c(0.1f64.exp()) - ip).norm() <= exp_tail_bound(c(0.1), 2));
    }
}
