use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::basis::FockBasis;
use crate::error::{Error, Result};
use crate::grid::OneParticleVector;
use crate::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Creation,
    Annihilation,
}

/// Field operator `B±(φ)` (Bose) or `F±(φ)` (Fermi) on a truncated basis.
///
/// Creation is linear in `φ`, annihilation antilinear, and the annihilator is
/// the exact adjoint of the creator.
pub fn field_operator(basis: &FockBasis, kind: FieldKind, phi: &OneParticleVector) -> Result<SparseOperator> {
    field_from_coeffs(basis, kind, phi.coeffs())
}

/// [`field_operator`] on raw mode coefficients.
pub fn field_from_coeffs(basis: &FockBasis, kind: FieldKind, phi: &[C64]) -> Result<SparseOperator> {
    if phi.len() != basis.modes() {
        return Err(Error::DimMismatch { expected: basis.modes(), got: phi.len() });
    }
    let dim = basis.dim();
    let mut trip = Vec::new();
    let mut scratch = vec![0u16; basis.modes()];
    for col in 0..dim {
        for (m, &c) in phi.iter().enumerate() {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            scratch.copy_from_slice(basis.label(col));
            if let Some(amp) = basis.create_in_place(&mut scratch, m) {
                let row = basis.index_of(&scratch).expect("created label lies in the basis");
                match kind {
                    FieldKind::Creation => trip.push((row, col, c * amp)),
                    FieldKind::Annihilation => trip.push((col, row, c.conj() * amp)),
                }
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, dim, trip))
}

/// Single-mode creator `b⁺_m` (or `f⁺_m`).
pub fn mode_creation(basis: &FockBasis, m: usize) -> SparseOperator {
    let mut e = vec![C64::new(0.0, 0.0); basis.modes()];
    e[m] = C64::new(1.0, 0.0);
    field_from_coeffs(basis, FieldKind::Creation, &e).expect("unit vector has the right length")
}

pub fn mode_annihilation(basis: &FockBasis, m: usize) -> SparseOperator {
    mode_creation(basis, m).adjoint()
}
