use num_complex::Complex64 as C64;

use super::basis::{FockBasis, Statistics};
use super::fields::mode_creation;
use crate::error::Result;
use crate::grid::SpectralGrid;
use crate::sparse::SparseOperator;

/// Basis bijection `Γ(k_low ⊕ k_high) → Γ(k_low) ⊗ Γ(k_high)` for a cut in the
/// global mode order.
///
/// Both factors keep the full truncation, so the map is an isometry onto the
/// tensor states whose total particle number is within the cutoff.
#[derive(Clone, Debug)]
pub struct SplitIsomorphism {
    cut: usize,
    low: FockBasis,
    high: FockBasis,
    map: SparseOperator,
}

impl SplitIsomorphism {
    /// Splits after the first `cut` modes.
    pub fn at_mode(basis: &FockBasis, cut: usize) -> Result<Self> {
        let stat = basis.statistics();
        let low = FockBasis::new(stat, cut, basis.truncation())?;
        let high = FockBasis::new(stat, basis.modes() - cut, basis.truncation())?;
        let trip = (0..basis.dim()).map(|i| {
            let label = basis.label(i);
            let a = low.index_of(&label[..cut]).expect("low part within truncation");
            let b = high.index_of(&label[cut..]).expect("high part within truncation");
            (a * high.dim() + b, i, C64::new(1.0, 0.0))
        });
        let map = SparseOperator::from_triplets(low.dim() * high.dim(), basis.dim(), trip);
        Ok(Self { cut, low, high, map })
    }

    /// Splits at the aligned frequency `omega`.
    pub fn at_frequency(grid: &SpectralGrid, basis: &FockBasis, omega: f64) -> Result<Self> {
        Self::at_mode(basis, grid.modes_below(omega)?.end)
    }

    pub fn low(&self) -> &FockBasis {
        &self.low
    }

    pub fn high(&self) -> &FockBasis {
        &self.high
    }

    pub fn map(&self) -> &SparseOperator {
        &self.map
    }

    /// Image of the creator of mode `m` on the tensor side: `f⁺ ⊗ 1` below the
    /// cut, `1 ⊗ b⁺` (Bose) or `(−1)^{N_low} ⊗ f⁺` (Fermi) above it.
    pub fn tensor_creation(&self, m: usize) -> SparseOperator {
        if m < self.cut {
            mode_creation(&self.low, m).kron(&SparseOperator::identity(self.high.dim()))
        } else {
            let left = match self.low.statistics() {
                Statistics::Bose => SparseOperator::identity(self.low.dim()),
                Statistics::Fermi => self.low.diagonal_operator(|l| {
                    if l.iter().map(|&n| n as u32).sum::<u32>() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }),
            };
            left.kron(&mode_creation(&self.high, m - self.cut))
        }
    }

    /// `V† T V`: a tensor-side operator pulled back to the full space.
    pub fn pull_back(&self, tensor_op: &SparseOperator) -> SparseOperator {
        self.map.adjoint().matmul(tensor_op).matmul(&self.map)
    }
}

/// Largest norm of `a_full − V†(a_tensor)V` over every creator and
/// annihilator of the full space.
pub fn split_intertwining_defect(grid: &SpectralGrid, basis: &FockBasis, omega: f64) -> Result<f64> {
    let split = SplitIsomorphism::at_frequency(grid, basis, omega)?;
    let mut worst: f64 = 0.0;
    for m in 0..basis.modes() {
        let full = mode_creation(basis, m);
        let pulled = split.pull_back(&split.tensor_creation(m));
        worst = worst.max((&full - &pulled).norm());
        let pulled_down = split.pull_back(&split.tensor_creation(m).adjoint());
        worst = worst.max((&full.adjoint() - &pulled_down).norm());
    }
    Ok(worst)
}
