//! Frequency-indexed processes on the truncated Bose space: `B±_φ(Ω)`, the
//! counter `Λ(Ω)`, the parity `J_Ω = (−1)^{Λ(Ω)}`, and the discrete
//! Jordan–Wigner fields `F±_φ(Ω)`.
//!
//! Cuts `Ω` are bin edges. The Jordan–Wigner prefix runs over the global mode
//! order, so modes sharing a bin are ordered by internal index.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{field_from_coeffs, mode_creation, FieldKind, FockBasis, Statistics};
use crate::grid::{OneParticleVector, SpectralGrid};
use crate::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Create,
    Annihilate,
    Conserve,
}

/// A process family `Ω ↦ X(Ω)` on `Γ₊`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProcessFamily {
    Creation(OneParticleVector),
    Annihilation(OneParticleVector),
    Conservation,
    Parity,
    FermiCreation(OneParticleVector),
    FermiAnnihilation(OneParticleVector),
}

/// Norms returned by [`SpectralProcesses::car_defect`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CarDefect {
    /// `‖{F⁻_φ, F⁺_ψ} − ⟨Π φ|ψ⟩‖` on grades `≤ M−1`.
    pub anticommutator: f64,
    /// `‖F⁺_φ F⁺_φ‖` on inputs of grade `≤ M−2` (whose image is untruncated).
    pub square: f64,
    /// `max(‖{J, F⁺_φ}‖, ‖{J, F⁻_φ}‖)`, uncompressed.
    pub parity: f64,
}

fn parity_sign(count: u32) -> f64 {
    if count.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Process construction over a grid and a Bose basis on its modes.
#[derive(Clone, Debug)]
pub struct SpectralProcesses {
    grid: Arc<SpectralGrid>,
    basis: Arc<FockBasis>,
}

impl SpectralProcesses {
    pub fn new(grid: &Arc<SpectralGrid>, basis: &Arc<FockBasis>) -> Result<Self> {
        if basis.statistics() != Statistics::Bose {
            return Err(Error::StatisticsMismatch { expected: "bose" });
        }
        if basis.modes() != grid.mode_count() {
            return Err(Error::DimMismatch { expected: grid.mode_count(), got: basis.modes() });
        }
        Ok(Self { grid: grid.clone(), basis: basis.clone() })
    }

    /// Grid and Bose basis with truncation `m`.
    pub fn build(grid: &Arc<SpectralGrid>, m: usize) -> Result<Self> {
        let basis = Arc::new(FockBasis::new(Statistics::Bose, grid.mode_count(), m)?);
        Self::new(grid, &basis)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn check(&self, phi: &OneParticleVector) -> Result<()> {
        if phi.len() != self.grid.mode_count() {
            return Err(Error::DimMismatch { expected: self.grid.mode_count(), got: phi.len() });
        }
        Ok(())
    }

    /// `B±(Π[0,Ω]φ)` or `Λ(Ω)`.
    pub fn spectral_process(&self, kind: ProcessKind, phi: Option<&OneParticleVector>, omega: f64) -> Result<SparseOperator> {
        let cut = self.grid.modes_below(omega)?.end;
        match (kind, phi) {
            (ProcessKind::Conserve, None) => Ok(self.counter(0..cut)),
            (ProcessKind::Create, Some(phi)) => {
                self.check(phi)?;
                field_from_coeffs(&self.basis, FieldKind::Creation, &masked(phi.coeffs(), 0..cut))
            }
            (ProcessKind::Annihilate, Some(phi)) => {
                self.check(phi)?;
                field_from_coeffs(&self.basis, FieldKind::Annihilation, &masked(phi.coeffs(), 0..cut))
            }
            (ProcessKind::Conserve, Some(_)) => {
                Err(Error::InvalidDifferential("conservation process takes no test vector".into()))
            }
            (_, None) => Err(Error::InvalidDifferential("field process needs a test vector".into())),
        }
    }

    /// Diagonal count of particles in a range of modes.
    fn counter(&self, modes: std::ops::Range<usize>) -> SparseOperator {
        self.basis.diagonal_operator(|l| l[modes.clone()].iter().map(|&n| n as f64).sum())
    }

    /// `J_Ω = (−1)^{Λ(Ω)}`.
    pub fn parity_process(&self, omega: f64) -> Result<SparseOperator> {
        let cut = self.grid.modes_below(omega)?.end;
        Ok(self.parity_of_modes(0..cut))
    }

    fn parity_of_modes(&self, modes: std::ops::Range<usize>) -> SparseOperator {
        self.basis
            .diagonal_operator(|l| parity_sign(l[modes.clone()].iter().map(|&n| n as u32).sum()))
    }

    /// `F±_φ(Ω) = Σ_{m below Ω} (−1)^{N_{<m}} φ_m b±_m`.
    pub fn fermi_spectral_process(&self, kind: FieldKind, phi: &OneParticleVector, omega: f64) -> Result<SparseOperator> {
        self.check(phi)?;
        let cut = self.grid.modes_below(omega)?.end;
        Ok(self.jordan_wigner(kind, phi.coeffs(), 0..cut))
    }

    fn jordan_wigner(&self, kind: FieldKind, phi: &[C64], modes: std::ops::Range<usize>) -> SparseOperator {
        let b = &self.basis;
        let mut trip = Vec::new();
        let mut scratch = vec![0u16; b.modes()];
        for col in 0..b.dim() {
            let label = b.label(col);
            for m in modes.clone() {
                let c = phi[m];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let sign = parity_sign(label[..m].iter().map(|&n| n as u32).sum());
                scratch.copy_from_slice(label);
                if let Some(amp) = b.create_in_place(&mut scratch, m) {
                    let row = b.index_of(&scratch).expect("created label lies in the basis");
                    match kind {
                        FieldKind::Creation => trip.push((row, col, c * (sign * amp))),
                        FieldKind::Annihilation => trip.push((col, row, c.conj() * (sign * amp))),
                    }
                }
            }
        }
        SparseOperator::from_triplets(b.dim(), b.dim(), trip)
    }

    /// `X(Ω)` for a family.
    pub fn evaluate(&self, family: &ProcessFamily, omega: f64) -> Result<SparseOperator> {
        match family {
            ProcessFamily::Creation(phi) => self.spectral_process(ProcessKind::Create, Some(phi), omega),
            ProcessFamily::Annihilation(phi) => self.spectral_process(ProcessKind::Annihilate, Some(phi), omega),
            ProcessFamily::Conservation => self.spectral_process(ProcessKind::Conserve, None, omega),
            ProcessFamily::Parity => self.parity_process(omega),
            ProcessFamily::FermiCreation(phi) => self.fermi_spectral_process(FieldKind::Creation, phi, omega),
            ProcessFamily::FermiAnnihilation(phi) => self.fermi_spectral_process(FieldKind::Annihilation, phi, omega),
        }
    }

    /// Single-bin increment `X(ω_{j+1}) − X(ω_j)`.
    pub fn increment(&self, family: &ProcessFamily, bin: usize) -> Result<SparseOperator> {
        if bin >= self.grid.bin_count() {
            return Err(Error::DimMismatch { expected: self.grid.bin_count(), got: bin });
        }
        let modes = self.grid.bin_modes(bin);
        let field = |kind, phi: &OneParticleVector| -> Result<SparseOperator> {
            self.check(phi)?;
            field_from_coeffs(&self.basis, kind, &masked(phi.coeffs(), modes.clone()))
        };
        match family {
            ProcessFamily::Creation(phi) => field(FieldKind::Creation, phi),
            ProcessFamily::Annihilation(phi) => field(FieldKind::Annihilation, phi),
            ProcessFamily::Conservation => Ok(self.counter(modes)),
            ProcessFamily::Parity => {
                let hi = self.parity_of_modes(0..modes.end);
                let lo = self.parity_of_modes(0..modes.start);
                Ok(&hi - &lo)
            }
            ProcessFamily::FermiCreation(phi) => {
                self.check(phi)?;
                Ok(self.jordan_wigner(FieldKind::Creation, phi.coeffs(), modes))
            }
            ProcessFamily::FermiAnnihilation(phi) => {
                self.check(phi)?;
                Ok(self.jordan_wigner(FieldKind::Annihilation, phi.coeffs(), modes))
            }
        }
    }

    /// Basis indices of `H₀ ⊗ Fock` whose Fock part has at most `k` particles.
    pub fn compressed_indices(&self, initial: usize, k: usize) -> Vec<usize> {
        let low = self.basis.up_to_grade(k);
        (0..initial)
            .flat_map(|u| low.iter().map(move |&i| u * self.dim() + i))
            .collect()
    }

    /// Largest norm of `[X, 1⊗b±_m]` over modes `m` above the cut, compressed
    /// to grades `≤ M−1`. Zero means `X` acts only on the part below `Ω`.
    pub fn adaptedness_defect(&self, x: &SparseOperator, initial: usize, omega: f64) -> Result<f64> {
        let cut = self.grid.modes_below(omega)?.end;
        let n = initial * self.dim();
        if x.nrows() != n || x.ncols() != n {
            return Err(Error::DimMismatch { expected: n, got: x.nrows() });
        }
        let keep = match self.basis.truncation().checked_sub(1) {
            Some(k) => self.compressed_indices(initial, k),
            None => return Ok(0.0),
        };
        let mut worst: f64 = 0.0;
        for m in cut..self.grid.mode_count() {
            let up = mode_creation(&self.basis, m).ampliate(initial);
            let down = up.adjoint();
            worst = worst.max(x.commutator(&up).compress(&keep).norm());
            worst = worst.max(x.commutator(&down).compress(&keep).norm());
        }
        Ok(worst)
    }

    /// CAR and parity defects of the Jordan–Wigner fields at cut `Ω`.
    pub fn car_defect(&self, phi: &OneParticleVector, psi: &OneParticleVector, omega: f64) -> Result<CarDefect> {
        let f_minus = self.fermi_spectral_process(FieldKind::Annihilation, phi, omega)?;
        let f_plus = self.fermi_spectral_process(FieldKind::Creation, psi, omega)?;
        let phi_plus = self.fermi_spectral_process(FieldKind::Creation, phi, omega)?;
        let overlap = phi.project_below(omega)?.inner(psi)?;
        let m = self.basis.truncation();

        let anticommutator = match m.checked_sub(1) {
            Some(k) => {
                let keep = self.basis.up_to_grade(k);
                f_minus
                    .anticommutator(&f_plus)
                    .add_scaled(&SparseOperator::identity(self.dim()), -overlap)
                    .compress(&keep)
                    .norm()
            }
            None => 0.0,
        };
        let square = match m.checked_sub(2) {
            Some(k) => {
                let cols = self.basis.up_to_grade(k);
                let rows: Vec<usize> = (0..self.dim()).collect();
                phi_plus.matmul(&phi_plus).restrict(&rows, &cols).norm()
            }
            None => 0.0,
        };
        let j = self.parity_process(omega)?;
        let parity = j.anticommutator(&phi_plus).norm().max(j.anticommutator(&f_minus).norm());
        Ok(CarDefect { anticommutator, square, parity })
    }

    /// `max_j ‖J_j − J_{j−1}(−1)^{ΔΛ_j}‖` over all bins.
    pub fn parity_recursion_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.grid.bin_count() {
            let modes = self.grid.bin_modes(j);
            let prev = self.parity_of_modes(0..modes.start);
            let next = self.parity_of_modes(0..modes.end);
            let step = self.parity_of_modes(modes);
            worst = worst.max((&next - &prev.matmul(&step)).norm());
        }
        worst
    }

    /// Differential form `ΔJ_j = −2 J_{j−1} ΔΛ_j` at bin `j`: returns the
    /// defect on states with at most one particle in the bin, and whether the
    /// full defect is supported only on states with two or more there.
    pub fn parity_differential_defect(&self, bin: usize) -> Result<(f64, bool)> {
        let delta_j = self.increment(&ProcessFamily::Parity, bin)?;
        let delta_l = self.increment(&ProcessFamily::Conservation, bin)?;
        let modes = self.grid.bin_modes(bin);
        let prev = self.parity_of_modes(0..modes.start);
        let defect = delta_j.add_scaled(&prev.matmul(&delta_l), C64::new(2.0, 0.0));
        let occupancy = |i: usize| -> u32 { self.basis.label(i)[modes.clone()].iter().map(|&n| n as u32).sum() };
        let low: Vec<usize> = (0..self.dim()).filter(|&i| occupancy(i) <= 1).collect();
        let supported_on_multi = defect.iter().all(|(r, c, _)| occupancy(r) >= 2 && occupancy(c) >= 2);
        Ok((defect.compress(&low).norm(), supported_on_multi))
    }

    /// Function calculus of the counter. Returns the defect of
    /// `Δf(Λ)_j = f(Λ_{j−1} + ΔΛ_j) − f(Λ_{j−1})` over all bins, and the defect of
    /// `[f(Λ_{j−1}+1) − f(Λ_{j−1})]·ΔΛ_j` on states with at most one particle
    /// in bin `j`.
    pub fn analytic_rule_defect<F>(&self, f: F) -> (f64, f64)
    where
        F: Fn(f64) -> f64,
    {
        let apply = |op: &SparseOperator| -> SparseOperator {
            let diag: Vec<f64> = (0..op.nrows()).map(|i| f(op.get(i, i).re)).collect();
            SparseOperator::real_diagonal(&diag)
        };
        let (mut exact, mut first_order): (f64, f64) = (0.0, 0.0);
        for j in 0..self.grid.bin_count() {
            let modes = self.grid.bin_modes(j);
            let prev = self.counter(0..modes.start);
            let next = self.counter(0..modes.end);
            let step = self.counter(modes.clone());
            let lhs = &apply(&next) - &apply(&prev);
            let rhs = &apply(&(&prev + &step)) - &apply(&prev);
            exact = exact.max((&lhs - &rhs).norm());

            let shifted = prev.add_scaled(&SparseOperator::identity(self.dim()), C64::new(1.0, 0.0));
            let paper = (&apply(&shifted) - &apply(&prev)).matmul(&step);
            let low: Vec<usize> = (0..self.dim())
                .filter(|&i| self.basis.label(i)[modes.clone()].iter().map(|&n| n as u32).sum::<u32>() <= 1)
                .collect();
            first_order = first_order.max((&lhs - &paper).compress(&low).norm());
        }
        (exact, first_order)
    }
}

fn masked(phi: &[C64], keep: std::ops::Range<usize>) -> Vec<C64> {
    phi.iter()
        .enumerate()
        .map(|(m, &c)| if keep.contains(&m) { c } else { C64::new(0.0, 0.0) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn setup(bins: usize, m: usize) -> SpectralProcesses {
        let g = Arc::new(SpectralGrid::uniform(bins as f64, bins, 1).unwrap());
        SpectralProcesses::build(&g, m).unwrap()
    }

    fn uniform(p: &SpectralProcesses) -> OneParticleVector {
        let n = p.grid().mode_count() as f64;
        OneParticleVector::from_coeffs(p.grid(), vec![c(1.0 / n.sqrt()); p.grid().mode_count()]).unwrap()
    }

    #[test]
    fn creation_process_projects() {
        let p = setup(3, 2);
        let phi = OneParticleVector::from_real(p.grid(), &[1.0, 1.0, 1.0]).unwrap();
        let x = p.spectral_process(ProcessKind::Create, Some(&phi), 1.0).unwrap();
        let e1 = OneParticleVector::from_real(p.grid(), &[1.0, 0.0, 0.0]).unwrap();
        let y = crate::fock::field_operator(p.basis(), FieldKind::Creation, &e1).unwrap();
        assert_eq!(x, y);
        assert!(p.spectral_process(ProcessKind::Create, Some(&phi), 1.5).is_err());
        assert!(p.spectral_process(ProcessKind::Conserve, Some(&phi), 1.0).is_err());
    }

    #[test]
    fn counter_and_parity_values() {
        let p = setup(3, 3);
        let i = p.basis().index_of(&[1, 0, 2]).unwrap();
        let lam = p.spectral_process(ProcessKind::Conserve, None, 2.0).unwrap();
        assert_eq!(lam.get(i, i), c(1.0));
        let all = p.spectral_process(ProcessKind::Conserve, None, 3.0).unwrap();
        assert_eq!(all, p.basis().number_operator());
        let j = p.parity_process(2.0).unwrap();
        assert_eq!(j.get(i, i), c(-1.0));
        let vac = FockVector::vacuum(p.basis());
        assert_eq!(vac.apply(&j), vac);
        assert_eq!(p.spectral_process(ProcessKind::Conserve, None, 0.0).unwrap().nnz(), 0);
        assert_eq!(p.parity_process(0.0).unwrap(), SparseOperator::identity(p.dim()));
    }

    #[test]
    fn jordan_wigner_two_modes() {
        let p = setup(2, 2);
        let e1 = OneParticleVector::unit(p.grid(), 0);
        let e2 = OneParticleVector::unit(p.grid(), 1);
        let f2 = p.fermi_spectral_process(FieldKind::Creation, &e2, 2.0).unwrap();
        let s10 = p.basis().index_of(&[1, 0]).unwrap();
        let s11 = p.basis().index_of(&[1, 1]).unwrap();
        assert_eq!(f2.get(s11, s10), c(-1.0));
        let f1 = p.fermi_spectral_process(FieldKind::Creation, &e1, 2.0).unwrap();
        let vac = FockVector::vacuum(p.basis());
        let out = vac.apply(&f2).apply(&f1);
        assert_eq!(out, FockVector::basis_state(p.basis(), s11));
        let down = p.fermi_spectral_process(FieldKind::Annihilation, &uniform(&p), 2.0).unwrap();
        assert_eq!(vac.apply(&down).norm(), 0.0);
    }

    #[test]
    fn adaptedness_examples() {
        let p = setup(4, 3);
        let phi = uniform(&p);
        let x = p.spectral_process(ProcessKind::Create, Some(&phi), 2.0).unwrap();
        assert!(p.adaptedness_defect(&x, 1, 2.0).unwrap() < 1e-12);
        let lam = p.spectral_process(ProcessKind::Conserve, None, 2.0).unwrap();
        assert!(p.adaptedness_defect(&lam, 1, 2.0).unwrap() < 1e-12);
        let above = mode_creation(p.basis(), 3);
        assert!(p.adaptedness_defect(&above, 1, 2.0).unwrap() >= 1.0 - 1e-12);
        let f = p.fermi_spectral_process(FieldKind::Creation, &phi, 2.0).unwrap();
        assert!(p.adaptedness_defect(&f.ampliate(2), 2, 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn car_defect_closed_form() {
        // dense brute force: for uniform c = 1/√N the anticommutator defect is
        // 2Σ|c_j|² n_j, i.e. 2/N on one particle
        for n in [2, 3, 5, 8] {
            let p = setup(n, 2);
            let phi = uniform(&p);
            let d = p.car_defect(&phi, &phi, n as f64).unwrap();
            assert!((d.anticommutator - 2.0 / n as f64).abs() < 1e-12, "{n}: {d:?}");
            assert!(d.parity < 1e-12);
            let dense = {
                let fm = p.fermi_spectral_process(FieldKind::Annihilation, &phi, n as f64).unwrap().to_dense();
                let fp = p.fermi_spectral_process(FieldKind::Creation, &phi, n as f64).unwrap().to_dense();
                let anti = &fm * &fp + &fp * &fm;
                let keep = p.basis().up_to_grade(1).len();
                let mut block = anti.view((0, 0), (keep, keep)).into_owned();
                for i in 0..keep {
                    block[(i, i)] -= c(1.0);
                }
                block.svd(false, false).singular_values.max()
            };
            assert!((dense - d.anticommutator).abs() < 1e-12);
        }
    }

    #[test]
    fn distinct_modes_anticommute_exactly() {
        let p = setup(3, 3);
        let e1 = OneParticleVector::unit(p.grid(), 0);
        let e3 = OneParticleVector::unit(p.grid(), 2);
        let d = p.car_defect(&e1, &e3, 3.0).unwrap();
        assert!(d.anticommutator < 1e-12);
    }

    #[test]
    fn square_defect_on_vacuum() {
        // F⁺_φ² Φ = √2 Σ c_m² |2_m⟩: the off-diagonal pairs cancel
        let p = setup(4, 2);
        let phi = uniform(&p);
        let d = p.car_defect(&phi, &phi, 4.0).unwrap();
        assert!((d.square - (2.0f64 * 4.0 / 16.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn parity_identities() {
        let g = Arc::new(SpectralGrid::build(3.0, 3, &[1, 2, 1]).unwrap());
        let p = SpectralProcesses::build(&g, 3).unwrap();
        assert_eq!(p.parity_recursion_defect(), 0.0);
        for j in 0..3 {
            let (low, multi) = p.parity_differential_defect(j).unwrap();
            assert_eq!(low, 0.0);
            assert!(multi);
        }
        let (exact, first) = p.analytic_rule_defect(|x| x * x + 0.5 * x);
        assert_eq!(exact, 0.0);
        assert!(first < 1e-12);
        for a in [0.0, 1.0, 2.0, 3.0] {
            for b in [0.0, 1.0, 2.0, 3.0] {
                let ja = p.parity_process(a).unwrap();
                let jb = p.parity_process(b).unwrap();
                assert_eq!(ja.commutator(&jb).nnz(), 0);
            }
        }
    }
}
