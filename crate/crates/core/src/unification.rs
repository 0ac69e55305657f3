//! The boson-to-fermion map `Ξ` as a partial isometry from the occupancy-≤1
//! Bose subspace onto the Fermi Fock space, and the checks built on it.
//!
//! At distinct modes the Jordan–Wigner products `F⁺_{e_{m₁}}⋯F⁺_{e_{mₙ}}Φ₊`
//! are already signed Bose basis vectors with the same sign the Fermi
//! convention assigns, so `Ξ` is the identity on labels with `n_m ≤ 1`.

use std::sync::Arc;

use itertools::Itertools;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{diff_second_quantize, field_operator, mode_creation, FieldKind, FockBasis, FockVector, Statistics};
use crate::grid::{OneParticleVector, SpectralGrid, SpectralWindow};
use crate::processes::{ProcessFamily, SpectralProcesses};
use crate::sparse::SparseOperator;

#[derive(Clone, Debug)]
pub struct XiMap {
    processes: SpectralProcesses,
    fermi: Arc<FockBasis>,
    matrix: SparseOperator,
    domain: SparseOperator,
}

/// Which side of the ordered-product identities is expanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `F⁺` products as signed simplex sums of `dB⁺`.
    FermiFromBose,
    /// `B⁺` products as unsigned simplex sums of `dF⁺`.
    BoseFromFermi,
}

/// Output of [`XiMap::field_covariance_defect`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FieldCovariance {
    /// `‖Ξ P F⁺_φ(Ω) P Ξ† − F⁺(Π φ)‖`.
    pub creation: f64,
    /// The same for the annihilators.
    pub annihilation: f64,
    /// `‖(1 − P) F⁺_φ(Ω) P‖`.
    pub leakage: f64,
    /// Leakage with inputs restricted to the one-particle sector.
    pub one_particle_leakage: f64,
}

impl XiMap {
    /// Pairs a Bose process space with a Fermi basis on the same modes.
    /// Every Fermi label needs a preimage, so the Fermi grades may not exceed
    /// the Bose ones.
    pub fn new(processes: SpectralProcesses, fermi: Arc<FockBasis>) -> Result<Self> {
        let bose = processes.basis().clone();
        if fermi.statistics() != Statistics::Fermi {
            return Err(Error::BasisMismatch("target basis must be Fermi".into()));
        }
        if fermi.modes() != bose.modes() {
            return Err(Error::BasisMismatch(format!("{} Bose modes, {} Fermi modes", bose.modes(), fermi.modes())));
        }
        if fermi.max_grade() > bose.max_grade() {
            return Err(Error::BasisMismatch(format!(
                "Fermi grade {} exceeds Bose grade {}",
                fermi.max_grade(),
                bose.max_grade()
            )));
        }
        let mut trip = Vec::new();
        let mut domain = Vec::with_capacity(bose.dim());
        for (i, label) in bose.labels().enumerate() {
            let single = label.iter().all(|&n| n <= 1);
            domain.push(if single { 1.0 } else { 0.0 });
            if single {
                if let Some(j) = fermi.index_of(label) {
                    trip.push((j, i, C64::new(1.0, 0.0)));
                }
            }
        }
        let matrix = SparseOperator::from_triplets(fermi.dim(), bose.dim(), trip);
        Ok(Self { processes, fermi, matrix, domain: SparseOperator::real_diagonal(&domain) })
    }

    pub fn processes(&self) -> &SpectralProcesses {
        &self.processes
    }

    pub fn bose(&self) -> &Arc<FockBasis> {
        self.processes.basis()
    }

    pub fn fermi(&self) -> &Arc<FockBasis> {
        &self.fermi
    }

    pub fn matrix(&self) -> &SparseOperator {
        &self.matrix
    }

    /// `P≤1` on the Bose space.
    pub fn domain_projector(&self) -> &SparseOperator {
        &self.domain
    }

    pub fn apply(&self, v: &FockVector) -> Result<FockVector> {
        if v.basis() != self.bose() {
            return Err(Error::BasisMismatch("vector is not on the Bose basis of the map".into()));
        }
        FockVector::new(&self.fermi, self.matrix.apply(v.coeffs()))
    }

    /// `Ξ A Ξ†` for a Bose-space operator.
    pub fn conjugate(&self, a: &SparseOperator) -> SparseOperator {
        self.matrix.matmul(a).matmul(&self.matrix.adjoint())
    }

    /// `(‖Ξ†Ξ − P≤1‖, ‖ΞΞ† − 1‖)`.
    pub fn isometry_defect(&self) -> (f64, f64) {
        let adj = self.matrix.adjoint();
        let initial = &adj.matmul(&self.matrix) - &self.domain;
        let last = &self.matrix.matmul(&adj) - &SparseOperator::identity(self.fermi.dim());
        (initial.norm(), last.norm())
    }

    /// Compressed covariance of the Jordan–Wigner fields and the leakage of
    /// `F⁺_φ(Ω)` out of the occupancy-≤1 subspace.
    pub fn field_covariance_defect(&self, phi: &OneParticleVector, omega: f64) -> Result<FieldCovariance> {
        let projected = phi.project_below(omega)?;
        let p = &self.domain;
        let mut out = FieldCovariance::default();
        for kind in [FieldKind::Creation, FieldKind::Annihilation] {
            let jw = self.processes.fermi_spectral_process(kind, phi, omega)?;
            let lifted = self.conjugate(&p.matmul(&jw).matmul(p));
            let target = field_operator(&self.fermi, kind, &projected)?;
            let defect = (&lifted - &target).norm();
            match kind {
                FieldKind::Creation => {
                    out.creation = defect;
                    let outside = &SparseOperator::identity(p.nrows()) - p;
                    let leak = outside.matmul(&jw).matmul(p);
                    out.leakage = leak.norm();
                    let bose = self.bose();
                    let rows: Vec<usize> = (0..bose.dim()).collect();
                    let cols: Vec<usize> = bose.grade_range(1.min(bose.max_grade())).collect();
                    out.one_particle_leakage = leak.restrict(&rows, &cols).norm();
                }
                FieldKind::Annihilation => out.annihilation = defect,
            }
        }
        Ok(out)
    }

    /// `‖Ξ γ₊(Π[0,Ω]) P≤1 Ξ† − γ₋(Π[0,Ω])‖`.
    pub fn number_covariance_defect(&self, omega: f64) -> Result<f64> {
        let grid = self.processes.grid();
        let pi = grid.projector_matrix(&SpectralWindow::below(omega))?;
        let bose = diff_second_quantize(self.bose(), &pi)?;
        let fermi = diff_second_quantize(&self.fermi, &pi)?;
        let lifted = self.conjugate(&bose.matmul(&self.domain));
        Ok((&lifted - &fermi).norm())
    }

    /// Largest `‖Ξ F⁺_{e_{m₁}}⋯F⁺_{e_{mₙ}}Φ₊ − f⁺_{m₁}⋯f⁺_{mₙ}Φ₋‖` over ordered
    /// tuples of distinct modes with `n ≤ n_max`, fields taken at the top of
    /// the grid.
    pub fn consistency_defect(&self, n_max: usize) -> Result<f64> {
        let grid = self.processes.grid();
        let d = grid.mode_count();
        let top = grid.omega_max();
        let bose = self.bose();
        let jw: Vec<SparseOperator> = (0..d)
            .map(|m| {
                self.processes
                    .fermi_spectral_process(FieldKind::Creation, &OneParticleVector::unit(grid, m), top)
            })
            .collect::<Result<_>>()?;
        let f: Vec<SparseOperator> = (0..d).map(|m| mode_creation(&self.fermi, m)).collect();
        let mut worst: f64 = 0.0;
        let n_max = n_max.min(self.fermi.max_grade());
        for n in 1..=n_max {
            for tuple in (0..d).permutations(n) {
                let mut b = FockVector::vacuum(bose);
                let mut fv = FockVector::vacuum(&self.fermi);
                for &m in tuple.iter().rev() {
                    b = b.apply(&jw[m]);
                    fv = fv.apply(&f[m]);
                }
                worst = worst.max(self.apply(&b)?.sub(&fv).norm());
            }
        }
        Ok(worst)
    }
}

/// `Ξ` for the grid's modes with both truncations at `m`.
pub fn build_xi(grid: &Arc<SpectralGrid>, m: usize) -> Result<XiMap> {
    let processes = SpectralProcesses::build(grid, m)?;
    let fermi = Arc::new(FockBasis::new(Statistics::Fermi, grid.mode_count(), m)?);
    XiMap::new(processes, fermi)
}

/// `‖LHS − RHS‖` for the ordered-product identities applied to `Φ₊`.
///
/// The right side sums, over permutations `σ`, the strictly bin-ordered
/// products `Δ_{σ(1)}(j₁)⋯Δ_{σ(n)}(jₙ)`, `j₁ < ⋯ < jₙ`, weighted by the sign
/// of `σ` for [`Direction::FermiFromBose`] and by one otherwise.
pub fn ordered_product_defect(
    processes: &SpectralProcesses,
    phis: &[OneParticleVector],
    omega: f64,
    direction: Direction,
) -> Result<f64> {
    let n = phis.len();
    let basis = processes.basis();
    if n > basis.truncation() {
        return Err(Error::TruncationTooSmall { n, truncation: basis.truncation() });
    }
    let bins = processes.grid().cut_index(omega)?;
    type Family = fn(OneParticleVector) -> ProcessFamily;
    let (whole, inc): (Family, Family) = match direction {
        Direction::FermiFromBose => (ProcessFamily::FermiCreation, ProcessFamily::Creation),
        Direction::BoseFromFermi => (ProcessFamily::Creation, ProcessFamily::FermiCreation),
    };

    let vacuum = FockVector::vacuum(basis);
    let mut lhs = vacuum.clone();
    for phi in phis.iter().rev() {
        lhs = lhs.apply(&processes.evaluate(&whole(phi.clone()), omega)?);
    }

    // increments[i][j]: single-bin increment of the i-th field on bin j
    let increments: Vec<Vec<SparseOperator>> = phis
        .iter()
        .map(|phi| (0..bins).map(|j| processes.increment(&inc(phi.clone()), j)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let mut rhs = vec![C64::new(0.0, 0.0); basis.dim()];
    for perm in (0..n).permutations(n) {
        let sign = match direction {
            Direction::FermiFromBose => permutation_sign(&perm),
            Direction::BoseFromFermi => 1.0,
        };
        let sum = simplex_sum(&increments, &perm, bins, &vacuum);
        for (r, s) in rhs.iter_mut().zip(sum) {
            *r += s * sign;
        }
    }
    let rhs = FockVector::new(basis, rhs)?;
    Ok(lhs.sub(&rhs).norm())
}

/// `Σ_{j₁<⋯<jₙ} Δ_{p₁}(j₁)⋯Δ_{pₙ}(jₙ) v`, accumulated from the right:
/// `tail[j]` holds the partial sum with the current leftmost bin at least `j`.
fn simplex_sum(increments: &[Vec<SparseOperator>], perm: &[usize], bins: usize, v: &FockVector) -> Vec<C64> {
    let dim = v.coeffs().len();
    let zero = vec![C64::new(0.0, 0.0); dim];
    if perm.is_empty() {
        return v.coeffs().to_vec();
    }
    // before any factor, every bin start carries v
    let mut tail: Vec<Vec<C64>> = vec![v.coeffs().to_vec(); bins + 1];
    for (depth, &i) in perm.iter().rev().enumerate() {
        let mut next = vec![zero.clone(); bins + 1];
        for j in (0..bins).rev() {
            let from = if depth == 0 { v.coeffs() } else { &tail[j + 1] };
            let mut acc = increments[i][j].apply(from);
            for (a, b) in acc.iter_mut().zip(&next[j + 1]) {
                *a += b;
            }
            next[j] = acc;
        }
        tail = next;
    }
    tail.swap_remove(0)
}

fn permutation_sign(perm: &[usize]) -> f64 {
    let inversions = perm.iter().tuple_combinations().filter(|(a, b)| a > b).count();
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;
    use proptest::prelude::*;

    fn grid(bins: usize) -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::uniform(1.0, bins, 1).unwrap())
    }

    fn uniform(g: &Arc<SpectralGrid>) -> OneParticleVector {
        OneParticleVector::sample_scalar(g, |_| C64::new(1.0, 0.0)).normalized()
    }

    #[test]
    fn label_examples() {
        let xi = build_xi(&grid(2), 2).unwrap();
        let both = FockVector::from_label(xi.bose(), &[1, 1]).unwrap();
        let image = xi.apply(&both).unwrap();
        assert_eq!(image, FockVector::from_label(xi.fermi(), &[1, 1]).unwrap());
        let vac = xi.apply(&FockVector::vacuum(xi.bose())).unwrap();
        assert_eq!(vac, FockVector::vacuum(xi.fermi()));
        let double = FockVector::from_label(xi.bose(), &[2, 0]).unwrap();
        assert_eq!(xi.apply(&double).unwrap().norm(), 0.0);
    }

    #[test]
    fn mismatched_bases_rejected() {
        let g = grid(3);
        let p = SpectralProcesses::build(&g, 2).unwrap();
        let wrong_modes = Arc::new(FockBasis::new(Statistics::Fermi, 2, 2).unwrap());
        assert!(matches!(XiMap::new(p.clone(), wrong_modes), Err(Error::BasisMismatch(_))));
        let too_high = Arc::new(FockBasis::new(Statistics::Fermi, 3, 3).unwrap());
        assert!(matches!(XiMap::new(p.clone(), too_high), Err(Error::BasisMismatch(_))));
        let bose = Arc::new(FockBasis::new(Statistics::Bose, 3, 2).unwrap());
        assert!(matches!(XiMap::new(p, bose), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn covariances_exact_and_leakage_closed_form() {
        for n in [4, 8] {
            let g = grid(n);
            let xi = build_xi(&g, 3).unwrap();
            let cov = xi.field_covariance_defect(&uniform(&g), 1.0).unwrap();
            assert!(cov.creation < 1e-12 && cov.annihilation < 1e-12, "{cov:?}");
            assert!((cov.one_particle_leakage - (2.0 / n as f64).sqrt()).abs() < 1e-12);
            for k in 0..=n {
                let w = k as f64 / n as f64;
                assert!(xi.number_covariance_defect(w).unwrap() < 1e-12);
            }
        }
        let xi = build_xi(&grid(4), 2).unwrap();
        assert!(xi.number_covariance_defect(0.3).is_err());
    }

    #[test]
    fn consistency_small() {
        for d in 1..=4 {
            let xi = build_xi(&grid(d), d.min(3)).unwrap();
            assert!(xi.consistency_defect(3).unwrap() < 1e-12);
        }
    }

    #[test]
    fn ordered_products() {
        let g = grid(4);
        let p = SpectralProcesses::build(&g, 3).unwrap();
        let e = |m| OneParticleVector::unit(&g, m);
        for dir in [Direction::FermiFromBose, Direction::BoseFromFermi] {
            assert!(ordered_product_defect(&p, &[e(0), e(2)], 1.0, dir).unwrap() < 1e-12);
            assert!(ordered_product_defect(&p, &[e(3), e(1), e(0)], 1.0, dir).unwrap() < 1e-12);
            assert!(ordered_product_defect(&p, &[uniform(&g)], 1.0, dir).unwrap() < 1e-12);
            let u = uniform(&g);
            assert!(ordered_product_defect(&p, &[u.clone(), u], 1.0, dir).unwrap() > 1e-3);
        }
        let u = uniform(&g);
        let too_many = vec![u; 4];
        assert!(matches!(
            ordered_product_defect(&p, &too_many, 1.0, Direction::FermiFromBose),
            Err(Error::TruncationTooSmall { n: 4, truncation: 3 })
        ));
    }

    #[test]
    fn simplex_sum_matches_brute_force() {
        let g = grid(3);
        let p = SpectralProcesses::build(&g, 3).unwrap();
        let u = uniform(&g);
        let v = OneParticleVector::sample_scalar(&g, |w| C64::new(w, 1.0));
        let incs: Vec<Vec<SparseOperator>> = [&u, &v]
            .iter()
            .map(|phi| (0..3).map(|j| p.increment(&ProcessFamily::Creation((*phi).clone()), j).unwrap()).collect())
            .collect();
        let vac = FockVector::vacuum(p.basis());
        let fast = simplex_sum(&incs, &[1, 0], 3, &vac);
        let mut slow = vec![C64::new(0.0, 0.0); p.dim()];
        for j1 in 0..3 {
            for j2 in j1 + 1..3 {
                let x = vac.apply(&incs[0][j2]).apply(&incs[1][j1]);
                for (s, a) in slow.iter_mut().zip(x.coeffs()) {
                    *s += a;
                }
            }
        }
        let diff: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(diff.sqrt() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn partial_isometry(d in 1usize..=6, m in 1usize..=6) {
            let m = m.min(d);
            let xi = build_xi(&grid(d), m).unwrap();
            let (a, b) = xi.isometry_defect();
            prop_assert!(a <= 1e-12 && b <= 1e-12);
        }
    }
}
