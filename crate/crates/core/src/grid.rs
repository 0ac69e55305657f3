//! Frequency-binned discretization of a direct-integral one-particle space.
//!
//! The continuum `h = ∫⊕ k_ω dω` is replaced by `N` contiguous bins, bin `j`
//! carrying a `d_j`-dimensional internal space. Modes are numbered bin-major,
//! internal-index-minor, and that order is used everywhere a total order on
//! modes is needed (parity prefixes, fermionic signs).
//!
//! Coefficients carry the measure weight: a sampled function contributes
//! `φ_k(ω_j^c)·√Δω_j` at mode `(j, k)`, so one-particle inner products are plain
//! coefficient sums.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative tolerance used when matching a frequency against a bin edge.
const EDGE_RTOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    edges: Vec<f64>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

/// Closed frequency window `[lower, upper]`; both ends must be bin edges when
/// applied to a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralWindow {
    pub lower: f64,
    pub upper: f64,
}

impl SpectralWindow {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// The window `[0, omega]`.
    pub fn below(omega: f64) -> Self {
        Self { lower: 0.0, upper: omega }
    }
}

impl SpectralGrid {
    /// Uniform grid on `[0, omega_max]` with `bins` bins.
    pub fn build(omega_max: f64, bins: usize, internal_dims: &[usize]) -> Result<Self> {
        if bins == 0 || !omega_max.is_finite() || omega_max <= 0.0 {
            return Err(Error::EmptyGrid);
        }
        if internal_dims.len() != bins {
            return Err(Error::DimMismatch { expected: bins, got: internal_dims.len() });
        }
        let edges = (0..=bins)
            .map(|j| omega_max * j as f64 / bins as f64)
            .collect();
        Self::from_edges(edges, internal_dims.to_vec())
    }

    /// Uniform grid with the same internal dimension in every bin.
    pub fn uniform(omega_max: f64, bins: usize, internal_dim: usize) -> Result<Self> {
        Self::build(omega_max, bins, &vec![internal_dim; bins])
    }

    /// Grid with explicit edges. The first edge may be positive (upper halves
    /// produced by [`SpectralGrid::split`]).
    pub fn from_edges(edges: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::EmptyGrid);
        }
        if dims.len() + 1 != edges.len() {
            return Err(Error::DimMismatch { expected: edges.len() - 1, got: dims.len() });
        }
        if edges.iter().any(|e| !e.is_finite()) || edges[0] < 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::EmptyGrid);
        }
        if let Some(&d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::DimMismatch { expected: 1, got: d });
        }
        Ok(Self::assemble(edges, dims))
    }

    fn assemble(edges: Vec<f64>, dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        offsets.push(0);
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Self { edges, dims, offsets }
    }

    /// A grid with no bins sitting at frequency `at`; only produced by splits.
    fn empty_at(at: f64) -> Self {
        Self::assemble(vec![at], Vec::new())
    }

    pub fn bin_count(&self) -> usize {
        self.dims.len()
    }

    /// Total number of modes `D = Σ d_j`.
    pub fn mode_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn omega_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn internal_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bin_count()).map(|j| self.center(j)).collect()
    }

    pub fn left_edge(&self, bin: usize) -> f64 {
        self.edges[bin]
    }

    /// Global index of internal mode `k` in bin `j`.
    pub fn mode(&self, bin: usize, internal: usize) -> usize {
        debug_assert!(internal < self.dims[bin]);
        self.offsets[bin] + internal
    }

    /// Inverse of [`SpectralGrid::mode`].
    pub fn locate(&self, mode: usize) -> (usize, usize) {
        let bin = self.mode_bin(mode);
        (bin, mode - self.offsets[bin])
    }

    pub fn mode_bin(&self, mode: usize) -> usize {
        debug_assert!(mode < self.mode_count());
        // offsets is sorted; the bin is the last offset <= mode
        self.offsets.partition_point(|&o| o <= mode) - 1
    }

    pub fn bin_modes(&self, bin: usize) -> Range<usize> {
        self.offsets[bin]..self.offsets[bin + 1]
    }

    /// Index `k` of the edge equal to `omega`; bins `0..k` lie below it.
    pub fn cut_index(&self, omega: f64) -> Result<usize> {
        let tol = EDGE_RTOL * self.omega_max().abs().max(1.0);
        self.edges
            .iter()
            .position(|&e| (e - omega).abs() <= tol)
            .ok_or(Error::MisalignedCut(omega))
    }

    /// Modes lying in bins below the aligned cut `omega`.
    pub fn modes_below(&self, omega: f64) -> Result<Range<usize>> {
        let k = self.cut_index(omega)?;
        Ok(0..self.offsets[k])
    }

    /// Bins whose interval lies inside the window.
    pub fn window_bins(&self, window: &SpectralWindow) -> Result<Range<usize>> {
        let a = self.cut_index(window.lower)?;
        let b = self.cut_index(window.upper)?;
        Ok(a..b.max(a))
    }

    pub fn window_modes(&self, window: &SpectralWindow) -> Result<Range<usize>> {
        let bins = self.window_bins(window)?;
        Ok(self.offsets[bins.start]..self.offsets[bins.end])
    }

    /// Diagonal one-particle Hamiltonian with the bin center on every mode.
    pub fn one_particle_hamiltonian(&self) -> OneParticleHamiltonian {
        let diag = (0..self.bin_count())
            .flat_map(|j| std::iter::repeat_n(self.center(j), self.dims[j]))
            .collect();
        OneParticleHamiltonian { diag }
    }

    /// Split at an aligned edge into the grids below and above it.
    pub fn split(&self, omega: f64) -> Result<(SpectralGrid, SpectralGrid)> {
        let k = self.cut_index(omega)?;
        let n = self.bin_count();
        let low = if k == 0 {
            Self::empty_at(self.edges[0])
        } else {
            Self::assemble(self.edges[..=k].to_vec(), self.dims[..k].to_vec())
        };
        let high = if k == n {
            Self::empty_at(self.edges[n])
        } else {
            Self::assemble(self.edges[k..].to_vec(), self.dims[k..].to_vec())
        };
        Ok((low, high))
    }

    /// Orthogonal projector onto the modes of a window, as a `D×D` matrix.
    pub fn projector_matrix(&self, window: &SpectralWindow) -> Result<DMatrix<C64>> {
        let modes = self.window_modes(window)?;
        let d = self.mode_count();
        Ok(DMatrix::from_fn(d, d, |r, c| {
            if r == c && modes.contains(&r) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }
}

/// `H = ∫ ω Π[dω]` on the grid: bin centers on the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct OneParticleHamiltonian {
    diag: Vec<f64>,
}

impl OneParticleHamiltonian {
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, phi: &OneParticleVector) -> Result<OneParticleVector> {
        if phi.len() != self.diag.len() {
            return Err(Error::DimMismatch { expected: self.diag.len(), got: phi.len() });
        }
        let coeffs = phi.coeffs.iter().zip(&self.diag).map(|(c, w)| c * w).collect();
        Ok(OneParticleVector { grid: phi.grid.clone(), coeffs })
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let d = self.diag.len();
        DMatrix::from_fn(d, d, |r, c| if r == c { C64::new(self.diag[r], 0.0) } else { C64::new(0.0, 0.0) })
    }
}

/// A vector of `h` in the grid's orthonormal mode basis.
#[derive(Clone, Debug, PartialEq)]
pub struct OneParticleVector {
    grid: Arc<SpectralGrid>,
    coeffs: Vec<C64>,
}

impl OneParticleVector {
    pub fn from_coeffs(grid: &Arc<SpectralGrid>, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.mode_count() {
            return Err(Error::DimMismatch { expected: grid.mode_count(), got: coeffs.len() });
        }
        Ok(Self { grid: grid.clone(), coeffs })
    }

    pub fn from_real(grid: &Arc<SpectralGrid>, coeffs: &[f64]) -> Result<Self> {
        Self::from_coeffs(grid, coeffs.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        Self { grid: grid.clone(), coeffs: vec![C64::new(0.0, 0.0); grid.mode_count()] }
    }

    /// Unit vector on a single mode.
    pub fn unit(grid: &Arc<SpectralGrid>, mode: usize) -> Self {
        let mut v = Self::zeros(grid);
        v.coeffs[mode] = C64::new(1.0, 0.0);
        v
    }

    /// Midpoint-rule discretization of `ω ↦ φ_ω ∈ k_ω`. The callable returns
    /// the `d_j` internal components at the bin center.
    pub fn sample<F>(grid: &Arc<SpectralGrid>, mut phi: F) -> Result<Self>
    where
        F: FnMut(f64) -> Vec<C64>,
    {
        let mut coeffs = Vec::with_capacity(grid.mode_count());
        for j in 0..grid.bin_count() {
            let values = phi(grid.center(j));
            if values.len() != grid.dims[j] {
                return Err(Error::DimMismatch { expected: grid.dims[j], got: values.len() });
            }
            let w = grid.width(j).sqrt();
            coeffs.extend(values.into_iter().map(|v| v * w));
        }
        Ok(Self { grid: grid.clone(), coeffs })
    }

    /// Samples a scalar function, copying it into every internal component.
    pub fn sample_scalar<F>(grid: &Arc<SpectralGrid>, phi: F) -> Self
    where
        F: Fn(f64) -> C64,
    {
        let dims = grid.dims.clone();
        let mut j = 0;
        Self::sample(grid, |w| {
            let v = vec![phi(w); dims[j]];
            j += 1;
            v
        })
        .expect("component count matches by construction")
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn bin(&self, bin: usize) -> &[C64] {
        &self.coeffs[self.grid.bin_modes(bin)]
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.check_grid(other)?;
        Ok(dot(&self.coeffs, &other.coeffs))
    }

    /// Per-bin inner product `(φ_ω|ψ_ω) dω` on bin `j`.
    pub fn bin_inner(&self, other: &Self, bin: usize) -> C64 {
        dot(self.bin(bin), other.bin(bin))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn bin_norm_sqr(&self, bin: usize) -> f64 {
        self.bin(bin).iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { grid: self.grid.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            self.clone()
        } else {
            self.scaled(C64::new(1.0 / n, 0.0))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid.clone(), coeffs })
    }

    /// `Π_A φ`: zero every mode outside the window.
    pub fn project(&self, window: &SpectralWindow) -> Result<Self> {
        let keep = self.grid.window_modes(window)?;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, &c)| if keep.contains(&m) { c } else { C64::new(0.0, 0.0) })
            .collect();
        Ok(Self { grid: self.grid.clone(), coeffs })
    }

    /// `Π_{[0, omega]} φ`.
    pub fn project_below(&self, omega: f64) -> Result<Self> {
        self.project(&SpectralWindow::below(omega))
    }

    /// Restriction to a single bin (zero elsewhere).
    pub fn restrict_to_bin(&self, bin: usize) -> Self {
        let keep = self.grid.bin_modes(bin);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, &c)| if keep.contains(&m) { c } else { C64::new(0.0, 0.0) })
            .collect();
        Self { grid: self.grid.clone(), coeffs }
    }

    /// Applies a `D×D` matrix to the coefficients.
    pub fn transformed(&self, u: &DMatrix<C64>) -> Result<Self> {
        let d = self.len();
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::DimMismatch { expected: d, got: u.nrows() });
        }
        let coeffs = (0..d)
            .map(|r| (0..d).map(|c| u[(r, c)] * self.coeffs[c]).sum())
            .collect();
        Ok(Self { grid: self.grid.clone(), coeffs })
    }
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn grid3() -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::build(3.0, 3, &[1, 1, 1]).unwrap())
    }

    #[test]
    fn uniform_partition_arithmetic() {
        let g = grid3();
        assert_eq!(g.widths(), vec![1.0, 1.0, 1.0]);
        assert_eq!(g.centers(), vec![0.5, 1.5, 2.5]);
        assert_eq!(g.mode_count(), 3);

        let g = SpectralGrid::build(1.0, 4, &[2, 2, 2, 2]).unwrap();
        assert_eq!(g.width(2), 0.25);
        assert_eq!(g.mode_count(), 8);
        assert_eq!(g.locate(5), (2, 1));
        assert_eq!(g.mode(3, 0), 6);
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(matches!(SpectralGrid::build(1.0, 0, &[]), Err(Error::EmptyGrid)));
        assert!(matches!(SpectralGrid::build(0.0, 2, &[1, 1]), Err(Error::EmptyGrid)));
        assert!(matches!(SpectralGrid::build(1.0, 2, &[1]), Err(Error::DimMismatch { .. })));
        assert!(SpectralGrid::build(1.0, 2, &[1, 0]).is_err());
    }

    #[test]
    fn mode_order_is_bin_major() {
        let g = SpectralGrid::build(2.0, 3, &[2, 1, 3]).unwrap();
        let mut m = 0;
        for j in 0..3 {
            for k in 0..g.internal_dims()[j] {
                assert_eq!(g.mode(j, k), m);
                assert_eq!(g.locate(m), (j, k));
                m += 1;
            }
        }
    }

    #[test]
    fn midpoint_sampling() {
        let g = grid3();
        let one = OneParticleVector::sample_scalar(&g, |_| c(1.0));
        assert_eq!(one.coeffs(), &[c(1.0), c(1.0), c(1.0)]);
        let lin = OneParticleVector::sample_scalar(&g, c);
        assert_eq!(lin.coeffs(), &[c(0.5), c(1.5), c(2.5)]);

        let g4 = Arc::new(SpectralGrid::uniform(1.0, 4, 1).unwrap());
        let v = OneParticleVector::sample_scalar(&g4, |_| c(1.0));
        for x in v.coeffs() {
            assert_abs_diff_eq!(x.re, 0.5, epsilon = 1e-15);
        }
        let bad = OneParticleVector::sample(&g4, |_| vec![c(1.0), c(2.0)]);
        assert!(matches!(bad, Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn inner_product_rules() {
        let g = grid3();
        let one = OneParticleVector::sample_scalar(&g, |_| c(1.0));
        assert_eq!(one.inner(&one).unwrap(), c(3.0));

        let a = OneParticleVector::from_real(&g, &[1.0, 0.0, 0.0]).unwrap();
        let b = OneParticleVector::from_real(&g, &[0.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.inner(&b).unwrap(), c(0.0));

        let phi = OneParticleVector::from_coeffs(&g, vec![C64::new(1.0, 2.0), c(0.5), C64::new(0.0, -1.0)]).unwrap();
        let psi = OneParticleVector::from_coeffs(&g, vec![c(2.0), C64::new(1.0, 1.0), c(3.0)]).unwrap();
        let i = C64::new(0.0, 1.0);
        let lhs = phi.scaled(i).inner(&psi).unwrap();
        let rhs = -i * phi.inner(&psi).unwrap();
        assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-14);

        let other = Arc::new(SpectralGrid::uniform(3.0, 3, 2).unwrap());
        let z = OneParticleVector::zeros(&other);
        assert!(z.inner(&z).is_ok());
        assert!(matches!(phi.inner(&OneParticleVector::zeros(&Arc::new(SpectralGrid::uniform(4.0, 3, 1).unwrap()))), Err(Error::GridMismatch)));
    }

    #[test]
    fn projection_windows() {
        let g = grid3();
        let phi = OneParticleVector::from_real(&g, &[1.0, 2.0, 3.0]).unwrap();
        let p = phi.project(&SpectralWindow::new(0.0, 2.0)).unwrap();
        assert_eq!(p.coeffs(), &[c(1.0), c(2.0), c(0.0)]);
        let z = phi.project(&SpectralWindow::new(0.0, 0.0)).unwrap();
        assert_eq!(z.norm_sqr(), 0.0);
        assert!(matches!(phi.project(&SpectralWindow::new(0.0, 1.5)), Err(Error::MisalignedCut(_))));
        let mid = phi.project(&SpectralWindow::new(1.0, 3.0)).unwrap();
        assert_eq!(mid.coeffs(), &[c(0.0), c(2.0), c(3.0)]);
    }

    #[test]
    fn hamiltonian_is_bin_centers() {
        let g = grid3();
        let h = g.one_particle_hamiltonian();
        assert_eq!(h.diagonal(), &[0.5, 1.5, 2.5]);
        let e1 = OneParticleVector::unit(&g, 0);
        assert_eq!(e1.inner(&h.apply(&e1).unwrap()).unwrap(), c(0.5));
        let hm = h.to_matrix();
        let p = g.projector_matrix(&SpectralWindow::new(0.0, 2.0)).unwrap();
        let comm = &hm * &p - &p * &hm;
        assert!(comm.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn split_preserves_bins() {
        let g = SpectralGrid::build(3.0, 3, &[1, 1, 1]).unwrap();
        let (lo, hi) = g.split(1.0).unwrap();
        assert_eq!((lo.mode_count(), hi.mode_count()), (1, 2));
        assert_eq!(hi.lower(), 1.0);
        assert_eq!(hi.omega_max(), 3.0);
        let (lo, hi) = g.split(0.0).unwrap();
        assert!(lo.is_empty());
        assert_eq!(hi, g);
        assert!(matches!(g.split(1.5), Err(Error::MisalignedCut(_))));
    }
}
