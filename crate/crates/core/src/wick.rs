//! Discrete Wick integrals against `dΛ`, `dB±` and `dω` with adapted step
//! coefficients, and the identities around them: the matrix-element form,
//! the Itô table, the product-rule correction, and the growth estimate.
//!
//! Operators act on `H₀ ⊗ Γ₊`, indexed `u·dim(Γ₊) + i`. Coefficients are read at
//! the left edge of each bin and multiply increments from the left
//! (`X(ω_j)·ΔB_j`).
//!
//! Matrix elements against exponential vectors use a probe cutoff `K`: the
//! vectors are `ε_{≤K}` (grades above `K` dropped), and every identity that
//! trades an increment for an inner product lowers the cutoff on that side by
//! one, which is exactly what `b⁻ε_{≤K}(f) = f·ε_{≤K−1}(f)` gives. With
//! `K ≤ M−1−r`, where `r` is how far the coefficients raise particle number,
//! no term touches the truncation and the routes agree exactly.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{exponential_from_coeffs, field_from_coeffs, FieldKind, FockBasis, FockVector, Statistics};
use crate::grid::{dot, OneParticleVector, SpectralGrid};
use crate::linalg::{random_complex, random_matrix, vec_norm};
use crate::processes::{ProcessKind, SpectralProcesses};
use crate::sparse::SparseOperator;

/// Adaptedness tolerance for step-process pieces.
pub const ADAPTED_TOL: f64 = 1e-10;
/// Particle cutoff of the bin-local space used by coherent Itô probes.
pub const COHERENT_CUTOFF: usize = 24;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Differential {
    #[serde(rename = "dLambda")]
    Lambda,
    #[serde(rename = "dB+")]
    Create,
    #[serde(rename = "dB-")]
    Annihilate,
    #[serde(rename = "domega")]
    Time,
}

impl Differential {
    pub const ALL: [Differential; 4] = [Self::Lambda, Self::Create, Self::Annihilate, Self::Time];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lambda => "dLambda",
            Self::Create => "dB+",
            Self::Annihilate => "dB-",
            Self::Time => "domega",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidDifferential(s.to_string()))
    }
}

/// `H₀ ⊗ Γ₊` over a grid.
#[derive(Clone, Debug)]
pub struct WickSpace {
    processes: SpectralProcesses,
    initial: usize,
}

impl WickSpace {
    pub fn new(processes: SpectralProcesses, initial: usize) -> Result<Self> {
        if initial == 0 {
            return Err(Error::DimMismatch { expected: 1, got: 0 });
        }
        Ok(Self { processes, initial })
    }

    pub fn build(grid: &Arc<SpectralGrid>, truncation: usize, initial: usize) -> Result<Self> {
        Self::new(SpectralProcesses::build(grid, truncation)?, initial)
    }

    pub fn processes(&self) -> &SpectralProcesses {
        &self.processes
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.processes.grid()
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        self.processes.basis()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn truncation(&self) -> usize {
        self.basis().truncation()
    }

    pub fn dim(&self) -> usize {
        self.initial * self.basis().dim()
    }

    pub fn identity(&self) -> SparseOperator {
        SparseOperator::identity(self.dim())
    }

    /// `1 ⊗ x` for a Fock-space operator.
    pub fn ampliate(&self, x: &SparseOperator) -> SparseOperator {
        x.ampliate(self.initial)
    }

    /// `a ⊗ 1` for an initial-space matrix.
    pub fn initial_operator(&self, a: &nalgebra::DMatrix<C64>) -> SparseOperator {
        SparseOperator::from_dense(a, 0.0).kron(&SparseOperator::identity(self.basis().dim()))
    }

    /// `u ⊗ x` as a coefficient vector.
    pub fn embed(&self, u: &[C64], x: &[C64]) -> Vec<C64> {
        u.iter().flat_map(|&a| x.iter().map(move |&b| a * b)).collect()
    }

    /// Single-bin increment of a fundamental differential, ampliated.
    pub fn increment(&self, diff: Differential, bin: usize, test: &OneParticleVector) -> Result<SparseOperator> {
        let local = self.local_increment(diff, bin, test)?;
        Ok(self.ampliate(&local))
    }

    fn local_increment(&self, diff: Differential, bin: usize, test: &OneParticleVector) -> Result<SparseOperator> {
        let grid = self.grid();
        if bin >= grid.bin_count() {
            return Err(Error::DimMismatch { expected: grid.bin_count(), got: bin });
        }
        let restricted = test.restrict_to_bin(bin);
        let basis = self.basis();
        Ok(match diff {
            Differential::Lambda => basis.diagonal_operator(|l| {
                l[grid.bin_modes(bin)].iter().map(|&n| n as f64).sum()
            }),
            Differential::Create => field_from_coeffs(basis, FieldKind::Creation, restricted.coeffs())?,
            Differential::Annihilate => field_from_coeffs(basis, FieldKind::Annihilation, restricted.coeffs())?,
            Differential::Time => SparseOperator::identity(basis.dim()).scaled_real(grid.width(bin)),
        })
    }

    /// `B±_φ(Ω)` or `Λ(Ω)` ampliated to `H₀ ⊗ Γ₊`.
    pub fn process(&self, kind: ProcessKind, phi: Option<&OneParticleVector>, omega: f64) -> Result<SparseOperator> {
        Ok(self.ampliate(&self.processes.spectral_process(kind, phi, omega)?))
    }
}

/// Piecewise-constant operator process with pieces starting at bin edges.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedStepProcess {
    starts: Vec<usize>,
    pieces: Vec<SparseOperator>,
}

impl AdaptedStepProcess {
    /// Validates alignment, shapes, and adaptedness of each piece at its left
    /// endpoint. The first breakpoint must be 0; the last piece runs to the end.
    pub fn new(space: &WickSpace, breakpoints: &[f64], pieces: Vec<SparseOperator>) -> Result<Self> {
        if breakpoints.len() != pieces.len() || pieces.is_empty() {
            return Err(Error::RefinementMismatch(format!(
                "{} breakpoints for {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        let grid = space.grid();
        let starts = breakpoints.iter().map(|&b| grid.cut_index(b)).collect::<Result<Vec<_>>>()?;
        if starts[0] != 0 || starts.windows(2).any(|w| w[1] <= w[0]) || *starts.last().unwrap() >= grid.bin_count() {
            return Err(Error::RefinementMismatch("breakpoints must start at 0 and increase strictly".into()));
        }
        for (k, (piece, &start)) in pieces.iter().zip(&starts).enumerate() {
            if piece.shape() != (space.dim(), space.dim()) {
                return Err(Error::DimMismatch { expected: space.dim(), got: piece.nrows() });
            }
            let defect = space
                .processes
                .adaptedness_defect(piece, space.initial, grid.edges()[start])?;
            if defect > ADAPTED_TOL {
                return Err(Error::AdaptednessViolation { piece: k, defect });
            }
        }
        Ok(Self { starts, pieces })
    }

    pub fn constant(space: &WickSpace, op: SparseOperator) -> Result<Self> {
        Self::new(space, &[0.0], vec![op])
    }

    pub fn zero(space: &WickSpace) -> Self {
        Self { starts: vec![0], pieces: vec![SparseOperator::zeros(space.dim(), space.dim())] }
    }

    pub fn identity(space: &WickSpace) -> Self {
        Self { starts: vec![0], pieces: vec![space.identity()] }
    }

    /// Piece in force on bin `j` (read at its left edge).
    pub fn at_bin(&self, bin: usize) -> &SparseOperator {
        let k = self.starts.partition_point(|&s| s <= bin) - 1;
        &self.pieces[k]
    }

    pub fn pieces(&self) -> &[SparseOperator] {
        &self.pieces
    }

    pub fn start_bins(&self) -> &[usize] {
        &self.starts
    }

    /// Pointwise adjoint; adaptedness is preserved.
    pub fn adjoint(&self) -> Self {
        Self { starts: self.starts.clone(), pieces: self.pieces.iter().map(|p| p.adjoint()).collect() }
    }

    fn is_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.nnz() == 0)
    }
}

/// Coefficients `X₁₁, X₁₀, X₀₁, X₀₀` against `dΛ, dB⁺_φ, dB⁻_ψ, dω`.
#[derive(Clone, Debug, PartialEq)]
pub struct WickIntegrand {
    pub x11: AdaptedStepProcess,
    pub x10: AdaptedStepProcess,
    pub x01: AdaptedStepProcess,
    pub x00: AdaptedStepProcess,
    pub phi: OneParticleVector,
    pub psi: OneParticleVector,
}

impl WickIntegrand {
    pub fn zero(space: &WickSpace) -> Self {
        let z = AdaptedStepProcess::zero(space);
        let v = OneParticleVector::zeros(space.grid());
        Self { x11: z.clone(), x10: z.clone(), x01: z.clone(), x00: z, phi: v.clone(), psi: v }
    }

    /// Integrand with a single nonzero coefficient.
    pub fn single(space: &WickSpace, diff: Differential, coeff: AdaptedStepProcess, test: &OneParticleVector) -> Self {
        let mut ig = Self::zero(space);
        match diff {
            Differential::Lambda => ig.x11 = coeff,
            Differential::Create => {
                ig.x10 = coeff;
                ig.phi = test.clone();
            }
            Differential::Annihilate => {
                ig.x01 = coeff;
                ig.psi = test.clone();
            }
            Differential::Time => ig.x00 = coeff,
        }
        ig
    }

    /// Integrand whose integral is the adjoint: adjoint coefficients, with the
    /// creation and annihilation roles (and test vectors) exchanged.
    pub fn adjoint(&self) -> Self {
        Self {
            x11: self.x11.adjoint(),
            x10: self.x01.adjoint(),
            x01: self.x10.adjoint(),
            x00: self.x00.adjoint(),
            phi: self.psi.clone(),
            psi: self.phi.clone(),
        }
    }

    /// The displayed adjoint: `B±` exchanged, coefficients left as they are.
    pub fn literal_adjoint(&self) -> Self {
        Self {
            x11: self.x11.clone(),
            x10: self.x01.clone(),
            x01: self.x10.clone(),
            x00: self.x00.clone(),
            phi: self.psi.clone(),
            psi: self.phi.clone(),
        }
    }

    fn check(&self, space: &WickSpace) -> Result<()> {
        for v in [&self.phi, &self.psi] {
            if v.len() != space.grid().mode_count() {
                return Err(Error::DimMismatch { expected: space.grid().mode_count(), got: v.len() });
            }
        }
        for x in [&self.x11, &self.x10, &self.x01, &self.x00] {
            if x.pieces[0].shape() != (space.dim(), space.dim()) {
                return Err(Error::DimMismatch { expected: space.dim(), got: x.pieces[0].nrows() });
            }
        }
        Ok(())
    }
}

/// `ΔX_j = X₁₁ΔΛ_j + X₁₀ΔB⁺_{φ,j} + X₀₁ΔB⁻_{ψ,j} + X₀₀Δω_j`.
pub fn wick_increment(space: &WickSpace, ig: &WickIntegrand, bin: usize) -> Result<SparseOperator> {
    ig.check(space)?;
    let mut total = SparseOperator::zeros(space.dim(), space.dim());
    let terms = [
        (&ig.x11, Differential::Lambda, &ig.phi),
        (&ig.x10, Differential::Create, &ig.phi),
        (&ig.x01, Differential::Annihilate, &ig.psi),
        (&ig.x00, Differential::Time, &ig.phi),
    ];
    for (x, diff, test) in terms {
        if x.is_zero() {
            continue;
        }
        let inc = space.increment(diff, bin, test)?;
        total = &total + &x.at_bin(bin).matmul(&inc);
    }
    Ok(total)
}

/// The Wick integral over `[0, Ω]`.
pub fn wick_integral(space: &WickSpace, ig: &WickIntegrand, omega: f64) -> Result<SparseOperator> {
    let bins = space.grid().cut_index(omega)?;
    let mut total = SparseOperator::zeros(space.dim(), space.dim());
    for j in 0..bins {
        total = &total + &wick_increment(space, ig, j)?;
    }
    Ok(total)
}

/// Matrix-element probe `⟨u ⊗ ε(f)| · |v ⊗ ε(g)⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub u: Vec<C64>,
    pub f: OneParticleVector,
    pub v: Vec<C64>,
    pub g: OneParticleVector,
}

impl Probe {
    fn check(&self, space: &WickSpace) -> Result<()> {
        for x in [&self.u, &self.v] {
            if x.len() != space.initial {
                return Err(Error::DimMismatch { expected: space.initial, got: x.len() });
            }
        }
        Ok(())
    }
}

/// `u ⊗ ε_{≤k}(f)`.
pub fn probe_vector(space: &WickSpace, u: &[C64], f: &OneParticleVector, k: usize) -> Result<Vec<C64>> {
    let e = exponential_from_coeffs(space.basis(), f.coeffs(), k)?;
    Ok(space.embed(u, e.coeffs()))
}

#[allow(clippy::too_many_arguments)]
fn sandwich(space: &WickSpace, op: &SparseOperator, u: &[C64], f: &OneParticleVector, kf: usize, v: &[C64], g: &OneParticleVector, kg: usize) -> Result<C64> {
    let bra = probe_vector(space, u, f, kf)?;
    let ket = probe_vector(space, v, g, kg)?;
    Ok(dot(&bra, &op.apply(&ket)))
}

/// `⟨u⊗ε_{≤K}(f)| X_Ω |v⊗ε_{≤K}(g)⟩` through the assembled integral.
pub fn wick_matrix_element(space: &WickSpace, ig: &WickIntegrand, probe: &Probe, omega: f64, k: usize) -> Result<C64> {
    probe.check(space)?;
    let x = wick_integral(space, ig, omega)?;
    sandwich(space, &x, &probe.u, &probe.f, k, &probe.v, &probe.g, k)
}

/// The same matrix element from per-bin inner products:
/// `Σ_j ⟨X₁₁⟩(f_j|g_j) + ⟨X₁₀⟩(f_j|φ_j) + ⟨X₀₁⟩(ψ_j|g_j) + ⟨X₀₀⟩Δω_j`.
pub fn matrix_element_form(space: &WickSpace, ig: &WickIntegrand, probe: &Probe, omega: f64, k: usize) -> Result<C64> {
    probe.check(space)?;
    ig.check(space)?;
    let grid = space.grid();
    let bins = grid.cut_index(omega)?;
    let km = k.saturating_sub(1);
    let (u, f, v, g) = (&probe.u, &probe.f, &probe.v, &probe.g);
    let mut total = ZERO;
    for j in 0..bins {
        if !ig.x11.is_zero() && k > 0 {
            total += sandwich(space, ig.x11.at_bin(j), u, f, km, v, g, km)? * f.bin_inner(g, j);
        }
        if !ig.x10.is_zero() && k > 0 {
            total += sandwich(space, ig.x10.at_bin(j), u, f, km, v, g, k)? * f.bin_inner(&ig.phi, j);
        }
        if !ig.x01.is_zero() && k > 0 {
            total += sandwich(space, ig.x01.at_bin(j), u, f, k, v, g, km)? * ig.psi.bin_inner(g, j);
        }
        if !ig.x00.is_zero() {
            total += sandwich(space, ig.x00.at_bin(j), u, f, k, v, g, k)? * grid.width(j);
        }
    }
    Ok(total)
}

/// Deviation of the two adjoint conventions from the true adjoint, measured on
/// a probe panel: `max |⟨a|X†-route|b⟩ − conj⟨b|X|a⟩|`. Returns
/// `(adjoint coefficients, displayed form)`.
pub fn adjoint_defect(space: &WickSpace, ig: &WickIntegrand, panel: &[Probe], omega: f64, k: usize) -> Result<(f64, f64)> {
    let x = wick_integral(space, ig, omega)?;
    let adj = wick_integral(space, &ig.adjoint(), omega)?;
    let lit = wick_integral(space, &ig.literal_adjoint(), omega)?;
    let (mut a, mut b): (f64, f64) = (0.0, 0.0);
    for p in panel {
        let forward = sandwich(space, &x, &p.v, &p.g, k, &p.u, &p.f, k)?.conj();
        a = a.max((sandwich(space, &adj, &p.u, &p.f, k, &p.v, &p.g, k)? - forward).norm());
        b = b.max((sandwich(space, &lit, &p.u, &p.f, k, &p.v, &p.g, k)? - forward).norm());
    }
    Ok((a, b))
}

/// Deterministic panel: `u, v` basis vectors of `H₀`, `f, g` sampled from
/// `a·{1, ω/ω_max, (ω/ω_max)²}`.
pub fn default_panel(space: &WickSpace, amplitude: f64) -> Vec<Probe> {
    let grid = space.grid();
    let top = grid.omega_max();
    let polys: Vec<OneParticleVector> = (0..3)
        .map(|p| OneParticleVector::sample_scalar(grid, |w| C64::new(amplitude * (w / top).powi(p), 0.0)))
        .collect();
    let unit = |i: usize| {
        let mut e = vec![ZERO; space.initial];
        e[i] = ONE;
        e
    };
    let last = space.initial - 1;
    let mut panel = Vec::new();
    for (a, f) in polys.iter().enumerate() {
        for (b, g) in polys.iter().enumerate() {
            let (u, v) = if (a + b) % 2 == 0 { (unit(0), unit(0)) } else { (unit(0), unit(last)) };
            panel.push(Probe { u, f: f.clone(), v, g: g.clone() });
        }
    }
    panel
}

/// Seeded probes with random unit `u, v` and random `f, g` of norm `scale`.
pub fn random_panel<R: Rng + ?Sized>(space: &WickSpace, rng: &mut R, count: usize, scale: f64) -> Vec<Probe> {
    let d = space.grid().mode_count();
    let unit = |rng: &mut R| {
        let x: Vec<C64> = (0..space.initial).map(|_| random_complex(rng)).collect();
        let n = vec_norm(&x);
        x.into_iter().map(|z| z / n).collect::<Vec<_>>()
    };
    let vector = |rng: &mut R| {
        let x: Vec<C64> = (0..d).map(|_| random_complex(rng)).collect();
        OneParticleVector::from_coeffs(space.grid(), x).unwrap().normalized().scaled(C64::new(scale, 0.0))
    };
    (0..count)
        .map(|_| Probe { u: unit(rng), f: vector(rng), v: unit(rng), g: vector(rng) })
        .collect()
}

/// What a product of two differentials reduces to in the Itô table
/// (row uses `ψ`, column uses `φ`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TableEntry {
    Zero,
    Lambda,
    Create,
    Annihilate,
    /// `(ψ_ω|φ_ω) dω`.
    Pairing,
}

pub fn ito_table(row: Differential, col: Differential) -> TableEntry {
    use Differential::*;
    match (row, col) {
        (Lambda, Lambda) => TableEntry::Lambda,
        (Lambda, Create) => TableEntry::Create,
        (Annihilate, Lambda) => TableEntry::Annihilate,
        (Annihilate, Create) => TableEntry::Pairing,
        _ => TableEntry::Zero,
    }
}

/// All ordered pairs whose table entry is zero.
pub fn null_pairs() -> Vec<(Differential, Differential)> {
    Differential::ALL
        .into_iter()
        .flat_map(|r| Differential::ALL.into_iter().map(move |c| (r, c)))
        .filter(|&(r, c)| ito_table(r, c) == TableEntry::Zero)
        .collect()
}

/// States used to probe an increment product.
#[derive(Clone, Debug, PartialEq)]
pub enum ItoProbe {
    /// `⟨Φ| · |ε(g)⟩`.
    VacuumBra(OneParticleVector),
    /// `⟨ε(f)| · |Φ⟩`.
    VacuumKet(OneParticleVector),
    /// `⟨Φ + f| · |Φ + g⟩` with `f, g` one-particle vectors.
    OneParticle(OneParticleVector, OneParticleVector),
    /// `⟨ε(f)| · |ε(g)⟩ / ⟨ε(f)|ε(g)⟩`, evaluated on the bin-local factor.
    Coherent(OneParticleVector, OneParticleVector),
}

/// The probe on which a table entry holds with no remainder, if any.
pub fn exact_probe(row: Differential, col: Differential, f: &OneParticleVector, g: &OneParticleVector) -> Option<ItoProbe> {
    use Differential::*;
    match (row, col) {
        (Lambda, Lambda) => Some(ItoProbe::OneParticle(f.clone(), g.clone())),
        (Lambda, Create) | (_, Annihilate) => Some(ItoProbe::VacuumKet(f.clone())),
        (Annihilate, Lambda) | (Annihilate, Create) | (Create, _) => Some(ItoProbe::VacuumBra(g.clone())),
        _ => None,
    }
}

/// Empirical probe of `ΔRow_j·ΔCol_j` and the value the table predicts.
pub fn ito_table_probe(
    space: &WickSpace,
    row: Differential,
    col: Differential,
    bin: usize,
    phi: &OneParticleVector,
    psi: &OneParticleVector,
    probe: &ItoProbe,
) -> Result<(C64, C64)> {
    let grid = space.grid();
    if bin >= grid.bin_count() {
        return Err(Error::InvalidDifferential(format!("bin {bin} outside grid")));
    }
    let (f, g) = match probe {
        ItoProbe::VacuumBra(g) => (None, Some(g)),
        ItoProbe::VacuumKet(f) => (Some(f), None),
        ItoProbe::OneParticle(f, g) | ItoProbe::Coherent(f, g) => (Some(f), Some(g)),
    };
    // expectation of a single increment, from per-bin inner products
    let expect = |entry: TableEntry| -> C64 {
        let fg = |a: Option<&OneParticleVector>, b: Option<&OneParticleVector>| match (a, b) {
            (Some(a), Some(b)) => a.bin_inner(b, bin),
            _ => ZERO,
        };
        let scalar = match probe {
            ItoProbe::OneParticle(f, g) => ONE + f.inner(g).unwrap_or(ZERO),
            _ => ONE,
        };
        match entry {
            TableEntry::Zero => ZERO,
            TableEntry::Lambda => fg(f, g),
            TableEntry::Create => fg(f, Some(phi)),
            TableEntry::Annihilate => fg(Some(psi), g),
            TableEntry::Pairing => psi.bin_inner(phi, bin) * scalar,
        }
    };
    let predicted = expect(ito_table(row, col));

    let empirical = match probe {
        ItoProbe::Coherent(f, g) => coherent_probe(grid, bin, row, col, phi, psi, f, g)?,
        _ => {
            let r = space.local_increment(row, bin, psi)?;
            let c = space.local_increment(col, bin, phi)?;
            let basis = space.basis();
            let vacuum = FockVector::vacuum(basis);
            // Φ + f is the exponential vector cut at grade one
            let top = if matches!(probe, ItoProbe::OneParticle(..)) { 1 } else { basis.truncation() };
            let state = |x: Option<&OneParticleVector>| match x {
                None => Ok(vacuum.clone()),
                Some(x) => exponential_from_coeffs(basis, x.coeffs(), top),
            };
            let bra = state(f)?;
            let ket = state(g)?;
            bra.inner(&ket.apply(&c).apply(&r))
        }
    };
    Ok((empirical, predicted))
}

/// Normalized coherent expectation of `ΔRow·ΔCol` on the factor of bin `j`.
/// Exponential vectors factorize over bins and the increments act on bin `j`
/// alone, so the other factors cancel in the ratio.
#[allow(clippy::too_many_arguments)]
fn coherent_probe(
    grid: &SpectralGrid,
    bin: usize,
    row: Differential,
    col: Differential,
    phi: &OneParticleVector,
    psi: &OneParticleVector,
    f: &OneParticleVector,
    g: &OneParticleVector,
) -> Result<C64> {
    let d = grid.internal_dims()[bin];
    let mut cutoff = COHERENT_CUTOFF;
    let basis = loop {
        match FockBasis::new(Statistics::Bose, d, cutoff) {
            Ok(b) => break Arc::new(b),
            Err(e) if cutoff <= 4 => return Err(e),
            Err(_) => cutoff /= 2,
        }
    };
    let local = |diff: Differential, test: &OneParticleVector| -> Result<SparseOperator> {
        Ok(match diff {
            Differential::Lambda => basis.number_operator(),
            Differential::Create => field_from_coeffs(&basis, FieldKind::Creation, test.bin(bin))?,
            Differential::Annihilate => field_from_coeffs(&basis, FieldKind::Annihilation, test.bin(bin))?,
            Differential::Time => SparseOperator::identity(basis.dim()).scaled_real(grid.width(bin)),
        })
    };
    let r = local(row, psi)?;
    let c = local(col, phi)?;
    let ef = exponential_from_coeffs(&basis, f.bin(bin), cutoff)?;
    let eg = exponential_from_coeffs(&basis, g.bin(bin), cutoff)?;
    Ok(ef.inner(&eg.apply(&c).apply(&r)) / ef.inner(&eg))
}

/// Result of [`ito_correction_defect`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CorrectionReport {
    /// `‖X_ΩY_Ω − ΣX_jΔY_j − ΣΔX_jY_j − ΣΔX_jΔY_j‖`.
    pub abel: f64,
    /// Largest `|measured − predicted|` over the panel.
    pub deviation: f64,
    /// Largest `|measured|` over the panel.
    pub measured: f64,
}

/// Compares the measured product correction
/// `⟨X_ΩY_Ω − ΣXΔY − ΣΔX·Y⟩` with the table prediction
/// `Σ_j ⟨X₁₁Y₁₁⟩(f_j|g_j) + ⟨X₁₁Y₁₀⟩(f_j|φ^Y_j) + ⟨X₀₁Y₁₁⟩(ψ^X_j|g_j) + ⟨X₀₁Y₁₀⟩(ψ^X_j|φ^Y_j)`.
pub fn ito_correction_defect(
    space: &WickSpace,
    x: &WickIntegrand,
    y: &WickIntegrand,
    panel: &[Probe],
    omega: f64,
    k: usize,
) -> Result<CorrectionReport> {
    x.check(space).map_err(|e| Error::RefinementMismatch(e.to_string()))?;
    y.check(space).map_err(|e| Error::RefinementMismatch(e.to_string()))?;
    let bins = space.grid().cut_index(omega)?;
    let dim = space.dim();
    let mut xs = SparseOperator::zeros(dim, dim);
    let mut ys = SparseOperator::zeros(dim, dim);
    let mut riemann = SparseOperator::zeros(dim, dim);
    let mut second = SparseOperator::zeros(dim, dim);
    for j in 0..bins {
        let dx = wick_increment(space, x, j)?;
        let dy = wick_increment(space, y, j)?;
        riemann = &(&riemann + &xs.matmul(&dy)) + &dx.matmul(&ys);
        second = &second + &dx.matmul(&dy);
        xs = &xs + &dx;
        ys = &ys + &dy;
    }
    let product = xs.matmul(&ys);
    let abel = (&(&product - &riemann) - &second).norm();
    let measured_op = &product - &riemann;

    let km = k.saturating_sub(1);
    let mut report = CorrectionReport { abel, ..Default::default() };
    for p in panel {
        p.check(space)?;
        let measured = sandwich(space, &measured_op, &p.u, &p.f, k, &p.v, &p.g, k)?;
        let mut predicted = ZERO;
        for j in 0..bins {
            let (x11, x01) = (x.x11.at_bin(j), x.x01.at_bin(j));
            let (y11, y10) = (y.x11.at_bin(j), y.x10.at_bin(j));
            if k > 0 {
                if !x.x11.is_zero() && !y.x11.is_zero() {
                    predicted += sandwich(space, &x11.matmul(y11), &p.u, &p.f, km, &p.v, &p.g, km)? * p.f.bin_inner(&p.g, j);
                }
                if !x.x11.is_zero() && !y.x10.is_zero() {
                    predicted += sandwich(space, &x11.matmul(y10), &p.u, &p.f, km, &p.v, &p.g, k)? * p.f.bin_inner(&y.phi, j);
                }
                if !x.x01.is_zero() && !y.x11.is_zero() {
                    predicted += sandwich(space, &x01.matmul(y11), &p.u, &p.f, k, &p.v, &p.g, km)? * x.psi.bin_inner(&p.g, j);
                }
            }
            if !x.x01.is_zero() && !y.x10.is_zero() {
                predicted += sandwich(space, &x01.matmul(y10), &p.u, &p.f, k, &p.v, &p.g, k)? * x.psi.bin_inner(&y.phi, j);
            }
        }
        report.deviation = report.deviation.max((measured - predicted).norm());
        report.measured = report.measured.max(measured.norm());
    }
    Ok(report)
}

/// `(‖X_Ω u⊗ε(f)‖², discretized right side of the growth estimate)`.
///
/// The right side is
/// `Σ_j w_j [3‖f_j‖²A₁₁ + 3‖φ_j‖²A₁₀ + ‖ψ_j‖²A₀₁ + Δω_j A₀₀]` with
/// `A_ab = ‖X_ab(ω_j) u⊗ε(f)‖²` and
/// `w_j = exp(Ω − ω_j + 3Σ_{i ≥ j} ‖f_i‖²)`, `ω_j` the left edge.
pub fn estimate_bound_check(space: &WickSpace, ig: &WickIntegrand, u: &[C64], f: &OneParticleVector, omega: f64) -> Result<(f64, f64)> {
    ig.check(space)?;
    if u.len() != space.initial {
        return Err(Error::DimMismatch { expected: space.initial, got: u.len() });
    }
    let grid = space.grid();
    let bins = grid.cut_index(omega)?;
    let state = probe_vector(space, u, f, space.truncation())?;
    let x = wick_integral(space, ig, omega)?;
    let lhs = vec_norm(&x.apply(&state)).powi(2);
    let sq = |op: &SparseOperator| vec_norm(&op.apply(&state)).powi(2);
    let mut rhs = 0.0;
    for j in 0..bins {
        let tail: f64 = (j..bins).map(|i| f.bin_norm_sqr(i)).sum();
        let w = (omega - grid.left_edge(j) + 3.0 * tail).exp();
        let term = 3.0 * f.bin_norm_sqr(j) * sq(ig.x11.at_bin(j))
            + 3.0 * ig.phi.bin_norm_sqr(j) * sq(ig.x10.at_bin(j))
            + ig.psi.bin_norm_sqr(j) * sq(ig.x01.at_bin(j))
            + grid.width(j) * sq(ig.x00.at_bin(j));
        rhs += w * term;
    }
    Ok((lhs, rhs))
}

/// Random adapted step process: each piece is `A⊗1 + a·B⁺_χ(Ω_k) + b·B⁻_χ(Ω_k)
/// + c·Λ(Ω_k)` at its start `Ω_k`, with `A` a random initial-space matrix.
pub fn random_step_process<R: Rng + ?Sized>(space: &WickSpace, rng: &mut R, pieces: usize) -> Result<AdaptedStepProcess> {
    let grid = space.grid();
    let n = grid.bin_count();
    let pieces = pieces.clamp(1, n);
    let mut starts: Vec<usize> = vec![0];
    while starts.len() < pieces {
        let s = rng.gen_range(1..n);
        if !starts.contains(&s) {
            starts.push(s);
        }
    }
    starts.sort_unstable();
    let mut ops = Vec::with_capacity(pieces);
    for &s in &starts {
        let cut = grid.edges()[s];
        let chi: Vec<C64> = (0..grid.mode_count()).map(|_| random_complex(rng)).collect();
        let chi = OneParticleVector::from_coeffs(grid, chi)?;
        let a = space.initial_operator(&random_matrix(rng, space.initial));
        let up = space.process(ProcessKind::Create, Some(&chi), cut)?;
        let down = space.process(ProcessKind::Annihilate, Some(&chi), cut)?;
        let lam = space.process(ProcessKind::Conserve, None, cut)?;
        let op = a
            .add_scaled(&up, random_complex(rng))
            .add_scaled(&down, random_complex(rng))
            .add_scaled(&lam, random_complex(rng));
        ops.push(op);
    }
    let breakpoints: Vec<f64> = starts.iter().map(|&s| grid.edges()[s]).collect();
    AdaptedStepProcess::new(space, &breakpoints, ops)
}

/// Random integrand with random step coefficients and test vectors.
pub fn random_integrand<R: Rng + ?Sized>(space: &WickSpace, rng: &mut R, pieces: usize) -> Result<WickIntegrand> {
    let d = space.grid().mode_count();
    let x11 = random_step_process(space, rng, pieces)?;
    let x10 = random_step_process(space, rng, pieces)?;
    let x01 = random_step_process(space, rng, pieces)?;
    let x00 = random_step_process(space, rng, pieces)?;
    let phi = OneParticleVector::from_coeffs(space.grid(), (0..d).map(|_| random_complex(rng)).collect())?;
    let psi = OneParticleVector::from_coeffs(space.grid(), (0..d).map(|_| random_complex(rng)).collect())?;
    Ok(WickIntegrand { x11, x10, x01, x00, phi, psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn space(bins: usize, m: usize, initial: usize) -> WickSpace {
        let g = Arc::new(SpectralGrid::uniform(2.0, bins, 1).unwrap());
        WickSpace::build(&g, m, initial).unwrap()
    }

    #[test]
    fn scalar_and_annihilation_integrals() {
        let s = space(4, 2, 1);
        let ig = WickIntegrand::single(&s, Differential::Time, AdaptedStepProcess::identity(&s), &OneParticleVector::zeros(s.grid()));
        let x = wick_integral(&s, &ig, 1.5).unwrap();
        assert!((&x - &s.identity().scaled_real(1.5)).max_abs() < 1e-15);

        let psi = OneParticleVector::sample_scalar(s.grid(), |w| C64::new(w, 0.3));
        let ig = WickIntegrand::single(&s, Differential::Annihilate, AdaptedStepProcess::identity(&s), &psi);
        let x = wick_integral(&s, &ig, 1.0).unwrap();
        let b = s.process(ProcessKind::Annihilate, Some(&psi), 1.0).unwrap();
        assert!((&x - &b).max_abs() < 1e-15);
        assert!(wick_integral(&s, &ig, 0.7).is_err());
    }

    #[test]
    fn misadapted_piece_rejected() {
        let s = space(4, 2, 1);
        let above = s.process(ProcessKind::Create, Some(&OneParticleVector::unit(s.grid(), 3)), 2.0).unwrap();
        let r = AdaptedStepProcess::new(&s, &[0.0, 1.0], vec![s.identity(), above]);
        assert!(matches!(r, Err(Error::AdaptednessViolation { piece: 1, .. })));
        let r = AdaptedStepProcess::new(&s, &[0.3], vec![s.identity()]);
        assert!(matches!(r, Err(Error::MisalignedCut(_))));
        let r = AdaptedStepProcess::new(&s, &[1.0], vec![s.identity()]);
        assert!(matches!(r, Err(Error::RefinementMismatch(_))));
    }

    #[test]
    fn routes_agree_for_identity_coefficients() {
        let s = space(4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let id = AdaptedStepProcess::identity(&s);
        let d = s.grid().mode_count();
        let phi = OneParticleVector::from_coeffs(s.grid(), crate::linalg::random_vector(&mut rng, d)).unwrap();
        let psi = OneParticleVector::from_coeffs(s.grid(), crate::linalg::random_vector(&mut rng, d)).unwrap();
        let ig = WickIntegrand { x11: id.clone(), x10: id.clone(), x01: id.clone(), x00: id, phi, psi };
        for p in default_panel(&s, 0.6) {
            for k in 0..=2 {
                let a = wick_matrix_element(&s, &ig, &p, 2.0, k).unwrap();
                let b = matrix_element_form(&s, &ig, &p, 2.0, k).unwrap();
                assert!((a - b).norm() < 1e-12, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn routes_agree_for_random_adapted_coefficients() {
        let s = space(4, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ig = random_integrand(&s, &mut rng, 3).unwrap();
        for p in random_panel(&s, &mut rng, 4, 0.8) {
            // coefficients raise particle number by at most one
            let a = wick_matrix_element(&s, &ig, &p, 2.0, 2).unwrap();
            let b = matrix_element_form(&s, &ig, &p, 2.0, 2).unwrap();
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn vacuum_probes_keep_only_time_term() {
        let s = space(4, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ig = random_integrand(&s, &mut rng, 2).unwrap();
        let zero = OneParticleVector::zeros(s.grid());
        let p = Probe { u: vec![c(1.0)], f: zero.clone(), v: vec![c(1.0)], g: zero };
        let full = matrix_element_form(&s, &ig, &p, 2.0, 1).unwrap();
        let only = WickIntegrand { x00: ig.x00.clone(), ..WickIntegrand::zero(&s) };
        let time = matrix_element_form(&s, &only, &p, 2.0, 1).unwrap();
        assert!((full - time).norm() < 1e-14);
    }

    #[test]
    fn table_shape() {
        assert_eq!(null_pairs().len(), 12);
        assert_eq!(ito_table(Differential::Annihilate, Differential::Create), TableEntry::Pairing);
        assert_eq!(Differential::parse("dB-").unwrap(), Differential::Annihilate);
        assert!(Differential::parse("dX").is_err());
    }

    #[test]
    fn pairing_entry_example() {
        // ψ = φ = 1 on a grid with Δω = 0.5
        let g = Arc::new(SpectralGrid::uniform(2.0, 4, 1).unwrap());
        let s = WickSpace::build(&g, 3, 1).unwrap();
        let one = OneParticleVector::sample_scalar(&g, |_| c(1.0));
        let probe = ItoProbe::VacuumBra(OneParticleVector::zeros(&g));
        let (emp, pred) = ito_table_probe(&s, Differential::Annihilate, Differential::Create, 1, &one, &one, &probe).unwrap();
        assert!((emp - c(0.5)).norm() < 1e-15);
        assert!((pred - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn exact_entries_on_their_probes() {
        let g = Arc::new(SpectralGrid::build(2.0, 4, &[1, 2, 1, 2]).unwrap());
        let s = WickSpace::build(&g, 3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = g.mode_count();
        let mut vec = || OneParticleVector::from_coeffs(&g, crate::linalg::random_vector(&mut rng, d)).unwrap();
        let (phi, psi, f, gg) = (vec(), vec(), vec(), vec());
        for row in Differential::ALL {
            for col in Differential::ALL {
                let Some(probe) = exact_probe(row, col, &f, &gg) else { continue };
                for bin in 0..4 {
                    let (e, p) = ito_table_probe(&s, row, col, bin, &phi, &psi, &probe).unwrap();
                    assert!((e - p).norm() < 1e-12, "{row:?} {col:?} bin {bin}: {e} vs {p}");
                }
            }
        }
    }

    #[test]
    fn abel_identity_is_exact() {
        let s = space(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_integrand(&s, &mut rng, 2).unwrap();
        let y = random_integrand(&s, &mut rng, 2).unwrap();
        let r = ito_correction_defect(&s, &x, &y, &default_panel(&s, 0.5), 2.0, 1).unwrap();
        assert!(r.abel < 1e-12, "{r:?}");
    }

    #[test]
    fn estimate_trivial_cases() {
        let s = space(4, 2, 1);
        let u = vec![c(1.0)];
        let zero = OneParticleVector::zeros(s.grid());
        let (l, r) = estimate_bound_check(&s, &WickIntegrand::zero(&s), &u, &zero, 2.0).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let ig = WickIntegrand::single(&s, Differential::Time, AdaptedStepProcess::identity(&s), &zero);
        let (l, r) = estimate_bound_check(&s, &ig, &u, &zero, 2.0).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
        assert!(r >= l);
    }

    #[test]
    fn adjoint_conventions() {
        let s = space(4, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ig = random_integrand(&s, &mut rng, 2).unwrap();
        let (conv, lit) = adjoint_defect(&s, &ig, &default_panel(&s, 0.5), 2.0, 2).unwrap();
        assert!(conv < 1e-10, "{conv}");
        assert!(lit > 1e-3, "{lit}");
    }
}
