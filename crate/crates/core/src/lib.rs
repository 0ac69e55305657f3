//! Truncated Fock-space laboratory for frequency-indexed quantum stochastic
//! calculus.
//!
//! The one-particle space `h = ∫⊕ k_ω dω` is cut into frequency bins
//! ([`grid`]); Bose and Fermi Fock spaces over the resulting modes are
//! enumerated with a particle-number cutoff ([`fock`]). On top of that sit the
//! spectral processes and the discrete Jordan–Wigner construction
//! ([`processes`]), Wick integrals and the Itô table ([`wick`]), the
//! boson-to-fermion map ([`unification`]), and the verification suite behind
//! the command-line tool ([`report`]).

pub mod error;
pub mod fock;
pub mod grid;
pub mod linalg;
pub mod processes;
pub mod report;
pub mod sparse;
pub mod unification;
pub mod wick;

pub use error::{Error, Result};
pub use fock::{FieldKind, FockBasis, FockVector, Statistics};
pub use grid::{OneParticleHamiltonian, OneParticleVector, SpectralGrid, SpectralWindow};
pub use num_complex::Complex64 as C64;
pub use sparse::SparseOperator;
