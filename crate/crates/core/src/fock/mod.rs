//! Truncated Bose and Fermi Fock spaces over the grid modes.

mod basis;
mod expvec;
mod factorize;
mod fields;
pub mod oracle;

mod second_quant;

pub use basis::{fock_dimension, grade_dimension, FockBasis, FockVector, Statistics, DEFAULT_DIM_CAP};
pub use expvec::{exp_tail_bound, exponential_from_coeffs, exponential_vector, partial_exp};
pub use factorize::{split_intertwining_defect, SplitIsomorphism};
pub use fields::{field_from_coeffs, field_operator, mode_annihilation, mode_creation, FieldKind};
pub use second_quant::{diff_second_quantize, second_quantize};
