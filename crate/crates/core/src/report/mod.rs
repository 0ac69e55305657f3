//! Configuration, orchestration, slope fitting and report files for the
//! command-line tool.

pub mod config;
pub mod emit;
pub mod fit;
pub mod suite;

pub use config::{Bins, Format, InternalDims, SuiteConfig};
pub use emit::{CheckResult, ConvergencePoint, ConvergenceSeries, Measurement, Report};
pub use fit::{fit_slope, SlopeFit};
pub use suite::{run_converge, run_ito_table, run_verify, run_xi};
