use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{fock_dimension, Statistics, DEFAULT_DIM_CAP};
use crate::grid::SpectralGrid;

/// A single bin count or a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bins {
    One(usize),
    Sweep(Vec<usize>),
}

/// One internal dimension for every bin, or one per bin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InternalDims {
    Uniform(usize),
    PerBin(Vec<usize>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub omega_max: f64,
    pub bins: Bins,
    pub internal_dims: InternalDims,
    pub truncation: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Empty means every check of the subcommand.
    pub checks: Vec<String>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            omega_max: 1.0,
            bins: Bins::One(8),
            internal_dims: InternalDims::Uniform(1),
            truncation: 3,
            seed: 42,
            tolerance: 1e-10,
            checks: Vec::new(),
            out: None,
            format: Format::Json,
        }
    }
}

/// Bin counts swept by `converge` when none are given.
pub const DEFAULT_SWEEP: [usize; 4] = [4, 8, 16, 32];
/// Truncation used by `converge` when none is given.
pub const DEFAULT_SWEEP_TRUNCATION: usize = 2;

impl SuiteConfig {
    pub fn converge_default() -> Self {
        Self { bins: Bins::Sweep(DEFAULT_SWEEP.to_vec()), truncation: DEFAULT_SWEEP_TRUNCATION, ..Self::default() }
    }

    /// Reads a JSON file with the same keys as the flags; absent keys keep
    /// the values of `base`.
    pub fn from_file(path: &Path, base: &SuiteConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut merged = serde_json::to_value(base)?;
        let overlay: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let serde_json::Value::Object(fields) = overlay else {
            return Err(Error::ConfigInvalid("config file must hold a JSON object".into()));
        };
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in fields {
            target.insert(k, v);
        }
        let mut cfg: SuiteConfig =
            serde_json::from_value(merged).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        if cfg.out.is_none() {
            cfg.out = base.out.clone();
        }
        Ok(cfg)
    }

    pub fn bin_counts(&self) -> Vec<usize> {
        match &self.bins {
            Bins::One(n) => vec![*n],
            Bins::Sweep(v) => v.clone(),
        }
    }

    fn dims_for(&self, bins: usize) -> Result<Vec<usize>> {
        match &self.internal_dims {
            InternalDims::Uniform(d) => Ok(vec![*d; bins]),
            InternalDims::PerBin(v) if v.len() == bins => Ok(v.clone()),
            InternalDims::PerBin(v) => Err(Error::ConfigInvalid(format!(
                "{} internal dimensions for {bins} bins",
                v.len()
            ))),
        }
    }

    /// Grid with `bins` equal bins on `[0, omega_max]`.
    pub fn grid(&self, bins: usize) -> Result<Arc<SpectralGrid>> {
        let dims = self.dims_for(bins)?;
        SpectralGrid::build(self.omega_max, bins, &dims)
            .map(Arc::new)
            .map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    fn validate_common(&self, known: &[&str]) -> Result<()> {
        if !(self.omega_max.is_finite() && self.omega_max > 0.0) {
            return Err(Error::ConfigInvalid(format!("omega_max must be positive, got {}", self.omega_max)));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::ConfigInvalid(format!("tolerance must be non-negative, got {}", self.tolerance)));
        }
        if self.truncation == 0 {
            return Err(Error::ConfigInvalid("truncation must be at least 1".into()));
        }
        for c in &self.checks {
            if !known.contains(&c.as_str()) {
                return Err(Error::ConfigInvalid(format!("unknown check `{c}`; known: {}", known.join(", "))));
            }
        }
        for n in self.bin_counts() {
            if n == 0 {
                return Err(Error::ConfigInvalid("bins must be positive".into()));
            }
            let dims = self.dims_for(n)?;
            if dims.contains(&0) {
                return Err(Error::ConfigInvalid("internal dimensions must be positive".into()));
            }
            let modes: usize = dims.iter().sum();
            match fock_dimension(Statistics::Bose, modes, self.truncation) {
                Some(dim) if dim <= DEFAULT_DIM_CAP => {}
                Some(dim) => return Err(Error::SizeOverflow { size: dim, cap: DEFAULT_DIM_CAP }),
                None => return Err(Error::SizeOverflow { size: usize::MAX, cap: DEFAULT_DIM_CAP }),
            }
        }
        Ok(())
    }

    /// Checks for a `verify` run: one bin count.
    pub fn validate_verify(&self, known: &[&str]) -> Result<usize> {
        self.validate_common(known)?;
        match self.bin_counts().as_slice() {
            [n] => Ok(*n),
            _ => Err(Error::ConfigInvalid("verify takes a single bin count".into())),
        }
    }

    /// Checks for a `converge` run: at least three strictly increasing bin
    /// counts and a uniform internal dimension.
    pub fn validate_converge(&self, known: &[&str]) -> Result<Vec<usize>> {
        self.validate_common(known)?;
        let counts = self.bin_counts();
        if counts.len() < 3 {
            return Err(Error::ConfigInvalid("converge needs at least three bin counts".into()));
        }
        if counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConfigInvalid("bin counts must increase strictly".into()));
        }
        if matches!(self.internal_dims, InternalDims::PerBin(_)) {
            return Err(Error::ConfigInvalid("converge needs a uniform internal dimension".into()));
        }
        if self.truncation < 2 {
            return Err(Error::ConfigInvalid("converge needs truncation at least 2".into()));
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_values_fill_in_and_unknown_keys_fail() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"bins": [4, 8, 16], "seed": 7}}"#).unwrap();
        let cfg = SuiteConfig::from_file(f.path(), &SuiteConfig::default()).unwrap();
        assert_eq!(cfg.bins, Bins::Sweep(vec![4, 8, 16]));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.truncation, 3);

        let mut g = tempfile::NamedTempFile::new().unwrap();
        write!(g, r#"{{"bogus": 1}}"#).unwrap();
        assert!(matches!(SuiteConfig::from_file(g.path(), &SuiteConfig::default()), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn validation() {
        let known = ["a"];
        let zero = SuiteConfig { bins: Bins::One(0), ..Default::default() };
        assert!(matches!(zero.validate_verify(&known), Err(Error::ConfigInvalid(_))));
        let bad = SuiteConfig { checks: vec!["b".into()], ..Default::default() };
        assert!(bad.validate_verify(&known).is_err());
        let huge = SuiteConfig { bins: Bins::One(200), truncation: 6, ..Default::default() };
        assert!(matches!(huge.validate_verify(&known), Err(Error::SizeOverflow { .. })));
        let dims = SuiteConfig { internal_dims: InternalDims::PerBin(vec![1, 2]), ..Default::default() };
        assert!(dims.validate_verify(&known).is_err());
        assert_eq!(SuiteConfig::default().validate_verify(&known).unwrap(), 8);
        let two = SuiteConfig { bins: Bins::Sweep(vec![4, 8]), ..SuiteConfig::converge_default() };
        assert!(two.validate_converge(&known).is_err());
        assert!(SuiteConfig::converge_default().validate_converge(&known).is_ok());
    }
}
