use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::{Format, SuiteConfig};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Compared against `tolerance`.
    pub defects: Vec<Measurement>,
    /// Reported only.
    pub observations: Vec<Measurement>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(name: &str, parameters: BTreeMap<String, serde_json::Value>, defects: Vec<Measurement>, observations: Vec<Measurement>, tolerance: f64) -> Self {
        let pass = defects.iter().all(|d| d.value <= tolerance);
        Self { name: name.to_string(), parameters, defects, observations, tolerance, pass }
    }

    pub fn worst(&self) -> f64 {
        self.defects.iter().map(|d| d.value).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub delta_omega: f64,
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSeries {
    pub check: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub points: Vec<ConvergencePoint>,
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    pub expected_min: f64,
    pub expected_max: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: SuiteConfig,
    pub checks: Vec<CheckResult>,
    pub convergence: Vec<ConvergenceSeries>,
}

impl Report {
    pub fn new(config: SuiteConfig) -> Self {
        Self { schema_version: SCHEMA_VERSION, config, checks: Vec::new(), convergence: Vec::new() }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.convergence.iter().all(|s| s.pass)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17::default());
        self.serialize(&mut ser)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "N", "delta_omega", "defect", "tolerance", "pass"]).map_err(csv_err)?;
        let n = match self.config.bins {
            super::config::Bins::One(n) => n.to_string(),
            super::config::Bins::Sweep(_) => String::new(),
        };
        let width = match self.config.bins {
            super::config::Bins::One(n) => sig17(self.config.omega_max / n as f64),
            super::config::Bins::Sweep(_) => String::new(),
        };
        for c in &self.checks {
            w.write_record([c.name.as_str(), &n, &width, &sig17(c.worst()), &sig17(c.tolerance), bool_str(c.pass)])
                .map_err(csv_err)?;
        }
        for s in &self.convergence {
            for p in &s.points {
                w.write_record([
                    s.check.as_str(),
                    &p.n.to_string(),
                    &sig17(p.delta_omega),
                    &sig17(p.defect),
                    "",
                    bool_str(s.pass),
                ])
                .map_err(csv_err)?;
            }
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()).into())
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    pub fn write(&self, format: Format, path: &Path) -> Result<()> {
        std::fs::write(path, self.render(format)?)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    io::Error::other(e.to_string()).into()
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Seventeen significant digits in scientific notation.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with floats written by [`sig17`].
#[derive(Default)]
struct Sig17 {
    inner: PrettyFormatter<'static>,
}

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(sig17(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_check() -> Report {
        let mut r = Report::new(SuiteConfig::default());
        let d = vec![Measurement { name: "x".into(), value: 0.1 }];
        r.checks.push(CheckResult::new("demo", BTreeMap::new(), d, Vec::new(), 1e-10));
        r
    }

    #[test]
    fn empty_report_is_valid() {
        let r = Report::new(SuiteConfig::default());
        let v: serde_json::Value = serde_json::from_slice(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["checks"], serde_json::json!([]));
        assert_eq!(v["convergence"], serde_json::json!([]));
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 4);
        assert_eq!(r.to_csv().unwrap(), b"check,N,delta_omega,defect,tolerance,pass\n");
    }

    #[test]
    fn one_row_and_seventeen_digits() {
        let r = one_check();
        let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "demo,8,1.2500000000000000e-1,1.0000000000000001e-1,1.0000000000000000e-10,false");
        let json = String::from_utf8(r.to_json().unwrap()).unwrap();
        assert!(json.contains("1.0000000000000001e-1"));
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["checks"][0]["defects"][0]["value"].as_f64(), Some(0.1));
        assert!(!r.pass());
    }

    #[test]
    fn key_order_is_stable() {
        let json = String::from_utf8(one_check().to_json().unwrap()).unwrap();
        let at = |k: &str| json.find(k).unwrap();
        assert!(at("\"schema_version\"") < at("\"config\""));
        assert!(at("\"config\"") < at("\"checks\""));
        assert!(at("\"checks\"") < at("\"convergence\""));
    }
}
