use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use spectral_wick::report::{self, Bins, Format, InternalDims, Report, SuiteConfig};
use spectral_wick::Error;

#[derive(Parser)]
#[command(name = "spectral-wick", version, about = "Verification suite for frequency-indexed quantum stochastic calculus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-identity checks at one grid size.
    Verify(Flags),
    /// Sweep bin counts and fit convergence slopes.
    Converge(Flags),
    /// Probe every product of two differentials.
    ItoTable(Flags),
    /// Run the boson-to-fermion map checks.
    Xi(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// JSON file with the same keys as these flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bin count, or a comma-separated sweep.
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<usize>>,
    #[arg(long)]
    omega_max: Option<f64>,
    /// One value for every bin, or one per bin (comma-separated).
    #[arg(long, value_delimiter = ',')]
    internal_dims: Option<Vec<usize>>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Comma-separated check names; all when omitted.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Flags {
    fn resolve(&self, base: SuiteConfig) -> Result<SuiteConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => SuiteConfig::from_file(path, &base)?,
            None => base,
        };
        if let Some(b) = &self.bins {
            cfg.bins = match b.as_slice() {
                [n] => Bins::One(*n),
                _ => Bins::Sweep(b.clone()),
            };
        }
        if let Some(d) = &self.internal_dims {
            cfg.internal_dims = match d.as_slice() {
                [n] => InternalDims::Uniform(*n),
                _ => InternalDims::PerBin(d.clone()),
            };
        }
        if let Some(w) = self.omega_max {
            cfg.omega_max = w;
        }
        if let Some(m) = self.truncation {
            cfg.truncation = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = t;
        }
        if let Some(c) = &self.checks {
            cfg.checks = c.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        Ok(cfg)
    }
}

fn summarize(report: &Report) {
    for c in &report.checks {
        let mark = if c.pass { "pass" } else { "FAIL" };
        eprintln!("{mark}  {:<28} worst defect {:.3e} (tolerance {:.1e})", c.name, c.worst(), c.tolerance);
    }
    for s in &report.convergence {
        let mark = if s.pass { "pass" } else { "FAIL" };
        let slope = s.slope.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let band = match s.expected_max {
            Some(hi) => format!("[{}, {}]", s.expected_min, hi),
            None => format!(">= {}", s.expected_min),
        };
        eprintln!("{mark}  {:<28} slope {slope} expected {band}", s.check);
    }
}

fn run(command: &Command) -> Result<bool, Error> {
    let started = Instant::now();
    let (report, cfg) = match command {
        Command::Verify(f) => {
            let cfg = f.resolve(SuiteConfig::default())?;
            (report::run_verify(&cfg)?, cfg)
        }
        Command::Converge(f) => {
            let cfg = f.resolve(SuiteConfig::converge_default())?;
            (report::run_converge(&cfg)?, cfg)
        }
        Command::ItoTable(f) => {
            let cfg = f.resolve(SuiteConfig::default())?;
            (report::run_ito_table(&cfg)?, cfg)
        }
        Command::Xi(f) => {
            let cfg = f.resolve(SuiteConfig::default())?;
            (report::run_xi(&cfg)?, cfg)
        }
    };
    let bytes = report.render(cfg.format)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
        }
    }
    summarize(&report);
    eprintln!("finished in {:.2} s", started.elapsed().as_secs_f64());
    Ok(report.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::ConfigInvalid(_) | Error::SizeOverflow { .. })) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
