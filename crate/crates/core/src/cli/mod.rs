//! Command-line front end: configuration merging, analysis, reporting.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use thiserror::Error;

use crate::assertions::Engine;
use crate::lang::{parse_program_with, LatticeError, ParseError};
use crate::oracle::check_judgement;
use crate::summaries::{analyze_program, Driver, SummaryCache};

pub use config::{Config, Format};
pub use report::{Entry, FunctionEntry, Report, Span};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{source}")]
    Parse {
        file: String,
        #[source]
        source: ParseError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid lattice: {0}")]
    Lattice(#[from] LatticeError),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

/// Relational separation-logic scanner for information-flow leaks.
#[derive(Debug, Parser)]
#[command(name = "insecscan", version)]
pub struct Args {
    /// Source files to analyse.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// TOML file supplying defaults; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Security level observable by the attacker.
    #[arg(long)]
    pub attacker_level: Option<String>,
    /// Comma-separated chain of levels, least first.
    #[arg(long, value_delimiter = ',')]
    pub lattice: Option<Vec<String>>,
    /// `relational` or `unary`.
    #[arg(long)]
    pub engine: Option<Engine>,
    /// `bottom-up` or `top-down`.
    #[arg(long)]
    pub driver: Option<Driver>,
    #[arg(long)]
    pub unroll: Option<usize>,
    #[arg(long)]
    pub path_cap: Option<usize>,
    #[arg(long)]
    pub work_budget: Option<u64>,
    /// Treat memory addresses as observable.
    #[arg(long)]
    pub ct: bool,
    /// Value width used by the analysis.
    #[arg(long)]
    pub bits: Option<u32>,
    /// Confirm findings by bounded enumeration.
    #[arg(long, value_enum)]
    pub oracle: Option<OnOff>,
    #[arg(long)]
    pub oracle_bits: Option<u32>,
    #[arg(long)]
    pub oracle_steps: Option<usize>,
    /// Summary cache file, read if present and rewritten afterwards.
    #[arg(long)]
    pub summaries: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<Format>,
}

impl Args {
    /// Defaults, then the config file, then flags.
    pub fn config(&self) -> Result<Config, CliError> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Config::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        if let Some(v) = &self.attacker_level {
            c.attacker_level = v.clone();
        }
        if let Some(v) = &self.lattice {
            c.lattice = v.clone();
        }
        if let Some(v) = self.engine {
            c.engine = v;
        }
        if let Some(v) = self.driver {
            c.driver = v;
        }
        if let Some(v) = self.unroll {
            c.unroll = v;
        }
        if let Some(v) = self.path_cap {
            c.path_cap = v;
        }
        if let Some(v) = self.work_budget {
            c.work_budget = v;
        }
        c.ct |= self.ct;
        if let Some(v) = self.bits {
            c.bits = v;
        }
        if let Some(v) = self.oracle {
            c.oracle = v == OnOff::On;
        }
        if let Some(v) = self.oracle_bits {
            c.oracle_bits = v;
        }
        if let Some(v) = self.oracle_steps {
            c.oracle_steps = v;
        }
        if let Some(v) = &self.summaries {
            c.summaries = Some(v.clone());
        }
        if let Some(v) = self.format {
            c.format = v;
        }
        validate(&c)?;
        Ok(c)
    }
}

pub fn validate(c: &Config) -> Result<(), CliError> {
    if !(1..=64).contains(&c.bits) {
        return Err(CliError::Config(format!("bits must be within 1..=64, got {}", c.bits)));
    }
    if !(1..=8).contains(&c.oracle_bits) {
        return Err(CliError::Config(format!(
            "oracle-bits must be within 1..=8, got {}",
            c.oracle_bits
        )));
    }
    if c.path_cap == 0 {
        return Err(CliError::Config("path-cap must be positive".into()));
    }
    c.options()?;
    Ok(())
}

/// Analyse one source text. Reads and rewrites the summary cache when
/// one is configured.
pub fn analyze_source(src: &str, file: &str, cfg: &Config) -> Result<Report, CliError> {
    validate(cfg)?;
    let opts = cfg.options()?;
    let program = parse_program_with(src, &opts.setting.lattice).map_err(|source| CliError::Parse {
        file: file.to_string(),
        source,
    })?;
    let cache = match &cfg.summaries {
        Some(p) => SummaryCache::load(p).map_err(|e| CliError::io(p, e))?,
        None => None,
    };
    let mut analysis = analyze_program(&program, &opts, cfg.driver, cache.as_ref());
    if cfg.oracle {
        let oc = cfg.oracle_config()?;
        analysis.findings.par_iter_mut().for_each(|f| {
            if f.verdict.is_none() {
                if let Some(j) = &f.judgement {
                    f.verdict = Some(check_judgement(j, Some(&program), &oc));
                }
            }
        });
    }
    if let Some(p) = &cfg.summaries {
        analysis.to_cache().save(p).map_err(|e| CliError::io(p, e))?;
    }
    Ok(Report::new(file, &analysis, cfg))
}

/// Run the command line; returns the process exit code.
pub fn run(args: &Args) -> i32 {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut code = 0;
    let mut reports = Vec::new();
    for path in &args.files {
        let file = path.display().to_string();
        let result = fs::read_to_string(path)
            .map_err(|e| CliError::io(path, e))
            .and_then(|src| analyze_source(&src, &file, &cfg));
        match result {
            Ok(r) => {
                code = code.max(r.exit_code());
                reports.push(r);
            }
            Err(e) => {
                eprintln!("error: {e}");
                code = 2;
            }
        }
    }
    match cfg.format {
        Format::Text => {
            for r in &reports {
                print!("{}", r.to_text());
            }
        }
        Format::Json => {
            let out = if reports.len() == 1 {
                reports[0].to_json()
            } else {
                serde_json::to_string_pretty(&reports).expect("reports serialise") + "\n"
            };
            print!("{out}");
        }
    }
    code
}
