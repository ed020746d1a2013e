//! Command-line front end: simulate files, run the samplers on them and
//! compare the methods.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use blase_core::{ModelKind, Scenario};

use crate::config::{ConfigFile, Overrides, Settings};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "blase", version, about = "File matching and regression with faulty matching variables")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides chain.seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Model to fit; overrides model.kind.
    #[arg(long, global = true, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// Output directory; overrides io.out.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of replications; overrides scenario.replications.
    #[arg(long, global = true, value_name = "N")]
    pub reps: Option<usize>,
    /// Named scenario; overrides scenario.preset.
    #[arg(long, global = true, value_parser = parse_preset)]
    pub preset: Option<Scenario>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate file pairs, truth and test sets for every replication.
    Generate,
    /// Fit the model to one directory of files or to each rep_* directory.
    Run {
        /// Input directory; overrides io.input.
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
    },
    /// Summarize run results and compare methods; one directory per method.
    Metrics {
        #[arg(value_name = "DIR")]
        results: Vec<PathBuf>,
    },
    /// Generate, fit every method and compare, all in memory.
    Report,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: blase_core::Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<Scenario, String> {
    s.parse().map_err(|e: blase_core::Error| e.to_string())
}

impl Cli {
    pub fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let input = match &self.command {
            Command::Run { input } => input.clone(),
            _ => None,
        };
        let o = Overrides {
            seed: self.seed,
            model: self.model,
            out: self.out.clone(),
            reps: self.reps,
            preset: self.preset,
            input,
        };
        Settings::resolve(&file, &o)
    }
}

/// Runs a parsed command line and returns a short report for the terminal.
pub fn execute(cli: &Cli) -> Result<String> {
    let s = cli.settings()?;
    match &cli.command {
        Command::Generate => {
            let dirs = commands::generate(&s)?;
            Ok(format!("wrote {} replication(s) under {}", dirs.len(), s.out.display()))
        }
        Command::Run { .. } => {
            let done = commands::run(&s)?;
            Ok(format!("ran {} chain(s); results under {}", done.len(), s.out.display()))
        }
        Command::Metrics { results } => {
            let (reports, cmp) = commands::metrics(&s, results)?;
            Ok(describe(&reports, cmp.as_ref()))
        }
        Command::Report => {
            let (reports, cmp) = commands::report(&s)?;
            Ok(describe(&reports, cmp.as_ref()))
        }
    }
}

fn describe(reports: &[commands::MethodReport], cmp: Option<&blase_core::sim::metrics::Comparison>) -> String {
    let mut lines: Vec<String> = reports
        .iter()
        .map(|r| {
            let pmr = r.mean_pmr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            format!("{}: {} replication(s), mean PMR {pmr}, mean RMSE {:.4}", r.method, r.replications, r.mean_rmse)
        })
        .collect();
    if let Some(c) = cmp {
        for e in &c.entries {
            lines.push(format!("{}: mean {:.4}, t {:.3}, p {:.4}{}", e.name, e.mean, e.t, e.p_value, if e.significant { " *" } else { "" }));
        }
    }
    lines.join("\n")
}

