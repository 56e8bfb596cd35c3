use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use gdlab::harness::{report_dir, run_sweep, run_verify, ExperimentConfig, SweepAxis, Termination};
use gdlab::Error;

#[derive(Parser)]
#[command(name = "gdlab", version, about = "Train and instrument two-layer networks on separable data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset described by a config and write it as JSON.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `out_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config over a grid of values on one axis and several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// gamma, sigma0, m or eta.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Explicit seeds; defaults to `--seed .. --seed + --num-seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        num_seeds: u64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suite and print a JSON report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run directory against the acceptance thresholds.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// A check failed or a run aborted: exit 1.
    Check(String),
}

impl Failure {
    fn emit(self) -> ExitCode {
        let (kind, message, code) = match self {
            Failure::Usage(m) => ("usage", m, 2),
            Failure::Check(m) => ("check_failed", m, 1),
        };
        eprintln!("{}", json!({ "error": kind, "message": message }));
        ExitCode::from(code)
    }
}

fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Io { .. } | Error::Json(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
        other => Failure::Check(other.to_string()),
    }
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    Ok(cfg)
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let cfg = load_config(&config, seed, None)?;
            let ds = cfg.build_dataset().map_err(classify)?;
            match out {
                Some(p) => ds.save_json(&p).map_err(classify),
                None => write_json(&serde_json::to_value(ds.to_json()).expect("dataset serializes"), None),
            }
        }
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            let outcome = gdlab::harness::execute(&cfg).map_err(classify)?;
            let last = outcome.trajectory.last();
            println!(
                "{}",
                json!({
                    "config_hash": outcome.manifest.config_hash,
                    "end_step": outcome.manifest.end_step,
                    "termination": outcome.manifest.termination,
                    "final_loss": last.map(|r| r.loss),
                    "final_sr_pos": last.map(|r| r.sr_pos),
                    "final_sr_neg": last.map(|r| r.sr_neg),
                    "records": outcome.trajectory.len(),
                })
            );
            match outcome.manifest.termination {
                Termination::Completed => Ok(()),
                Termination::Failed { reason } => Err(Failure::Check(reason)),
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            seed,
            num_seeds,
            parallelism,
            out,
        } => {
            let cfg = load_config(&config, None, out)?;
            let axis: SweepAxis = axis.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let seeds = if seeds.is_empty() { (seed..seed + num_seeds).collect() } else { seeds };
            let summary = run_sweep(&cfg, axis, &values, &seeds, parallelism).map_err(classify)?;
            let failed = summary
                .cells
                .iter()
                .filter(|c| c.termination != Termination::Completed)
                .count();
            let finals: Vec<_> = values
                .iter()
                .map(|&v| json!({ "axis_value": v, "sr_pos": summary.final_mean(v, "sr_pos"), "loss": summary.final_mean(v, "loss") }))
                .collect();
            println!("{}", json!({ "axis": axis.to_string(), "cells": summary.cells.len(), "failed_cells": failed, "final_means": finals }));
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} sweep cell(s) failed")));
            }
            Ok(())
        }
        Command::Verify { seed, out } => {
            let report = run_verify(seed);
            write_json(&serde_json::to_value(&report).expect("report serializes"), out.as_deref())?;
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Check(format!("{} oracle check(s) failed", report.total_failures)))
            }
        }
        Command::Report { dir, out } => {
            let report = report_dir(&dir).map_err(classify)?;
            print!("{}", report.render());
            if let Some(p) = out {
                write_json(&serde_json::to_value(&report).expect("report serializes"), Some(&p))?;
            }
            match report.failures() {
                0 => Ok(()),
                n => Err(Failure::Check(format!("{n} report row(s) failed"))),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::Usage(e.to_string()).emit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.emit(),
    }
}
