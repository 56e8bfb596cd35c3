//! Experiment orchestration: configs, seeded runs, sweeps, reports and the
//! oracle suite used by the CLI.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;
pub mod trajectory;
pub mod verify;

pub use config::{ActivationKind, DataKind, ExperimentConfig};
pub use report::{build_report, report_dir, Report, ReportRow};
pub use run::{execute, run_experiment, RunManifest, RunOutcome, Termination};
pub use sweep::{run_sweep, SweepAxis, SweepSummary};
pub use trajectory::{read_trajectory, write_trajectory};
pub use verify::{run_verify, VerifyReport};
