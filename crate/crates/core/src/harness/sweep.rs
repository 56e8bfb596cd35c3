use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ActivationKind, ExperimentConfig};
use crate::harness::run::{execute, Termination};
use crate::harness::trajectory::{fmt_f64, metric_values};
use crate::metrics::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    Sigma0,
    M,
    Eta,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Sigma0 => "sigma0",
            SweepAxis::M => "m",
            SweepAxis::Eta => "eta",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepAxis::Gamma),
            "sigma0" => Ok(SweepAxis::Sigma0),
            "m" => Ok(SweepAxis::M),
            "eta" => Ok(SweepAxis::Eta),
            other => Err(Error::Config(format!("unknown sweep axis '{other}' (gamma, sigma0, m, eta)"))),
        }
    }
}

impl SweepAxis {
    pub fn apply(&self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Gamma => {
                cfg.activation = ActivationKind::Leaky;
                cfg.gamma = value;
            }
            SweepAxis::Sigma0 => cfg.sigma0 = value,
            SweepAxis::Eta => cfg.eta = value,
            SweepAxis::M => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config(format!("m must be a positive integer, got {value}")));
                }
                cfg.m = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub axis_value: f64,
    pub seed: u64,
    pub termination: Termination,
    pub trajectory: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub axis_value: f64,
    pub t: usize,
    pub metric: &'static str,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub cells: Vec<SweepCell>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepSummary {
    /// Mean of `metric` at the last step recorded by every cell of `axis_value`.
    pub fn final_mean(&self, axis_value: f64, metric: &str) -> Option<f64> {
        let rows: Vec<&SweepAggregate> = self
            .aggregates
            .iter()
            .filter(|a| a.axis_value == axis_value && a.metric == metric)
            .collect();
        rows.iter().max_by_key(|a| a.t).map(|a| a.mean)
    }
}

/// Runs every `(value, seed)` cell, at most `parallelism` at a time. A failing
/// cell keeps its termination reason and partial trajectory; the sweep goes on.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    parallelism: usize,
) -> Result<SweepSummary> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    let mut jobs = Vec::new();
    for &v in values {
        for &s in seeds {
            let mut cfg = axis.apply(base, v)?;
            cfg.seed = s;
            cfg.out_dir = base.out_dir.as_ref().map(|d| d.join(format!("{axis}={v}")).join(format!("seed={s}")));
            jobs.push((v, s, cfg));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<SweepCell>> = pool.install(|| {
        jobs.par_iter()
            .map(|(v, s, cfg)| {
                let out = execute(cfg)?;
                Ok(SweepCell {
                    axis_value: *v,
                    seed: *s,
                    termination: out.manifest.termination,
                    trajectory: out.trajectory,
                })
            })
            .collect()
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = SweepSummary {
        axis,
        aggregates: aggregate(&cells),
        cells,
    };
    if let Some(dir) = &base.out_dir {
        write_sweep(dir, &summary)?;
    }
    Ok(summary)
}

fn aggregate(cells: &[SweepCell]) -> Vec<SweepAggregate> {
    // (value order, t, metric order) -> samples
    let mut order: Vec<f64> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize), (f64, &'static str, Vec<f64>)> = BTreeMap::new();
    for c in cells {
        let vi = match order.iter().position(|&v| v == c.axis_value) {
            Some(i) => i,
            None => {
                order.push(c.axis_value);
                order.len() - 1
            }
        };
        for r in &c.trajectory {
            for (k, (name, value)) in metric_values(r).into_iter().enumerate() {
                groups
                    .entry((vi, r.t, k))
                    .or_insert_with(|| (c.axis_value, name, Vec::new()))
                    .2
                    .push(value);
            }
        }
    }
    groups
        .into_iter()
        .map(|((_, t, _), (axis_value, metric, xs))| {
            let count = xs.len();
            let mean = xs.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            SweepAggregate {
                axis_value,
                t,
                metric,
                mean,
                std,
                count,
            }
        })
        .collect()
}

/// `sweep_long.csv` (axis_value, seed, t, metric, value) and
/// `sweep_summary.csv` (axis_value, t, metric, mean, std, count).
pub fn write_sweep(dir: &Path, s: &SweepSummary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let long_path = dir.join("sweep_long.csv");
    let file = File::create(&long_path).map_err(|e| Error::io(&long_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["axis_value", "seed", "t", "metric", "value"])?;
    for c in &s.cells {
        for r in &c.trajectory {
            for (name, v) in metric_values(r) {
                w.write_record([fmt_f64(c.axis_value), c.seed.to_string(), r.t.to_string(), name.into(), fmt_f64(v)])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&long_path, e))?;

    let sum_path = dir.join("sweep_summary.csv");
    let file = File::create(&sum_path).map_err(|e| Error::io(&sum_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["axis_value", "t", "metric", "mean", "std", "count"])?;
    for a in &s.aggregates {
        w.write_record([
            fmt_f64(a.axis_value),
            a.t.to_string(),
            a.metric.into(),
            fmt_f64(a.mean),
            fmt_f64(a.std),
            a.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&sum_path, e))?;

    let cells_path = dir.join("sweep_cells.json");
    let cells: Vec<serde_json::Value> = s
        .cells
        .iter()
        .map(|c| serde_json::json!({"axis_value": c.axis_value, "seed": c.seed, "termination": c.termination}))
        .collect();
    fs::write(&cells_path, serde_json::to_string_pretty(&cells)?).map_err(|e| Error::io(&cells_path, e))
}
