//! Acceptance-style summary of a recorded run directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::{ActivationKind, DataKind};
use crate::harness::run::RunManifest;
use crate::harness::trajectory::{fmt_f64, read_trajectory};
use crate::metrics::{band_ratio, rate_estimators, TrajectoryRecord};

pub const LOSS_BAND_MAX: f64 = 3.0;
pub const NORM_DRIFT_MAX: f64 = 0.10;
pub const SR_LOG_BAND_MAX: f64 = 5.0;
pub const LEAKY_FINAL_SR_MAX: f64 = 1.2;
pub const ORTHO_RELU_SR: (f64, f64) = (1.7, 2.3);
pub const SPREAD_RATIO_MAX: f64 = 0.5;
/// Allowed relative growth of the running maximum of the loss-derivative
/// ratio over the final decade: none.
pub const LDERIV_GROWTH_MAX: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub value: Option<f64>,
    pub threshold: String,
    /// `None` when the row does not apply or the data is insufficient.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub window: Option<(usize, usize)>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.pass == Some(false)).count()
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<28} {:>14}  {:<22} {}\n", "criterion", "value", "threshold", "status");
        for r in &self.rows {
            let value = r.value.map_or("-".to_string(), |v| format!("{v:.6}"));
            let status = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "n/a",
            };
            out.push_str(&format!("{:<28} {:>14}  {:<22} {}\n", r.name, value, r.threshold, status));
        }
        out
    }
}

fn row(name: &str, value: Option<f64>, threshold: &str, pass: Option<bool>) -> ReportRow {
    ReportRow {
        name: name.into(),
        value,
        threshold: threshold.into(),
        pass,
    }
}

fn at(traj: &[TrajectoryRecord], t: usize) -> Option<&TrajectoryRecord> {
    traj.iter().find(|r| r.t == t)
}

/// `[10³, 10⁵]` when the run reaches 10⁵; otherwise the last two decades.
fn window(traj: &[TrajectoryRecord]) -> Option<(usize, usize)> {
    let last = traj.last()?.t;
    let (lo, hi) = if last >= 100_000 { (1_000, 100_000) } else { (last / 100, last) };
    (lo >= 2 && at(traj, lo).is_some() && at(traj, hi / 10).is_some() && at(traj, 10 * lo).is_some()).then_some((lo, hi))
}

/// Builds the report; `act` and `data` come from the manifest when known.
pub fn build_report(traj: &[TrajectoryRecord], act: Option<ActivationKind>, data: Option<DataKind>) -> Report {
    let win = window(traj);
    let rates = win.and_then(|(lo, hi)| rate_estimators(traj, lo, hi).ok());
    let leaky = act == Some(ActivationKind::Leaky);
    let relu = act == Some(ActivationKind::Relu);
    let mut rows = Vec::new();

    match &rates {
        Some(r) => {
            let band = band_ratio(r.loss_t_product_band);
            rows.push(row("loss_rate_band", Some(band), "max/min L*t <= 3", Some(band <= LOSS_BAND_MAX)));
            for (j, name) in ["norm_rate_drift_pos", "norm_rate_drift_neg"].iter().enumerate() {
                let v = r.fro_over_logt_drift[j];
                rows.push(row(name, Some(v), "drift <= 0.10", Some(v <= NORM_DRIFT_MAX)));
            }
            for (j, name) in ["sr_log_band_pos", "sr_log_band_neg"].iter().enumerate() {
                let v = band_ratio(r.sr_minus_one_times_logt_band[j]);
                rows.push(row(name, Some(v), "max/min (SR-1)log t <= 5", leaky.then_some(v <= SR_LOG_BAND_MAX)));
            }
        }
        None => {
            rows.push(row("loss_rate_band", None, "max/min L*t <= 3", None));
        }
    }

    if let Some(last) = traj.last() {
        for (name, v) in [("final_stable_rank_pos", last.sr_pos), ("final_stable_rank_neg", last.sr_neg)] {
            let (threshold, pass) = if leaky {
                ("<= 1.2", Some(v <= LEAKY_FINAL_SR_MAX))
            } else if relu && data == Some(DataKind::Orthogonal) {
                ("in [1.7, 2.3]", Some(v >= ORTHO_RELU_SR.0 && v <= ORTHO_RELU_SR.1))
            } else {
                ("-", None)
            };
            rows.push(row(name, Some(v), threshold, pass));
        }
    }

    if leaky {
        // Earliest t* after which every record matches the sign template.
        let tail_start = traj.iter().rposition(|r| !r.pattern_frozen).map_or(0, |k| k + 1);
        let t_star = traj.get(tail_start).map(|r| r.t as f64);
        rows.push(row("pattern_frozen_from", t_star, "exists t*", Some(t_star.is_some())));
    }
    if relu || leaky {
        let violations = traj.iter().filter(|r| !r.relu_monotone_ok).count() as f64;
        rows.push(row("relu_monotone_violations", Some(violations), "== 0", relu.then_some(violations == 0.0)));
    }

    if let Some((lo, hi)) = win {
        let (a, b) = (at(traj, lo).expect("window edge"), at(traj, hi).expect("window edge"));
        let ratio = b.norm_margin_spread / a.norm_margin_spread;
        rows.push(row("margin_spread_ratio", Some(ratio), "<= 0.5", Some(ratio <= SPREAD_RATIO_MAX)));

        let running_max = |upto: usize| {
            traj.iter()
                .filter(|r| r.t <= upto)
                .map(|r| r.lderiv_ratio_max)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (before, after) = (running_max(hi / 10), running_max(hi));
        let growth = after / before - 1.0;
        rows.push(row(
            "lderiv_ratio_growth",
            Some(growth),
            "finite, no growth",
            Some(after.is_finite() && growth <= LDERIV_GROWTH_MAX),
        ));

        if leaky && a.kkt_residual.is_finite() && b.kkt_residual.is_finite() {
            rows.push(row(
                "kkt_residual_ratio",
                Some(b.kkt_residual / a.kkt_residual),
                "< 1",
                Some(b.kkt_residual < a.kkt_residual),
            ));
        }
    }
    Report { window: win, rows }
}

/// Reads `trajectory.csv` (and `manifest.json` if present) from `dir` and
/// writes `report_series.csv` with plot-ready rate series next to them.
pub fn report_dir(dir: &Path) -> Result<Report> {
    let traj = read_trajectory(&dir.join("trajectory.csv"))?;
    let manifest_path = dir.join("manifest.json");
    let (act, data) = if manifest_path.exists() {
        let m = RunManifest::load(&manifest_path)?;
        (Some(m.config.activation), Some(m.config.data))
    } else {
        (None, None)
    };
    let report = build_report(&traj, act, data);
    write_series(&dir.join("report_series.csv"), &traj)?;
    Ok(report)
}

fn write_series(path: &Path, traj: &[TrajectoryRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["t", "loss_times_t", "fro_pos_over_log_t", "fro_neg_over_log_t", "sr_pos_minus_one_times_log_t", "sr_neg_minus_one_times_log_t"])?;
    for r in traj.iter().filter(|r| r.t >= 2) {
        let lt = (r.t as f64).ln();
        let t = r.t as f64;
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.loss * t),
            fmt_f64(r.fro_pos / lt),
            fmt_f64(r.fro_neg / lt),
            fmt_f64((r.sr_pos - 1.0) * lt),
            fmt_f64((r.sr_neg - 1.0) * lt),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RecordSchedule;

    /// Planted trajectory with exact `1/t` loss and `log t` norms.
    fn planted(total: usize) -> Vec<TrajectoryRecord> {
        RecordSchedule::default()
            .points(total)
            .into_iter()
            .map(|t| {
                let lt = (t.max(2) as f64).ln();
                TrajectoryRecord {
                    t,
                    loss: 1.0 / (t as f64 + 1.0),
                    fro_pos: lt,
                    fro_neg: 2.0 * lt,
                    spec_pos: 1.0,
                    spec_neg: 1.0,
                    sr_pos: 1.0 + 1.0 / lt,
                    sr_neg: 1.0 + 2.0 / lt,
                    sr_full: 2.0,
                    margin_min: lt,
                    margin_max: lt,
                    norm_margin_spread: 1.0 / (t as f64 + 1.0),
                    pattern_frozen: t > 50,
                    relu_monotone_ok: true,
                    balance_leaky: 0.5,
                    balance_relu: 0.5,
                    kkt_residual: 1.0 / lt,
                    lderiv_ratio_max: if t < 100 { 1.0 + t as f64 / 200.0 } else { 1.5 },
                }
            })
            .collect()
    }

    #[test]
    fn planted_rates_pass() {
        let rep = build_report(&planted(100_000), Some(ActivationKind::Leaky), Some(DataKind::GaussianMixture));
        assert_eq!(rep.window, Some((1_000, 100_000)));
        assert_eq!(rep.failures(), 0, "{}", rep.render());
        assert_eq!(rep.row("pattern_frozen_from").unwrap().value, Some(51.0));
        assert!(rep.row("loss_rate_band").unwrap().value.unwrap() < 1.01);
    }

    #[test]
    fn short_run_has_na_rows() {
        let rep = build_report(&planted(50), None, None);
        let row = rep.row("loss_rate_band").unwrap();
        assert_eq!(row.pass, None);
        assert_eq!(rep.failures(), 0);
        assert!(rep.render().contains("loss_rate_band"));
    }

    #[test]
    fn growing_loss_fails() {
        let mut traj = planted(10_000);
        for r in &mut traj {
            r.loss = 1.0 / (r.t as f64 + 1.0).sqrt();
        }
        let rep = build_report(&traj, Some(ActivationKind::Relu), None);
        assert_eq!(rep.window, Some((100, 10_000)));
        assert_eq!(rep.row("loss_rate_band").unwrap().pass, Some(false));
    }
}
