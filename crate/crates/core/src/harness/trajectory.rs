//! Fixed-format trajectory CSV: header in `TRAJECTORY_HEADER` order, floats in
//! 17-significant-digit scientific notation, flags as `true`/`false`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{TrajectoryRecord, TRAJECTORY_HEADER};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fields(r: &TrajectoryRecord) -> [String; 18] {
    [
        r.t.to_string(),
        fmt_f64(r.loss),
        fmt_f64(r.fro_pos),
        fmt_f64(r.fro_neg),
        fmt_f64(r.spec_pos),
        fmt_f64(r.spec_neg),
        fmt_f64(r.sr_pos),
        fmt_f64(r.sr_neg),
        fmt_f64(r.sr_full),
        fmt_f64(r.margin_min),
        fmt_f64(r.margin_max),
        fmt_f64(r.norm_margin_spread),
        r.pattern_frozen.to_string(),
        r.relu_monotone_ok.to_string(),
        fmt_f64(r.balance_leaky),
        fmt_f64(r.balance_relu),
        fmt_f64(r.kkt_residual),
        fmt_f64(r.lderiv_ratio_max),
    ]
}

pub fn write_trajectory(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(TRAJECTORY_HEADER)?;
    for r in records {
        w.write_record(fields(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::Reader::from_reader(file);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Config(format!("{}: unexpected trajectory header", path.display())));
    }
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let bad = |col: &str| Error::Config(format!("{}: row {}: bad value in column {col}", path.display(), line + 2));
        let f = |k: usize| -> Result<f64> { row[k].parse::<f64>().map_err(|_| bad(TRAJECTORY_HEADER[k])) };
        let b = |k: usize| -> Result<bool> { row[k].parse::<bool>().map_err(|_| bad(TRAJECTORY_HEADER[k])) };
        let rec = TrajectoryRecord {
            t: row[0].parse().map_err(|_| bad("t"))?,
            loss: f(1)?,
            fro_pos: f(2)?,
            fro_neg: f(3)?,
            spec_pos: f(4)?,
            spec_neg: f(5)?,
            sr_pos: f(6)?,
            sr_neg: f(7)?,
            sr_full: f(8)?,
            margin_min: f(9)?,
            margin_max: f(10)?,
            norm_margin_spread: f(11)?,
            pattern_frozen: b(12)?,
            relu_monotone_ok: b(13)?,
            balance_leaky: f(14)?,
            balance_relu: f(15)?,
            kkt_residual: f(16)?,
            lderiv_ratio_max: f(17)?,
        };
        if let Some(prev) = out.last() {
            if rec.t <= prev.t {
                return Err(Error::OrderingViolation {
                    expected: prev.t + 1,
                    got: rec.t,
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Named numeric view of a record, used for long-format exports.
pub fn metric_values(r: &TrajectoryRecord) -> [(&'static str, f64); 17] {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    [
        ("loss", r.loss),
        ("fro_pos", r.fro_pos),
        ("fro_neg", r.fro_neg),
        ("spec_pos", r.spec_pos),
        ("spec_neg", r.spec_neg),
        ("sr_pos", r.sr_pos),
        ("sr_neg", r.sr_neg),
        ("sr_full", r.sr_full),
        ("margin_min", r.margin_min),
        ("margin_max", r.margin_max),
        ("norm_margin_spread", r.norm_margin_spread),
        ("pattern_frozen", flag(r.pattern_frozen)),
        ("relu_monotone_ok", flag(r.relu_monotone_ok)),
        ("balance_leaky", r.balance_leaky),
        ("balance_relu", r.balance_relu),
        ("kkt_residual", r.kkt_residual),
        ("lderiv_ratio_max", r.lderiv_ratio_max),
    ]
}
