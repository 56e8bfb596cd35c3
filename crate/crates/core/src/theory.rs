//! Executable checks for the self-contained analytic bounds: logarithmic
//! growth of `x_{t+1} − x_t ≍ e^{−x_t}` sequences, monotonicity of
//! `log(1+at)/log(1+bt)`, logistic-derivative ratio bounds, and
//! initialization statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{evaluate_all, init_network, Activation};
use crate::linalg::dot;
use crate::rng::SeededRng;

/// How each increment is chosen inside `[c1 e^{−x_t}, c2 e^{−x_t}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementRule {
    Lower,
    Upper,
    Midpoint,
    /// Uniform position inside the band, from a seeded stream.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSpec {
    pub x0: f64,
    pub c1: f64,
    pub c2: f64,
    pub steps: usize,
    pub rule: IncrementRule,
}

impl RecurrenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0) || !(self.c2 >= self.c1) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < c1 <= c2, got c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        if !(self.x0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("x0 must be nonnegative, got {}", self.x0)));
        }
        Ok(())
    }
}

/// Generates `x_0..=x_steps`. Every increment is checked against its band.
pub fn simulate_recurrence(spec: &RecurrenceSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = match spec.rule {
        IncrementRule::Random { seed } => Some(SeededRng::new(seed)),
        _ => None,
    };
    let mut xs = Vec::with_capacity(spec.steps + 1);
    let mut x = spec.x0;
    xs.push(x);
    for _ in 0..spec.steps {
        let e = (-x).exp();
        let (lo, hi) = (spec.c1 * e, spec.c2 * e);
        let inc = match spec.rule {
            IncrementRule::Lower => lo,
            IncrementRule::Upper => hi,
            IncrementRule::Midpoint => 0.5 * (lo + hi),
            IncrementRule::Random { .. } => {
                let u = rng.as_mut().expect("seeded").uniform_open();
                (lo + u * (hi - lo)).clamp(lo, hi)
            }
        };
        debug_assert!(inc >= lo && inc <= hi);
        x += inc;
        xs.push(x);
    }
    Ok(xs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBoundReport {
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// Smallest distance to either bound over all t (negative means violated).
    pub worst_slack: f64,
}

/// `log(e^{x0} + c1 t) ≤ x_t ≤ log(e^{x0} + c2 e^{c2} t)` for every t.
///
/// Bounds are evaluated as `x0 + log1p(c t e^{−x0})` so that t = 0 is exact;
/// comparisons allow `1e-12·max(1, |x_t|)` of rounding.
pub fn check_log_bounds(xs: &[f64], x0: f64, c1: f64, c2: f64) -> LogBoundReport {
    let decay = (-x0).exp();
    let mut lower_ok = true;
    let mut upper_ok = true;
    let mut worst = f64::INFINITY;
    for (t, &x) in xs.iter().enumerate() {
        let t = t as f64;
        let lower = x0 + (c1 * t * decay).ln_1p();
        let upper = x0 + (c2 * c2.exp() * t * decay).ln_1p();
        let tol = 1e-12 * x.abs().max(1.0);
        lower_ok &= x >= lower - tol;
        upper_ok &= x <= upper + tol;
        worst = worst.min(x - lower).min(upper - x);
    }
    LogBoundReport {
        lower_ok,
        upper_ok,
        worst_slack: worst,
    }
}

/// True when `log(1+at)/log(1+bt)` is nondecreasing along `grid`.
pub fn check_log_ratio_monotone(a: f64, b: f64, grid: &[f64]) -> Result<bool> {
    if !(a > 0.0 && b > a) {
        return Err(Error::ParameterOrder { a, b });
    }
    let ratio = |t: f64| (a * t).ln_1p() / (b * t).ln_1p();
    Ok(grid.windows(2).all(|w| {
        let (r0, r1) = (ratio(w[0]), ratio(w[1]));
        r1 >= r0 - 4.0 * f64::EPSILON * r0
    }))
}

/// `log(1 + e^z)`, stable for large |z|.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitRatioReport {
    /// `ln(g(z2)/g(z1))` with `g = ℓ'`.
    pub log_ratio: f64,
    pub log_upper: f64,
    pub upper_ok: bool,
    /// Present only when `z2 ≥ −1`.
    pub log_lower: Option<f64>,
    pub lower_ok: Option<bool>,
}

/// `g(z2)/g(z1) ≤ 2(1 + e^{z1−z2})` always, and `≥ e^{z1−z2}/4` when
/// `z2 ≥ −1`, all compared in log space.
pub fn check_logit_ratio_bounds(z1: f64, z2: f64) -> LogitRatioReport {
    const TOL: f64 = 1e-12;
    let log_ratio = softplus(z1) - softplus(z2);
    let log_upper = 2f64.ln() + softplus(z1 - z2);
    let upper_ok = log_ratio <= log_upper + TOL * log_upper.abs().max(1.0);
    let (log_lower, lower_ok) = if z2 >= -1.0 {
        let lo = (z1 - z2) - 4f64.ln();
        (Some(lo), Some(log_ratio >= lo - TOL * lo.abs().max(1.0)))
    } else {
        (None, None)
    };
    LogitRatioReport {
        log_ratio,
        log_upper,
        upper_ok,
        log_lower,
        lower_ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitStatsReport {
    pub trials: usize,
    /// All rows satisfy `σ₀²d/2 ≤ ‖w‖² ≤ 3σ₀²d/2`.
    pub row_norm_freq: f64,
    /// All `|⟨w, x_i⟩| ≤ sqrt(2 log(8mn/δ)) σ₀ R_max`.
    pub inner_prod_freq: f64,
    /// All `0.4m ≤ |S_i^{(0)}| ≤ 0.6m`.
    pub s0_fraction_freq: f64,
}

pub const INIT_DELTA: f64 = 0.05;

/// Empirical frequencies of the initialization events over independent draws.
pub fn init_stats_check(
    m: usize,
    d: usize,
    sigma0: f64,
    ds: &Dataset,
    trials: usize,
    seed: u64,
) -> Result<InitStatsReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if ds.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: ds.d(),
        });
    }
    let mut seeder = SeededRng::new(seed);
    let seeds: Vec<u64> = (0..trials).map(|_| seeder.next_u64()).collect();
    let n = ds.n();
    let s2d = sigma0 * sigma0 * d as f64;
    let inner_cap = (2.0 * (8.0 * (m * n) as f64 / INIT_DELTA).ln()).sqrt() * sigma0 * ds.stats().r_max;

    let outcomes: Vec<Result<[bool; 3]>> = seeds
        .par_iter()
        .map(|&s| {
            let p = init_network(m, d, Activation::Relu, sigma0, s)?;
            let rows_ok = [&p.w_pos, &p.w_neg].iter().all(|w| {
                w.row_iter().all(|row| {
                    let sq = dot(row, row);
                    sq >= s2d / 2.0 && sq <= 1.5 * s2d
                })
            });
            let eval = evaluate_all(&p, ds)?;
            let inner_ok = eval
                .preacts_pos
                .as_slice()
                .iter()
                .chain(eval.preacts_neg.as_slice())
                .all(|z| z.abs() <= inner_cap);
            let s0_ok = (0..n).all(|i| {
                let pre = if ds.y()[i] > 0.0 { &eval.preacts_pos } else { &eval.preacts_neg };
                let active = (0..m).filter(|&r| pre[(r, i)] >= 0.0).count() as f64;
                active >= 0.4 * m as f64 && active <= 0.6 * m as f64
            });
            Ok([rows_ok, inner_ok, s0_ok])
        })
        .collect();

    let mut counts = [0usize; 3];
    for o in outcomes {
        for (c, ok) in counts.iter_mut().zip(o?) {
            *c += usize::from(ok);
        }
    }
    let f = |c: usize| c as f64 / trials as f64;
    Ok(InitStatsReport {
        trials,
        row_norm_freq: f(counts[0]),
        inner_prod_freq: f(counts[1]),
        s0_fraction_freq: f(counts[2]),
    })
}

/// `count` points spaced evenly in log10 between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1).max(1) as f64))
        .collect()
}
