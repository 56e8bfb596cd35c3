//! Measurements taken along a training trajectory.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, frobenius_norm, gemm_nn, nnls_normal, spectral_norm, Matrix};
use crate::network::{evaluate_all, NetworkParams, CLASS_SIGNS};

/// Relative tolerance of the power iteration behind every stable rank.
pub const SPECTRAL_TOL: f64 = 1e-10;
const SPECTRAL_MAX_ITER: usize = 200_000;

pub fn spectral(m: &Matrix) -> Result<f64> {
    match spectral_norm(m, SPECTRAL_TOL, SPECTRAL_MAX_ITER) {
        Ok(s) => Ok(s.value),
        Err(Error::NonConvergence { estimate, .. }) if estimate > 0.0 => Ok(estimate),
        Err(e) => Err(e),
    }
}

/// `‖M‖_F² / ‖M‖₂²`.
pub fn stable_rank(m: &Matrix) -> Result<f64> {
    let fro = frobenius_norm(m);
    if fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let spec = spectral(m)?;
    Ok((fro / spec).powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Margins {
    /// `y_i f(W, x_i)`
    pub raw: Vec<f64>,
    /// `y_i f(W / ‖W‖_F, x_i)`
    pub normalized: Vec<f64>,
    pub spread: f64,
}

pub fn margins(params: &NetworkParams, ds: &Dataset) -> Result<Margins> {
    let eval = evaluate_all(params, ds)?;
    margins_from_raw(eval.margins, params.frobenius_norm())
}

pub fn margins_from_raw(raw: Vec<f64>, fro: f64) -> Result<Margins> {
    if fro == 0.0 {
        return Err(Error::ZeroWeights);
    }
    let normalized: Vec<f64> = raw.iter().map(|v| v / fro).collect();
    let hi = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Margins {
        raw,
        normalized,
        spread: hi - lo,
    })
}

/// Which neurons are on (`⟨w_{j,r}, x_i⟩ ≥ 0`) for every class and example.
///
/// One `m`-bit set per `(j, i)`, stored as packed `u64` words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    pub t: usize,
    m: usize,
    n: usize,
    words_per_set: usize,
    bits: Vec<u64>,
}

impl ActivationPattern {
    pub fn from_preacts(preacts: [&Matrix; 2], t: usize) -> Self {
        let (m, n) = (preacts[0].rows(), preacts[0].cols());
        let words_per_set = m.div_ceil(64);
        let mut bits = vec![0u64; 2 * n * words_per_set];
        for (j, pre) in preacts.iter().enumerate() {
            for r in 0..m {
                let row = pre.row(r);
                for i in 0..n {
                    if row[i] >= 0.0 {
                        bits[(j * n + i) * words_per_set + r / 64] |= 1u64 << (r % 64);
                    }
                }
            }
        }
        ActivationPattern {
            t,
            m,
            n,
            words_per_set,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.m
    }

    fn set(&self, j: usize, i: usize) -> &[u64] {
        let start = (j * self.n + i) * self.words_per_set;
        &self.bits[start..start + self.words_per_set]
    }

    pub fn is_active(&self, j: usize, r: usize, i: usize) -> bool {
        self.set(j, i)[r / 64] >> (r % 64) & 1 == 1
    }

    /// `|S_i|` for the on-class group of example `i`.
    pub fn on_class_count(&self, i: usize, labels: &[f64]) -> usize {
        let j = class_index(labels[i]);
        self.set(j, i).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// True when bit `(j, r, i)` is set exactly when `j = y_i`.
    pub fn matches_sign_template(&self, labels: &[f64]) -> bool {
        let full_word = |k: usize| {
            let used = (self.m - 64 * k).min(64);
            if used == 64 {
                u64::MAX
            } else {
                (1u64 << used) - 1
            }
        };
        (0..self.n).all(|i| {
            let on = class_index(labels[i]);
            (0..self.words_per_set).all(|k| {
                self.set(on, i)[k] == full_word(k) && self.set(1 - on, i)[k] == 0
            })
        })
    }

    /// Number of `(i, r)` with `r ∈ S_i` here but not in `later`.
    pub fn on_class_violations(&self, later: &ActivationPattern, labels: &[f64]) -> usize {
        (0..self.n)
            .map(|i| {
                let j = class_index(labels[i]);
                self.set(j, i)
                    .iter()
                    .zip(later.set(j, i))
                    .map(|(a, b)| (a & !b).count_ones() as usize)
                    .sum::<usize>()
            })
            .sum()
    }

    /// Same bits, ignoring the recording time.
    pub fn same_bits(&self, other: &ActivationPattern) -> bool {
        self.m == other.m && self.n == other.n && self.bits == other.bits
    }

    /// Short hex digest of the packed bits.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for w in &self.bits {
            h.update(w.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[inline]
pub(crate) fn class_index(label: f64) -> usize {
    if label > 0.0 {
        0
    } else {
        1
    }
}

pub fn pattern_snapshot(params: &NetworkParams, ds: &Dataset, t: usize) -> Result<ActivationPattern> {
    let eval = evaluate_all(params, ds)?;
    Ok(ActivationPattern::from_preacts([&eval.preacts_pos, &eval.preacts_neg], t))
}

/// `max_{i,k} |ℓ'_i| / |ℓ'_k|`.
pub fn lderiv_ratio_max(loss_derivs: &[f64]) -> Result<f64> {
    if let Some((index, &value)) = loss_derivs.iter().enumerate().find(|(_, &v)| !(v < 0.0)) {
        return Err(Error::NonNegativeDeriv { index, value });
    }
    if loss_derivs.is_empty() {
        return Err(Error::InvalidArgument("no loss derivatives".into()));
    }
    let hi = loss_derivs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let lo = loss_derivs.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    Ok(hi / lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub residual: f64,
    pub lambdas: Vec<f64>,
}

/// Distance from the normalized weights to the cone spanned by the max-margin
/// KKT directions `j y_i σ'(⟨w̄_{j,r}, x_i⟩) x_i`, with one shared `λ_i ≥ 0`
/// per example, relative to `‖W̄‖_F = 1`.
pub fn kkt_residual(params: &NetworkParams, ds: &Dataset) -> Result<KktReport> {
    let fro = params.frobenius_norm();
    if fro == 0.0 {
        return Err(Error::ZeroWeights);
    }
    let eval = evaluate_all(params, ds)?;
    let (m, n) = (params.m(), ds.n());
    let y = ds.y();
    let gram = ds.x().gram_rows();

    // σ' is invariant under positive scaling, so the current preactivations serve
    let sd: Vec<Matrix> = [&eval.preacts_pos, &eval.preacts_neg]
        .iter()
        .map(|pre| {
            let data = pre.as_slice().iter().map(|&z| params.act.derivative(z)).collect();
            Matrix::from_vec(m, n, data).expect("shape preserved")
        })
        .collect();

    let mut ata = Matrix::zeros(n, n);
    let mut atb = vec![0.0; n];
    for j in 0..2 {
        let pre = eval.preacts(j);
        for r in 0..m {
            let s = sd[j].row(r);
            let p = pre.row(r);
            for i in 0..n {
                atb[i] += CLASS_SIGNS[j] * y[i] * s[i] * p[i] / fro;
                for k in 0..n {
                    ata[(i, k)] += s[i] * s[k];
                }
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            ata[(i, k)] *= y[i] * y[k] * gram[(i, k)];
        }
    }
    let lambdas = nnls_normal(&ata, &atb, 1e-12)?;

    let mut sq = 0.0;
    for j in 0..2 {
        let mut coef = Matrix::zeros(m, n);
        for r in 0..m {
            let s = sd[j].row(r);
            for (i, c) in coef.row_mut(r).iter_mut().enumerate() {
                *c = lambdas[i] * CLASS_SIGNS[j] * y[i] * s[i];
            }
        }
        let mut resid = params.class(j).scaled(1.0 / fro);
        gemm_nn(-1.0, &coef, ds.x(), 1.0, &mut resid);
        sq += dot(resid.as_slice(), resid.as_slice());
    }
    Ok(KktReport {
        residual: sq.sqrt(),
        lambdas,
    })
}

/// `min_i (‖x_i‖² − Σ_{k≠i} |⟨x_i, x_k⟩|)`; a lower bound on `λ_min(X Xᵀ)`.
pub fn gershgorin_lambda_min_bound(ds: &Dataset) -> f64 {
    let g = ds.x().gram_rows();
    (0..ds.n())
        .map(|i| {
            let off: f64 = (0..ds.n()).filter(|&k| k != i).map(|k| g[(i, k)].abs()).sum();
            g[(i, i)] - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// Log-spaced recording times: every step through `dense_until`, then about
/// `per_decade` points per factor of ten. The final step is always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchedule {
    pub dense_until: usize,
    pub per_decade: usize,
}

impl Default for RecordSchedule {
    fn default() -> Self {
        RecordSchedule {
            dense_until: 100,
            per_decade: 30,
        }
    }
}

impl RecordSchedule {
    pub fn points(&self, total: usize) -> Vec<usize> {
        let mut pts: Vec<usize> = (0..=self.dense_until.min(total)).collect();
        if self.per_decade > 0 && total > self.dense_until {
            let start = (self.dense_until.max(1) as f64).log10();
            let pd = self.per_decade as f64;
            let mut k = (start * pd).floor() as i64;
            loop {
                let t = 10f64.powf(k as f64 / pd).round() as usize;
                if t > total {
                    break;
                }
                if t > *pts.last().expect("nonempty") {
                    pts.push(t);
                }
                k += 1;
            }
        }
        if *pts.last().expect("nonempty") != total {
            pts.push(total);
        }
        pts
    }
}

/// One row of the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub loss: f64,
    pub fro_pos: f64,
    pub fro_neg: f64,
    pub spec_pos: f64,
    pub spec_neg: f64,
    pub sr_pos: f64,
    pub sr_neg: f64,
    pub sr_full: f64,
    pub margin_min: f64,
    pub margin_max: f64,
    pub norm_margin_spread: f64,
    /// Leaky: the full `j·y_i` sign template holds. ReLU: pattern unchanged
    /// since the previous record.
    pub pattern_frozen: bool,
    /// ReLU: every on-class active set contains the previous record's.
    pub relu_monotone_ok: bool,
    pub balance_leaky: f64,
    pub balance_relu: f64,
    pub kkt_residual: f64,
    pub lderiv_ratio_max: f64,
}

pub const TRAJECTORY_HEADER: [&str; 18] = [
    "t",
    "loss",
    "fro_pos",
    "fro_neg",
    "spec_pos",
    "spec_neg",
    "sr_pos",
    "sr_neg",
    "sr_full",
    "margin_min",
    "margin_max",
    "norm_margin_spread",
    "pattern_frozen",
    "relu_monotone_ok",
    "balance_leaky",
    "balance_relu",
    "kkt_residual",
    "lderiv_ratio_max",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimates {
    /// (min, max) of `L(t)·t` over the window.
    pub loss_t_product_band: (f64, f64),
    /// `|mean_last − mean_first| / mean_first` of `‖W_j‖_F / log t`, first
    /// decade vs last decade of the window, per class.
    pub fro_over_logt_drift: [f64; 2],
    /// (min, max) of `(SR_j − 1)·log t` over the window, per class.
    pub sr_minus_one_times_logt_band: [(f64, f64); 2],
}

pub fn band_ratio((lo, hi): (f64, f64)) -> f64 {
    hi / lo
}

fn band(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Rate diagnostics over `[t_lo, t_hi]`, which must span at least two decades.
pub fn rate_estimators(trajectory: &[TrajectoryRecord], t_lo: usize, t_hi: usize) -> Result<RateEstimates> {
    if t_lo < 2 || t_hi < 100 * t_lo {
        return Err(Error::InsufficientWindow(format!(
            "window [{t_lo}, {t_hi}] must start at t >= 2 and span two decades"
        )));
    }
    let in_window: Vec<&TrajectoryRecord> =
        trajectory.iter().filter(|r| r.t >= t_lo && r.t <= t_hi).collect();
    let first: Vec<&TrajectoryRecord> = in_window.iter().copied().filter(|r| r.t <= 10 * t_lo).collect();
    let last: Vec<&TrajectoryRecord> = in_window.iter().copied().filter(|r| r.t >= t_hi / 10).collect();
    let covers = |recs: &[&TrajectoryRecord], lo: usize, hi: usize| {
        recs.first().is_some_and(|r| r.t == lo) && recs.last().is_some_and(|r| r.t == hi)
    };
    if !covers(&first, t_lo, 10 * t_lo) || !covers(&last, t_hi / 10, t_hi) || first.len() < 2 || last.len() < 2 {
        return Err(Error::InsufficientWindow(format!(
            "trajectory lacks records at the decade edges of [{t_lo}, {t_hi}]"
        )));
    }

    let loss_band = band(in_window.iter().map(|r| r.loss * r.t as f64));
    let mean = |recs: &[&TrajectoryRecord], f: &dyn Fn(&TrajectoryRecord) -> f64| {
        recs.iter().map(|r| f(r)).sum::<f64>() / recs.len() as f64
    };
    let mut drift = [0.0; 2];
    let mut sr_band = [(0.0, 0.0); 2];
    for j in 0..2 {
        let fro = move |r: &TrajectoryRecord| if j == 0 { r.fro_pos } else { r.fro_neg };
        let sr = move |r: &TrajectoryRecord| if j == 0 { r.sr_pos } else { r.sr_neg };
        let a = mean(&first, &|r| fro(r) / (r.t as f64).ln());
        let b = mean(&last, &|r| fro(r) / (r.t as f64).ln());
        drift[j] = (b - a).abs() / a;
        sr_band[j] = band(in_window.iter().map(|r| (sr(r) - 1.0) * (r.t as f64).ln()));
    }
    Ok(RateEstimates {
        loss_t_product_band: loss_band,
        fro_over_logt_drift: drift,
        sr_minus_one_times_logt_band: sr_band,
    })
}
