use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{check_near_orthogonality, Dataset, NearOrthReport};
use crate::decomposition::{solve_coefficients_ls, DecompositionState};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::trajectory::write_trajectory;
use crate::linalg::frobenius_norm;
use crate::metrics::{
    gershgorin_lambda_min_bound, kkt_residual, lderiv_ratio_max, margins_from_raw, spectral, stable_rank,
    ActivationPattern, TrajectoryRecord,
};
use crate::network::{evaluate_all, init_network, train, Activation, NetworkParams, Observer, StepInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub d: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub p: f64,
    pub r_ratio: f64,
    /// Near-orthogonality with constant 1 (γ from the config, 1 for ReLU).
    pub near_orthogonality: NearOrthReport,
    pub gershgorin_lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    /// Largest tracker reconstruction residual over recorded steps.
    pub max_reconstruction_residual: f64,
    /// Largest tracker-vs-least-squares coefficient gap; absent when the
    /// check was disabled or the Gram matrix is singular.
    pub max_ls_coefficient_error: Option<f64>,
    pub ls_checks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub dataset: DatasetSummary,
    pub start_step: usize,
    pub end_step: usize,
    pub wall_time_secs: f64,
    pub termination: Termination,
    pub oracle: OracleSummary,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Raw margins `y_i f(W, x_i)` at every recorded step.
    pub margin_history: Vec<(usize, Vec<f64>)>,
    pub final_params: Option<NetworkParams>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.manifest.termination == Termination::Completed
    }
}

/// Observer that owns the decomposition tracker and emits one
/// [`TrajectoryRecord`] per scheduled step.
struct Recorder<'a> {
    ds: &'a Dataset,
    act: Activation,
    tracker: DecompositionState,
    schedule: Vec<usize>,
    next: usize,
    oracle_checks: bool,
    ls_enabled: bool,
    records: Vec<TrajectoryRecord>,
    margin_history: Vec<(usize, Vec<f64>)>,
    prev_pattern: Option<ActivationPattern>,
    max_recon: f64,
    max_ls_err: Option<f64>,
    ls_checks: usize,
    last_step: usize,
}

fn stable_rank_or_nan(w: &crate::linalg::Matrix) -> Result<f64> {
    match stable_rank(w) {
        Ok(v) => Ok(v),
        Err(Error::ZeroMatrix) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

impl<'a> Recorder<'a> {
    fn record(&mut self, t: usize, params: &NetworkParams) -> Result<()> {
        let ds = self.ds;
        let eval = evaluate_all(params, ds)?;
        let fro_pos = frobenius_norm(&params.w_pos);
        let fro_neg = frobenius_norm(&params.w_neg);
        let fro = params.frobenius_norm();
        let spec_or_zero = |w: &crate::linalg::Matrix, f: f64| if f == 0.0 { Ok(0.0) } else { spectral(w) };
        let spec_pos = spec_or_zero(&params.w_pos, fro_pos)?;
        let spec_neg = spec_or_zero(&params.w_neg, fro_neg)?;

        let (margin_min, margin_max) = eval
            .margins
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let spread = if fro > 0.0 {
            margins_from_raw(eval.margins.clone(), fro)?.spread
        } else {
            f64::NAN
        };

        let pattern = ActivationPattern::from_preacts([&eval.preacts_pos, &eval.preacts_neg], t);
        let labels = ds.y();
        let pattern_frozen = if self.act.is_relu() {
            self.prev_pattern.as_ref().is_some_and(|p| p.same_bits(&pattern))
        } else {
            pattern.matches_sign_template(labels)
        };
        let relu_monotone_ok = self
            .prev_pattern
            .as_ref()
            .map_or(true, |p| p.on_class_violations(&pattern, labels) == 0);

        let kkt = if self.oracle_checks && fro > 0.0 {
            kkt_residual(params, ds)?.residual
        } else {
            f64::NAN
        };

        self.max_recon = self.max_recon.max(self.tracker.reconstruction_residual(params, ds));
        if self.ls_enabled {
            match solve_coefficients_ls(params, self.tracker.w0(0), self.tracker.w0(1), ds) {
                Ok(ls) => {
                    let gap = ls.max_abs_diff(self.tracker.rho());
                    self.max_ls_err = Some(self.max_ls_err.map_or(gap, |g| g.max(gap)));
                    self.ls_checks += 1;
                }
                Err(Error::SingularGram { .. }) => self.ls_enabled = false,
                Err(e) => return Err(e),
            }
        }

        self.records.push(TrajectoryRecord {
            t,
            loss: eval.mean_loss(),
            fro_pos,
            fro_neg,
            spec_pos,
            spec_neg,
            sr_pos: stable_rank_or_nan(&params.w_pos)?,
            sr_neg: stable_rank_or_nan(&params.w_neg)?,
            sr_full: stable_rank_or_nan(&params.stacked())?,
            margin_min,
            margin_max,
            norm_margin_spread: spread,
            pattern_frozen,
            relu_monotone_ok,
            balance_leaky: self.tracker.balance_leaky().unwrap_or(f64::NAN),
            balance_relu: self.tracker.balance_relu(ds).unwrap_or(f64::NAN),
            kkt_residual: kkt,
            lderiv_ratio_max: lderiv_ratio_max(&eval.loss_derivs)?,
        });
        self.margin_history.push((t, eval.margins));
        self.prev_pattern = Some(pattern);
        Ok(())
    }

    fn maybe_record(&mut self, t: usize, params: &NetworkParams) -> Result<()> {
        if self.schedule.get(self.next) == Some(&t) {
            self.next += 1;
            self.record(t, params)?;
        }
        Ok(())
    }
}

impl Observer for Recorder<'_> {
    fn on_start(&mut self, params: &NetworkParams) -> Result<()> {
        self.maybe_record(0, params)
    }

    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()> {
        self.tracker.on_step(step)?;
        self.last_step = step.t;
        self.maybe_record(step.t, step.params)
    }
}

fn summarize(cfg: &ExperimentConfig, ds: &Dataset) -> Result<DatasetSummary> {
    let s = ds.stats();
    let gamma = match cfg.activation()? {
        Activation::Relu => 1.0,
        Activation::Leaky { gamma } => gamma,
    };
    Ok(DatasetSummary {
        n: ds.n(),
        d: ds.d(),
        r_min: s.r_min,
        r_max: s.r_max,
        p: s.p,
        r_ratio: s.r_ratio,
        near_orthogonality: check_near_orthogonality(ds, gamma, 1.0)?,
        gershgorin_lambda_min: gershgorin_lambda_min_bound(ds),
    })
}

/// Runs a validated config, capturing training failures in the manifest
/// instead of returning them. Setup errors (config, data, init) still
/// propagate.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let act = cfg.activation()?;
    let ds = cfg.build_dataset()?;
    let params = init_network(cfg.m, ds.d(), act, cfg.sigma0, cfg.seed)?;
    let dataset = summarize(cfg, &ds)?;

    let mut recorder = Recorder {
        ds: &ds,
        act,
        tracker: DecompositionState::new(&params, &ds)?,
        schedule: cfg.schedule().points(cfg.steps),
        next: 0,
        oracle_checks: cfg.oracle_checks,
        ls_enabled: cfg.oracle_checks && ds.n() <= ds.d(),
        records: Vec::new(),
        margin_history: Vec::new(),
        prev_pattern: None,
        max_recon: 0.0,
        max_ls_err: None,
        ls_checks: 0,
        last_step: 0,
    };
    let result = train(params, &ds, &cfg.train_config(), &mut [&mut recorder]);
    let (termination, final_params) = match result {
        Ok(p) => (Termination::Completed, Some(p)),
        Err(e) => (Termination::Failed { reason: e.to_string() }, None),
    };

    let manifest = RunManifest {
        config: cfg.clone(),
        config_hash: cfg.content_hash(),
        dataset,
        start_step: 0,
        end_step: recorder.last_step,
        wall_time_secs: started.elapsed().as_secs_f64(),
        termination,
        oracle: OracleSummary {
            max_reconstruction_residual: recorder.max_recon,
            max_ls_coefficient_error: recorder.max_ls_err,
            ls_checks: recorder.ls_checks,
        },
    };
    let outcome = RunOutcome {
        manifest,
        trajectory: recorder.records,
        margin_history: recorder.margin_history,
        final_params,
    };
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &outcome, cfg.write_weights)?;
    }
    Ok(outcome)
}

/// Like [`execute`], but a failed run is an error (after its partial
/// trajectory and manifest have been written).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = execute(cfg)?;
    match &outcome.manifest.termination {
        Termination::Completed => Ok(outcome),
        Termination::Failed { reason } => Err(Error::Config(format!("run failed: {reason}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub dtype: String,
    pub shape: [usize; 3],
    pub order: String,
}

pub fn write_outputs(dir: &Path, outcome: &RunOutcome, weights: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trajectory(&dir.join("trajectory.csv"), &outcome.trajectory)?;
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&outcome.manifest)?;
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    if let (true, Some(p)) = (weights, &outcome.final_params) {
        write_weights(dir, p)?;
    }
    Ok(())
}

/// `weights.bin` holds `W_{+1}` then `W_{-1}`, each row-major `m × d`, as
/// little-endian f64; `weights.json` records the layout.
pub fn write_weights(dir: &Path, p: &NetworkParams) -> Result<()> {
    let path = dir.join("weights.bin");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for v in p.w_pos.as_slice().iter().chain(p.w_neg.as_slice()) {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let sidecar = WeightsSidecar {
        dtype: "f64le".into(),
        shape: [2, p.m(), p.d()],
        order: "class (+1, -1), neuron, input; row-major".into(),
    };
    let side_path = dir.join("weights.json");
    fs::write(&side_path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&side_path, e))
}

pub fn read_weights(dir: &Path, act: Activation) -> Result<NetworkParams> {
    let side_path = dir.join("weights.json");
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: WeightsSidecar = serde_json::from_str(&text)?;
    let path = dir.join("weights.bin");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let [_, m, d] = side.shape;
    if bytes.len() != 16 * m * d {
        return Err(Error::TruncatedFile { path });
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let (a, b) = vals.split_at(m * d);
    NetworkParams::new(
        crate::linalg::Matrix::from_vec(m, d, a.to_vec())?,
        crate::linalg::Matrix::from_vec(m, d, b.to_vec())?,
        act,
    )
}
