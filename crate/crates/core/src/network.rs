//! Two-layer network with fixed ±1/m output weights, logistic loss, exact
//! gradients, and the full-batch GD / mini-batch SGD loop.
//!
//! `f(W, x) = F₊(W₊, x) − F₋(W₋, x)` with `F_j = (1/m) Σ_r σ(⟨w_{j,r}, x⟩)`.
//! The derivative of the activation at exactly zero is taken to be 1.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, gemm_nn, gemm_nt, Matrix};
use crate::metrics::RecordSchedule;
use crate::rng::SeededRng;

/// Output-layer sign for the two neuron groups, in storage order.
pub const CLASS_SIGNS: [f64; 2] = [1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Leaky { gamma: f64 },
}

impl Activation {
    pub fn leaky(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma < 1.0 {
            Ok(Activation::Leaky { gamma })
        } else {
            Err(Error::InvalidArgument(format!(
                "leaky slope must lie in (0, 1), got {gamma}"
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Relu => Ok(()),
            Activation::Leaky { gamma } => Activation::leaky(gamma).map(|_| ()),
        }
    }

    /// Slope on the negative half-line (0 for ReLU).
    #[inline]
    pub fn negative_slope(&self) -> f64 {
        match *self {
            Activation::Relu => 0.0,
            Activation::Leaky { gamma } => gamma,
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        if z >= 0.0 {
            z
        } else {
            self.negative_slope() * z
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        if z >= 0.0 {
            1.0
        } else {
            self.negative_slope()
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, Activation::Relu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub w_pos: Matrix,
    pub w_neg: Matrix,
    pub act: Activation,
}

impl NetworkParams {
    pub fn new(w_pos: Matrix, w_neg: Matrix, act: Activation) -> Result<Self> {
        if w_pos.rows() != w_neg.rows() || w_pos.cols() != w_neg.cols() {
            return Err(Error::DimensionMismatch {
                expected: w_pos.rows() * w_pos.cols(),
                got: w_neg.rows() * w_neg.cols(),
            });
        }
        if w_pos.rows() == 0 {
            return Err(Error::InvalidArgument("network width must be at least 1".into()));
        }
        act.validate()?;
        Ok(NetworkParams { w_pos, w_neg, act })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.w_pos.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.w_pos.cols()
    }

    /// Weight block for class index `j` (0 → +1, 1 → −1).
    #[inline]
    pub fn class(&self, j: usize) -> &Matrix {
        if j == 0 {
            &self.w_pos
        } else {
            &self.w_neg
        }
    }

    #[inline]
    pub fn class_mut(&mut self, j: usize) -> &mut Matrix {
        if j == 0 {
            &mut self.w_pos
        } else {
            &mut self.w_neg
        }
    }

    /// The stacked `2m × d` matrix `[W₊; W₋]`.
    pub fn stacked(&self) -> Matrix {
        self.w_pos.vstack(&self.w_neg).expect("blocks share a column count")
    }

    pub fn scaled(&self, c: f64) -> NetworkParams {
        NetworkParams {
            w_pos: self.w_pos.scaled(c),
            w_neg: self.w_neg.scaled(c),
            act: self.act,
        }
    }

    /// Frobenius norm of the stacked weights.
    pub fn frobenius_norm(&self) -> f64 {
        let a = dot(self.w_pos.as_slice(), self.w_pos.as_slice());
        let b = dot(self.w_neg.as_slice(), self.w_neg.as_slice());
        (a + b).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w_pos.is_finite() && self.w_neg.is_finite()
    }
}

/// i.i.d. `N(0, σ₀²)` entries, `W₊` first then `W₋`, both row-major.
pub fn init_network(m: usize, d: usize, act: Activation, sigma0: f64, seed: u64) -> Result<NetworkParams> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument("m and d must be at least 1".into()));
    }
    if !(sigma0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma0 must be nonnegative, got {sigma0}")));
    }
    // stream 1 keeps init draws disjoint from a dataset generated with the same seed
    let mut rng = SeededRng::derive(seed, 1);
    let mut draw = |rows, cols| {
        let data = (0..rows * cols).map(|_| sigma0 * rng.gaussian()).collect();
        Matrix::from_vec(rows, cols, data)
    };
    let w_pos = draw(m, d)?;
    let w_neg = draw(m, d)?;
    NetworkParams::new(w_pos, w_neg, act)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub f: f64,
    pub f_pos: f64,
    pub f_neg: f64,
    pub preacts_pos: Vec<f64>,
    pub preacts_neg: Vec<f64>,
}

pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<ForwardOutput> {
    if x.len() != params.d() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            got: x.len(),
        });
    }
    let inv_m = 1.0 / params.m() as f64;
    let preacts_pos = params.w_pos.matvec(x);
    let preacts_neg = params.w_neg.matvec(x);
    let f_pos = inv_m * preacts_pos.iter().map(|&z| params.act.apply(z)).sum::<f64>();
    let f_neg = inv_m * preacts_neg.iter().map(|&z| params.act.apply(z)).sum::<f64>();
    Ok(ForwardOutput {
        f: f_pos - f_neg,
        f_pos,
        f_neg,
        preacts_pos,
        preacts_neg,
    })
}

/// `ℓ(z) = log(1 + e^{−z})`, stable for large |z|.
#[inline]
pub fn logistic_loss(z: f64) -> f64 {
    if z < -30.0 {
        -z + z.exp().ln_1p()
    } else {
        (-z).exp().ln_1p()
    }
}

/// `ℓ'(z) = −1 / (1 + e^{z})`.
#[inline]
pub fn loss_deriv(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + z.exp())
    }
}

/// Everything the update rule needs at one iterate, over a set of examples.
///
/// Matrices indexed `(r, b)` where `b` is the position inside `indices`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub indices: Vec<usize>,
    pub preacts_pos: Matrix,
    pub preacts_neg: Matrix,
    pub outputs: Vec<f64>,
    pub margins: Vec<f64>,
    pub losses: Vec<f64>,
    pub loss_derivs: Vec<f64>,
}

impl Evaluation {
    pub fn preacts(&self, j: usize) -> &Matrix {
        if j == 0 {
            &self.preacts_pos
        } else {
            &self.preacts_neg
        }
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

fn gather_rows(ds: &Dataset, indices: &[usize]) -> Matrix {
    let d = ds.d();
    let mut xb = Matrix::zeros(indices.len(), d);
    for (b, &i) in indices.iter().enumerate() {
        xb.row_mut(b).copy_from_slice(ds.x().row(i));
    }
    xb
}

fn check_compat(params: &NetworkParams, ds: &Dataset, indices: &[usize]) -> Result<()> {
    if params.d() != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            got: ds.d(),
        });
    }
    if indices.is_empty() {
        return Err(Error::InvalidArgument("index set must be nonempty".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.n()) {
        return Err(Error::InvalidArgument(format!(
            "example index {bad} out of range for n = {}",
            ds.n()
        )));
    }
    Ok(())
}

fn evaluate_on(params: &NetworkParams, xb: &Matrix, ys: &[f64], indices: Vec<usize>) -> Evaluation {
    let m = params.m();
    let nb = xb.rows();
    let mut preacts_pos = Matrix::zeros(m, nb);
    let mut preacts_neg = Matrix::zeros(m, nb);
    gemm_nt(1.0, &params.w_pos, xb, 0.0, &mut preacts_pos);
    gemm_nt(1.0, &params.w_neg, xb, 0.0, &mut preacts_neg);

    let inv_m = 1.0 / m as f64;
    let mut outputs = vec![0.0; nb];
    for (j, pre) in [&preacts_pos, &preacts_neg].into_iter().enumerate() {
        let mut sums = vec![0.0; nb];
        for row in pre.row_iter() {
            for (s, &z) in sums.iter_mut().zip(row) {
                *s += params.act.apply(z);
            }
        }
        for (o, s) in outputs.iter_mut().zip(sums) {
            *o += CLASS_SIGNS[j] * inv_m * s;
        }
    }
    let margins: Vec<f64> = outputs.iter().zip(ys).map(|(f, y)| y * f).collect();
    let losses = margins.iter().map(|&z| logistic_loss(z)).collect();
    let loss_derivs = margins.iter().map(|&z| loss_deriv(z)).collect();
    Evaluation {
        indices,
        preacts_pos,
        preacts_neg,
        outputs,
        margins,
        losses,
        loss_derivs,
    }
}

/// Forward pass over the examples in `indices`.
pub fn evaluate(params: &NetworkParams, ds: &Dataset, indices: &[usize]) -> Result<Evaluation> {
    check_compat(params, ds, indices)?;
    let xb = gather_rows(ds, indices);
    let ys: Vec<f64> = indices.iter().map(|&i| ds.y()[i]).collect();
    Ok(evaluate_on(params, &xb, &ys, indices.to_vec()))
}

pub fn evaluate_all(params: &NetworkParams, ds: &Dataset) -> Result<Evaluation> {
    check_compat(params, ds, &[0])?;
    Ok(evaluate_on(params, ds.x(), ds.y(), (0..ds.n()).collect()))
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub g_pos: Matrix,
    pub g_neg: Matrix,
    pub losses: Vec<f64>,
    pub loss_derivs: Vec<f64>,
}

/// Fills `coef[j]` (m × |B|) with `ℓ'_b σ'(⟨w_{j,r}, x_b⟩) j y_b / (|B| m)` and
/// `act_derivs` with the `σ'` values in `(j, r, b)` order.
fn update_coefficients(
    params: &NetworkParams,
    eval: &Evaluation,
    ys: &[f64],
    coef: &mut [Matrix; 2],
    act_derivs: &mut Vec<f64>,
) {
    let m = params.m();
    let nb = eval.indices.len();
    let scale = 1.0 / (nb as f64 * m as f64);
    act_derivs.clear();
    for j in 0..2 {
        let pre = eval.preacts(j);
        let c = &mut coef[j];
        for r in 0..m {
            let prow = pre.row(r);
            let crow = c.row_mut(r);
            for b in 0..nb {
                let sd = params.act.derivative(prow[b]);
                act_derivs.push(sd);
                crow[b] = scale * eval.loss_derivs[b] * sd * CLASS_SIGNS[j] * ys[b];
            }
        }
    }
}

pub fn batch_gradient(params: &NetworkParams, ds: &Dataset, indices: &[usize]) -> Result<BatchGradient> {
    let eval = evaluate(params, ds, indices)?;
    let xb = gather_rows(ds, indices);
    let ys: Vec<f64> = indices.iter().map(|&i| ds.y()[i]).collect();
    let m = params.m();
    let mut coef = [Matrix::zeros(m, indices.len()), Matrix::zeros(m, indices.len())];
    let mut sd = Vec::new();
    update_coefficients(params, &eval, &ys, &mut coef, &mut sd);
    let mut g_pos = Matrix::zeros(m, params.d());
    let mut g_neg = Matrix::zeros(m, params.d());
    gemm_nn(1.0, &coef[0], &xb, 0.0, &mut g_pos);
    gemm_nn(1.0, &coef[1], &xb, 0.0, &mut g_neg);
    Ok(BatchGradient {
        g_pos,
        g_neg,
        losses: eval.losses,
        loss_derivs: eval.loss_derivs,
    })
}

/// Empirical loss `(1/n) Σ ℓ(y_i f(W, x_i))` over the full dataset.
pub fn empirical_loss(params: &NetworkParams, ds: &Dataset) -> Result<f64> {
    Ok(evaluate_all(params, ds)?.mean_loss())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub sigma0: f64,
    pub steps: usize,
    pub batch: BatchSize,
    pub seed: u64,
    pub record: RecordSchedule,
}

impl TrainConfig {
    pub fn full_batch(eta: f64, sigma0: f64, steps: usize, seed: u64) -> Self {
        TrainConfig {
            eta,
            sigma0,
            steps,
            batch: BatchSize::Full,
            seed,
            record: RecordSchedule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.sigma0 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma0 must be nonnegative, got {}",
                self.sigma0
            )));
        }
        if self.batch == BatchSize::Size(0) {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// What an observer sees after each update.
pub struct StepInfo<'a> {
    /// Index of the new iterate: the update took `W^{(t-1)}` to `W^{(t)}`.
    pub t: usize,
    pub epoch: usize,
    pub params: &'a NetworkParams,
    pub eta: f64,
    /// Example indices used by this update.
    pub batch: &'a [usize],
    /// `ℓ'` at the previous iterate, aligned with `batch`.
    pub loss_derivs: &'a [f64],
    /// `σ'(⟨w_{j,r}, x_b⟩)` at the previous iterate, flattened in `(j, r, b)` order.
    pub act_derivs: &'a [f64],
}

pub trait Observer {
    fn on_start(&mut self, _params: &NetworkParams) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()>;
}

/// Runs `cfg.steps` updates `w ← w − η g`, notifying observers after each one.
pub fn train(
    mut params: NetworkParams,
    ds: &Dataset,
    cfg: &TrainConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<NetworkParams> {
    cfg.validate()?;
    check_compat(&params, ds, &[0])?;
    for obs in observers.iter_mut() {
        obs.on_start(&params)?;
    }
    let n = ds.n();
    let m = params.m();
    let batch = match cfg.batch {
        BatchSize::Full => n,
        BatchSize::Size(b) => b.min(n),
    };
    let full = batch == n && cfg.batch == BatchSize::Full;

    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffler = SeededRng::derive(cfg.seed, 2);
    let mut cursor = n; // forces a shuffle before the first mini-batch
    let mut epoch = 0usize;

    let mut coef = [Matrix::zeros(m, batch), Matrix::zeros(m, batch)];
    let mut act_derivs = Vec::with_capacity(2 * m * batch);

    for t in 1..=cfg.steps {
        let indices: Vec<usize> = if full {
            order.clone()
        } else {
            if cursor >= n {
                shuffler.shuffle(&mut order);
                cursor = 0;
                epoch += 1;
            }
            let end = (cursor + batch).min(n);
            let idx = order[cursor..end].to_vec();
            cursor = end;
            idx
        };
        if full {
            epoch = t;
        }

        let xb_buf: Matrix;
        let ys_buf: Vec<f64>;
        let (xb, ys): (&Matrix, &[f64]) = if full {
            (ds.x(), ds.y())
        } else {
            xb_buf = gather_rows(ds, &indices);
            ys_buf = indices.iter().map(|&i| ds.y()[i]).collect();
            (&xb_buf, &ys_buf)
        };
        let eval = evaluate_on(&params, xb, ys, indices);
        let nb = eval.indices.len();
        if coef[0].cols() != nb {
            coef = [Matrix::zeros(m, nb), Matrix::zeros(m, nb)];
        }
        update_coefficients(&params, &eval, ys, &mut coef, &mut act_derivs);
        gemm_nn(-cfg.eta, &coef[0], xb, 1.0, &mut params.w_pos);
        gemm_nn(-cfg.eta, &coef[1], xb, 1.0, &mut params.w_neg);

        if !params.is_finite() {
            return Err(Error::DivergenceDetected { step: t });
        }
        let info = StepInfo {
            t,
            epoch,
            params: &params,
            eta: cfg.eta,
            batch: &eval.indices,
            loss_derivs: &eval.loss_derivs,
            act_derivs: &act_derivs,
        };
        for obs in observers.iter_mut() {
            obs.on_step(&info)?;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gaussian_mixture, gen_orthogonal, Recipe};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_f(params: &NetworkParams, x: &[f64]) -> f64 {
        let m = params.m() as f64;
        let mut f = 0.0;
        for r in 0..params.m() {
            let zp: f64 = params.w_pos.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
            let zn: f64 = params.w_neg.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
            f += params.act.apply(zp) / m - params.act.apply(zn) / m;
        }
        f
    }

    #[test]
    fn activation_contract() {
        assert!(Activation::leaky(0.0).is_err());
        assert!(Activation::leaky(1.0).is_err());
        let a = Activation::leaky(0.3).unwrap();
        assert_eq!(a.derivative(0.0), 1.0);
        assert_eq!(Activation::Relu.derivative(0.0), 1.0);
        assert_eq!(Activation::Relu.derivative(-1e-300), 0.0);
        assert_eq!(a.apply(-2.0), -0.6);
    }

    #[test]
    fn zero_init_and_determinism() {
        let p = init_network(3, 4, Activation::Relu, 0.0, 1).unwrap();
        assert!(p.w_pos.as_slice().iter().chain(p.w_neg.as_slice()).all(|&v| v == 0.0));
        let out = forward(&p, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((out.f, out.f_pos, out.f_neg), (0.0, 0.0, 0.0));

        let a = init_network(5, 7, Activation::Relu, 0.1, 9).unwrap();
        let b = init_network(5, 7, Activation::Relu, 0.1, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_row_norms_in_band() {
        let (m, d, s0) = (100, 784, 1e-4);
        for seed in 0..5 {
            let p = init_network(m, d, Activation::Relu, s0, seed).unwrap();
            let lo = s0 * s0 * d as f64 / 2.0;
            let hi = 3.0 * s0 * s0 * d as f64 / 2.0;
            for w in [&p.w_pos, &p.w_neg] {
                for row in w.row_iter() {
                    let sq = dot(row, row);
                    assert!(sq >= lo && sq <= hi);
                }
            }
        }
    }

    #[test]
    fn forward_hand_example() {
        let act = Activation::leaky(0.5).unwrap();
        let p = NetworkParams::new(
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap(),
            act,
        )
        .unwrap();
        let out = forward(&p, &[2.0, -2.0]).unwrap();
        assert_eq!(out.f_pos, 2.0);
        assert_eq!(out.f_neg, -1.0);
        assert_eq!(out.f, 3.0);
        assert!(matches!(forward(&p, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn forward_matches_reference() {
        let p = init_network(7, 11, Activation::leaky(0.2).unwrap(), 1.0, 3).unwrap();
        let mut rng = SeededRng::new(4);
        let x: Vec<f64> = (0..11).map(|_| rng.gaussian()).collect();
        assert_relative_eq!(forward(&p, &x).unwrap().f, reference_f(&p, &x), max_relative = 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert_relative_eq!(logistic_loss(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(loss_deriv(0.0), -0.5);
        assert!(logistic_loss(700.0) < 1e-300 && logistic_loss(700.0) >= 0.0);
        assert!(loss_deriv(700.0).abs() < 1e-300);
        assert_relative_eq!(logistic_loss(-700.0), 700.0, max_relative = 1e-15);
        assert_relative_eq!(loss_deriv(-700.0), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn saturated_margins_kill_gradient() {
        let ds = gen_orthogonal(2, 2, 0).unwrap();
        // w_pos aligned with the +1 example, w_neg with the −1 example, huge scale
        let (ip, ineg) = if ds.y()[0] > 0.0 { (0, 1) } else { (1, 0) };
        let mut w_pos = Matrix::zeros(1, 2);
        let mut w_neg = Matrix::zeros(1, 2);
        w_pos.row_mut(0).copy_from_slice(&ds.x().row(ip).iter().map(|v| 1e6 * v).collect::<Vec<_>>());
        w_neg.row_mut(0).copy_from_slice(&ds.x().row(ineg).iter().map(|v| 1e6 * v).collect::<Vec<_>>());
        let p = NetworkParams::new(w_pos, w_neg, Activation::leaky(0.5).unwrap()).unwrap();
        let g = batch_gradient(&p, &ds, &[0, 1]).unwrap();
        assert!(g.g_pos.as_slice().iter().chain(g.g_neg.as_slice()).all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn single_point_hand_gradient() {
        // x = e_1, y = +1, m = 1, γ = 0.5, w_pos = [1, 0], w_neg = [−2, 0]
        let gamma = 0.5;
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let ds = Dataset::new(x, vec![1.0], Recipe::Custom, None).unwrap();
        let p = NetworkParams::new(
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[vec![-2.0, 0.0]]).unwrap(),
            Activation::leaky(gamma).unwrap(),
        )
        .unwrap();
        // f = σ(1) − σ(−2) = 1 + 1 = 2; ℓ'(2) = −1/(1+e²)
        let ld = -1.0 / (1.0 + 2f64.exp());
        let g = batch_gradient(&p, &ds, &[0]).unwrap();
        assert_relative_eq!(g.loss_derivs[0], ld, max_relative = 1e-15);
        assert_relative_eq!(g.g_pos[(0, 0)], ld, max_relative = 1e-15);
        assert_relative_eq!(g.g_neg[(0, 0)], -gamma * ld, max_relative = 1e-15);
        assert_eq!(g.g_pos[(0, 1)], 0.0);
    }

    #[test]
    fn train_zero_steps_is_identity() {
        let ds = gen_gaussian_mixture(4, 6, 0.1, 1.0, 1).unwrap();
        let p = init_network(3, 6, Activation::Relu, 0.1, 2).unwrap();
        let cfg = TrainConfig::full_batch(0.1, 0.1, 0, 0);
        assert_eq!(train(p.clone(), &ds, &cfg, &mut []).unwrap(), p);
    }

    #[test]
    fn one_step_matches_hand_update() {
        let ds = gen_gaussian_mixture(1, 5, 0.1, 1.0, 8).unwrap();
        let act = Activation::leaky(0.3).unwrap();
        let p = init_network(2, 5, act, 0.5, 3).unwrap();
        let eta = 0.7;
        let cfg = TrainConfig::full_batch(eta, 0.5, 1, 0);
        let next = train(p.clone(), &ds, &cfg, &mut []).unwrap();

        let x = ds.x().row(0);
        let y = ds.y()[0];
        let ld = loss_deriv(y * reference_f(&p, x));
        for j in 0..2 {
            for r in 0..2 {
                let w = p.class(j).row(r);
                let sd = act.derivative(dot(w, x));
                for k in 0..5 {
                    let expected = w[k] - eta / 2.0 * ld * sd * CLASS_SIGNS[j] * y * x[k];
                    assert_relative_eq!(next.class(j)[(r, k)], expected, max_relative = 1e-12, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn divergence_is_detected() {
        let ds = gen_gaussian_mixture(3, 4, 0.1, 1.0, 1).unwrap();
        let mut p = init_network(2, 4, Activation::Relu, 0.1, 1).unwrap();
        p.w_pos[(0, 0)] = f64::INFINITY;
        let cfg = TrainConfig::full_batch(0.1, 0.1, 3, 0);
        assert!(matches!(train(p, &ds, &cfg, &mut []), Err(Error::DivergenceDetected { step: 1 })));
    }

    #[test]
    fn sgd_is_deterministic() {
        let ds = gen_gaussian_mixture(20, 8, 0.1, 1.0, 1).unwrap();
        let p = init_network(4, 8, Activation::Relu, 0.1, 1).unwrap();
        let mut cfg = TrainConfig::full_batch(0.1, 0.1, 25, 5);
        cfg.batch = BatchSize::Size(6);
        let a = train(p.clone(), &ds, &cfg, &mut []).unwrap();
        let b = train(p, &ds, &cfg, &mut []).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn one_homogeneous(c in 0.01f64..100.0, seed in 0u64..1000) {
            let p = init_network(4, 6, Activation::leaky(0.4).unwrap(), 1.0, seed).unwrap();
            let mut rng = SeededRng::new(seed + 1);
            let x: Vec<f64> = (0..6).map(|_| rng.gaussian()).collect();
            let base = forward(&p, &x).unwrap().f;
            let scaled = forward(&p.scaled(c), &x).unwrap().f;
            prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + (c * base).abs()));
        }

        #[test]
        fn loss_and_derivative_ranges(z in -700.0f64..700.0) {
            prop_assert!(logistic_loss(z) >= 0.0);
            let g = loss_deriv(z);
            prop_assert!((-1.0..=0.0).contains(&g));
            if z.abs() <= 36.0 {
                prop_assert!(g > -1.0 && g < 0.0);
                prop_assert!(logistic_loss(z) > 0.0);
            }
        }
    }
}
