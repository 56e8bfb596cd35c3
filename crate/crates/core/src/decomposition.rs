//! Data-correlated decomposition of the weights,
//! `w_{j,r}^{(t)} = w_{j,r}^{(0)} + Σ_i ρ_{j,r,i}^{(t)} ‖x_i‖⁻² x_i`.
//!
//! Coefficients are tracked incrementally from the exact `ℓ'` and `σ'` values
//! the trainer used, and can be cross-checked against an independent
//! least-squares solve on the Gram system.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, Cholesky, Matrix};
use crate::network::{NetworkParams, Observer, StepInfo, CLASS_SIGNS};

/// A `(j, r, i)` tensor stored as two `m × n` blocks (`j = +1` first).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(m: usize, n: usize) -> Self {
        Coefficients {
            m,
            n,
            data: vec![0.0; 2 * m * n],
        }
    }

    #[inline]
    fn offset(&self, j: usize, r: usize, i: usize) -> usize {
        (j * self.m + r) * self.n + i
    }

    #[inline]
    pub fn get(&self, j: usize, r: usize, i: usize) -> f64 {
        self.data[self.offset(j, r, i)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, r: usize, i: usize, v: f64) {
        let k = self.offset(j, r, i);
        self.data[k] = v;
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &Coefficients) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// The `m × n` block for class index `j`.
    fn block(&self, j: usize) -> &[f64] {
        &self.data[j * self.m * self.n..(j + 1) * self.m * self.n]
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionState {
    rho: Coefficients,
    w0_pos: Matrix,
    w0_neg: Matrix,
    sq_norms: Vec<f64>,
    inv_sq_norms: Vec<f64>,
    labels: Vec<f64>,
    step: usize,
}

impl DecompositionState {
    /// Starts from `ρ = 0` with `params` as the frozen initialization.
    pub fn new(params: &NetworkParams, ds: &Dataset) -> Result<Self> {
        if params.d() != ds.d() {
            return Err(Error::DimensionMismatch {
                expected: params.d(),
                got: ds.d(),
            });
        }
        Ok(DecompositionState {
            rho: Coefficients::zeros(params.m(), ds.n()),
            w0_pos: params.w_pos.clone(),
            w0_neg: params.w_neg.clone(),
            sq_norms: (0..ds.n()).map(|i| ds.sq_norm(i)).collect(),
            inv_sq_norms: ds.inv_sq_norms().to_vec(),
            labels: ds.y().to_vec(),
            step: 0,
        })
    }

    pub fn rho(&self) -> &Coefficients {
        &self.rho
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn w0(&self, j: usize) -> &Matrix {
        if j == 0 {
            &self.w0_pos
        } else {
            &self.w0_neg
        }
    }

    /// Test hook: overwrite a single coefficient.
    pub fn set_rho(&mut self, j: usize, r: usize, i: usize, v: f64) {
        self.rho.set(j, r, i, v);
    }

    /// `ρ_{j,r,i} += −η/(|B| m) · ℓ'_i · σ'_{j,r,i} · ‖x_i‖² · j y_i` for `i ∈ B`.
    ///
    /// `act_derivs` is flattened `(j, r, b)` with `b` indexing `batch`.
    pub fn track_step(
        &mut self,
        t: usize,
        batch: &[usize],
        loss_derivs: &[f64],
        act_derivs: &[f64],
        eta: f64,
    ) -> Result<()> {
        if t != self.step + 1 {
            return Err(Error::OrderingViolation {
                expected: self.step + 1,
                got: t,
            });
        }
        let m = self.rho.m;
        let nb = batch.len();
        if loss_derivs.len() != nb || act_derivs.len() != 2 * m * nb {
            return Err(Error::DimensionMismatch {
                expected: 2 * m * nb,
                got: act_derivs.len(),
            });
        }
        let scale = eta / (nb as f64 * m as f64);
        for j in 0..2 {
            for r in 0..m {
                let sd = &act_derivs[(j * m + r) * nb..(j * m + r + 1) * nb];
                for (b, &i) in batch.iter().enumerate() {
                    let inc = -scale * loss_derivs[b] * sd[b] * self.sq_norms[i] * (CLASS_SIGNS[j] * self.labels[i]);
                    let k = self.rho.offset(j, r, i);
                    self.rho.data[k] += inc;
                }
            }
        }
        self.step = t;
        Ok(())
    }

    /// `W^{(0)} + Σ_i ρ ‖x_i‖⁻² x_i` for both classes.
    pub fn reconstruct(&self, ds: &Dataset) -> (Matrix, Matrix) {
        let (m, n) = (self.rho.m, self.rho.n);
        let mut out = [self.w0_pos.clone(), self.w0_neg.clone()];
        for (j, w) in out.iter_mut().enumerate() {
            let mut c = Matrix::zeros(m, n);
            for (dst, (&rho, k)) in c
                .as_mut_slice()
                .iter_mut()
                .zip(self.rho.block(j).iter().zip((0..n).cycle()))
            {
                *dst = rho * self.inv_sq_norms[k];
            }
            gemm_nn(1.0, &c, ds.x(), 1.0, w);
        }
        let [a, b] = out;
        (a, b)
    }

    /// Largest per-neuron reconstruction error relative to `1 + ‖w_{j,r}‖`.
    pub fn reconstruction_residual(&self, params: &NetworkParams, ds: &Dataset) -> f64 {
        let (rp, rn) = self.reconstruct(ds);
        let mut worst = 0.0f64;
        for (rec, live) in [(&rp, &params.w_pos), (&rn, &params.w_neg)] {
            for (a, b) in rec.row_iter().zip(live.row_iter()) {
                let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(diff / (1.0 + norm));
            }
        }
        worst
    }

    /// `ζ = max(ρ, 0)`, `ω = min(ρ, 0)`, after checking that `ζ` lives only on
    /// on-class entries (`y_i = j`) and `ω` only on off-class ones.
    pub fn split_zeta_omega(&self) -> Result<(Coefficients, Coefficients)> {
        const SLACK: f64 = 1e-12;
        let (m, n) = (self.rho.m, self.rho.n);
        let mut zeta = Coefficients::zeros(m, n);
        let mut omega = Coefficients::zeros(m, n);
        for j in 0..2 {
            for r in 0..m {
                for i in 0..n {
                    let v = self.rho.get(j, r, i);
                    let on_class = CLASS_SIGNS[j] == self.labels[i];
                    if (on_class && v < -SLACK) || (!on_class && v > SLACK) {
                        return Err(Error::SignStructureViolation {
                            j: CLASS_SIGNS[j] as i8,
                            r,
                            i,
                            value: v,
                        });
                    }
                    zeta.set(j, r, i, v.max(0.0));
                    omega.set(j, r, i, v.min(0.0));
                }
            }
        }
        Ok((zeta, omega))
    }

    /// `min_j min_i Σ_r|ρ_{j,r,i}| / max_{i'} Σ_r|ρ_{j,r,i'}|`; `None` while all zero.
    pub fn balance_leaky(&self) -> Option<f64> {
        let (m, n) = (self.rho.m, self.rho.n);
        let mut worst: Option<f64> = None;
        for j in 0..2 {
            let sums: Vec<f64> = (0..n)
                .map(|i| (0..m).map(|r| self.rho.get(j, r, i).abs()).sum())
                .collect();
            let hi = sums.iter().copied().fold(0.0, f64::max);
            if hi == 0.0 {
                return None;
            }
            let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
            let ratio = lo / hi;
            worst = Some(worst.map_or(ratio, |w: f64| w.min(ratio)));
        }
        worst
    }

    /// `min_{i, r ∈ S_i^{(0)}} |ρ_{y_i,r,i}| / max |ρ|`, with `S_i^{(0)}` the
    /// on-class neurons active on `x_i` at initialization.
    pub fn balance_relu(&self, ds: &Dataset) -> Option<f64> {
        let hi = self.rho.max_abs();
        if hi == 0.0 {
            return None;
        }
        let m = self.rho.m;
        let mut pre = [Matrix::zeros(m, ds.n()), Matrix::zeros(m, ds.n())];
        gemm_nt(1.0, &self.w0_pos, ds.x(), 0.0, &mut pre[0]);
        gemm_nt(1.0, &self.w0_neg, ds.x(), 0.0, &mut pre[1]);
        let mut lo = f64::INFINITY;
        for i in 0..ds.n() {
            let j = if self.labels[i] > 0.0 { 0 } else { 1 };
            for r in 0..m {
                if pre[j][(r, i)] >= 0.0 {
                    lo = lo.min(self.rho.get(j, r, i).abs());
                }
            }
        }
        lo.is_finite().then_some(lo / hi)
    }
}

impl Observer for DecompositionState {
    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()> {
        self.track_step(step.t, step.batch, step.loss_derivs, step.act_derivs, step.eta)
    }
}

/// Recovers `ρ` from live weights by solving `(X Xᵀ) c = X (w − w₀)` per
/// neuron and setting `ρ_i = c_i ‖x_i‖²`. Requires linearly independent rows.
pub fn solve_coefficients_ls(
    params: &NetworkParams,
    w0_pos: &Matrix,
    w0_neg: &Matrix,
    ds: &Dataset,
) -> Result<Coefficients> {
    let (m, n) = (params.m(), ds.n());
    let chol = Cholesky::factor(&ds.x().gram_rows())?;
    let mut out = Coefficients::zeros(m, n);
    for (j, (w, w0)) in [(&params.w_pos, w0_pos), (&params.w_neg, w0_neg)].into_iter().enumerate() {
        if w.rows() != w0.rows() || w.cols() != w0.cols() {
            return Err(Error::DimensionMismatch {
                expected: w.rows() * w.cols(),
                got: w0.rows() * w0.cols(),
            });
        }
        let delta = Matrix::from_vec(
            m,
            ds.d(),
            w.as_slice().iter().zip(w0.as_slice()).map(|(a, b)| a - b).collect(),
        )?;
        // rhs for every neuron at once: (m × n) = Δ Xᵀ
        let mut rhs = Matrix::zeros(m, n);
        gemm_nt(1.0, &delta, ds.x(), 0.0, &mut rhs);
        for r in 0..m {
            let c = chol.solve(rhs.row(r));
            for (i, ci) in c.into_iter().enumerate() {
                out.set(j, r, i, ci * ds.sq_norm(i));
            }
        }
    }
    Ok(out)
}
