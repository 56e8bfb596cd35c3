//! Oracle suite behind the `verify` command: the analytic bound checks plus
//! independent cross-checks of the numerical kernels.

use serde::Serialize;

use crate::data::gen_gaussian_mixture;
use crate::linalg::{dot, gram_solve, nnls, spectral_norm, symmetric_eigenvalues, Matrix};
use crate::metrics::{gershgorin_lambda_min_bound, stable_rank, SPECTRAL_TOL};
use crate::rng::SeededRng;
use crate::theory::{
    check_log_bounds, check_log_ratio_monotone, check_logit_ratio_bounds, log_grid, simulate_recurrence,
    IncrementRule, RecurrenceSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub oracles: Vec<OracleReport>,
    pub total_failures: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.total_failures == 0
    }
}

struct Tally {
    name: &'static str,
    checks: usize,
    failures: usize,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            checks: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    fn done(self) -> OracleReport {
        OracleReport {
            name: self.name,
            checks: self.checks,
            failures: self.failures,
            first_failure: self.first_failure,
        }
    }
}

fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.uniform_open() * (hi.ln() - lo.ln())).exp()
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gaussian()).collect()).expect("shape")
}

fn recurrences_deterministic() -> OracleReport {
    let mut tally = Tally::new("recurrence_bounds_deterministic");
    for &x0 in &[0.0, 1.0, 5.0] {
        for &(c1, c2) in &[(1.0, 1.0), (0.5, 0.5), (0.5, 2.0), (2.0, 3.0), (0.1, 1.0)] {
            for rule in [IncrementRule::Lower, IncrementRule::Upper, IncrementRule::Midpoint] {
                let spec = RecurrenceSpec {
                    x0,
                    c1,
                    c2,
                    steps: 10_000,
                    rule,
                };
                match simulate_recurrence(&spec) {
                    Ok(xs) => {
                        let rep = check_log_bounds(&xs, x0, c1, c2);
                        tally.check(rep.lower_ok && rep.upper_ok, || format!("{spec:?}: slack {}", rep.worst_slack));
                    }
                    Err(e) => tally.check(false, || e.to_string()),
                }
            }
        }
    }
    tally.done()
}

fn recurrences_random(seed: u64) -> OracleReport {
    let mut tally = Tally::new("recurrence_bounds_random");
    let mut rng = SeededRng::derive(seed, 10);
    for _ in 0..100 {
        let x0 = 3.0 * rng.uniform_open();
        let c1 = log_uniform(&mut rng, 0.05, 2.0);
        let c2 = c1 * (1.0 + 2.0 * rng.uniform_open());
        let spec = RecurrenceSpec {
            x0,
            c1,
            c2,
            steps: 10_000,
            rule: IncrementRule::Random { seed: rng.next_u64() },
        };
        match simulate_recurrence(&spec) {
            Ok(xs) => {
                let rep = check_log_bounds(&xs, x0, c1, c2);
                tally.check(rep.lower_ok && rep.upper_ok, || format!("{spec:?}: slack {}", rep.worst_slack));
            }
            Err(e) => tally.check(false, || e.to_string()),
        }
    }
    tally.done()
}

fn log_ratio_sweep(seed: u64) -> OracleReport {
    let mut tally = Tally::new("log_ratio_monotone");
    let mut rng = SeededRng::derive(seed, 11);
    let grid = log_grid(1e-3, 1e6, 60);
    for _ in 0..10_000 {
        let a = log_uniform(&mut rng, 1e-3, 1e3);
        let b = a * log_uniform(&mut rng, 1.0 + 1e-9, 1e3);
        let ok = check_log_ratio_monotone(a, b, &grid).unwrap_or(false);
        tally.check(ok, || format!("a={a}, b={b}"));
    }
    tally.done()
}

fn logit_ratio_sweep(seed: u64) -> OracleReport {
    let mut tally = Tally::new("logit_ratio_bounds");
    let mut rng = SeededRng::derive(seed, 12);
    for k in 0..10_000 {
        let z1 = -30.0 + 60.0 * rng.uniform_open();
        // Half the draws target the lower-bound domain z2 >= -1.
        let z2 = if k % 2 == 0 { -1.0 + 31.0 * rng.uniform_open() } else { -30.0 + 60.0 * rng.uniform_open() };
        let rep = check_logit_ratio_bounds(z1, z2);
        tally.check(rep.upper_ok && rep.lower_ok.unwrap_or(true), || format!("z1={z1}, z2={z2}: {rep:?}"));
    }
    tally.done()
}

fn spectral_vs_jacobi(seed: u64) -> OracleReport {
    let mut tally = Tally::new("spectral_norm_vs_jacobi");
    let mut rng = SeededRng::derive(seed, 13);
    for k in 0..20 {
        let (r, c) = (3 + k % 7, 2 + (k * 3) % 11);
        let m = random_matrix(&mut rng, r, c);
        let top = symmetric_eigenvalues(&m.gram_cols())[0].sqrt();
        match spectral_norm(&m, SPECTRAL_TOL, 100_000) {
            Ok(s) => tally.check((s.value - top).abs() <= 1e-6 * top, || format!("{r}x{c}: {} vs {top}", s.value)),
            Err(e) => tally.check(false, || e.to_string()),
        }
        let sr = stable_rank(&m).unwrap_or(f64::NAN);
        tally.check(sr >= 1.0 - 1e-9 && sr <= r.min(c) as f64 + 1e-9, || format!("{r}x{c}: stable rank {sr}"));
    }
    tally.done()
}

/// NNLS optimality certificate: `λ ≥ 0`, `g = Aᵀ(Aλ − b) ≥ 0`, `λ_i g_i = 0`.
fn nnls_certificate(seed: u64) -> OracleReport {
    let mut tally = Tally::new("nnls_kkt_certificate");
    let mut rng = SeededRng::derive(seed, 14);
    for k in 0..30 {
        let (rows, cols) = (4 + k % 9, 1 + k % 6);
        let a = random_matrix(&mut rng, rows, cols);
        let b: Vec<f64> = (0..rows).map(|_| rng.gaussian()).collect();
        let lam = match nnls(&a, &b, 1e-12) {
            Ok(l) => l,
            Err(e) => {
                tally.check(false, || e.to_string());
                continue;
            }
        };
        let resid: Vec<f64> = a.matvec(&lam).iter().zip(&b).map(|(p, q)| p - q).collect();
        let at = a.transpose();
        let g = at.matvec(&resid);
        let scale = 1e-9 * (1.0 + dot(&b, &b).sqrt()) * (1.0 + crate::linalg::frobenius_norm(&a)).powi(2);
        let ok = lam.iter().zip(&g).all(|(&l, &gi)| l >= 0.0 && gi >= -scale && (l * gi).abs() <= scale * (1.0 + l));
        tally.check(ok, || format!("{rows}x{cols}: lambda {lam:?}, grad {g:?}"));
    }
    tally.done()
}

fn gram_solve_residual(seed: u64) -> OracleReport {
    let mut tally = Tally::new("gram_solve_residual");
    let mut rng = SeededRng::derive(seed, 15);
    for k in 0..20 {
        let (n, d) = (2 + k % 5, 12 + k);
        let x = random_matrix(&mut rng, n, d);
        let b: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        match gram_solve(&x, &b) {
            Ok(z) => {
                let back = x.gram_rows().matvec(&z);
                let err = back.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                tally.check(err <= 1e-9 * (1.0 + dot(&b, &b).sqrt()), || format!("{n}x{d}: residual {err}"));
            }
            Err(e) => tally.check(false, || e.to_string()),
        }
    }
    tally.done()
}

fn gershgorin_bound(seed: u64) -> OracleReport {
    let mut tally = Tally::new("gershgorin_lower_bound");
    for k in 0..20u64 {
        let ds = match gen_gaussian_mixture(4 + (k as usize) % 6, 50 + 10 * k as usize, 1e-2, 1.0, seed.wrapping_add(k)) {
            Ok(ds) => ds,
            Err(e) => {
                tally.check(false, || e.to_string());
                continue;
            }
        };
        let bound = gershgorin_lambda_min_bound(&ds);
        let eig = symmetric_eigenvalues(&ds.x().gram_rows());
        let lmin = *eig.last().expect("nonempty");
        tally.check(bound <= lmin + 1e-9 * lmin.abs().max(1.0), || format!("bound {bound} > lambda_min {lmin}"));
    }
    tally.done()
}

pub fn run_verify(seed: u64) -> VerifyReport {
    let oracles = vec![
        recurrences_deterministic(),
        recurrences_random(seed),
        log_ratio_sweep(seed),
        logit_ratio_sweep(seed),
        spectral_vs_jacobi(seed),
        nnls_certificate(seed),
        gram_solve_residual(seed),
        gershgorin_bound(seed),
    ];
    let total_failures = oracles.iter().map(|o| o.failures).sum();
    VerifyReport {
        seed,
        oracles,
        total_failures,
    }
}
