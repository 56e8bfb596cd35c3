use gdlab::data::gen_gaussian_mixture;
use gdlab::network::{batch_gradient, empirical_loss, evaluate_all, init_network, Activation, NetworkParams};

/// Central difference with one Richardson step; `h` is chosen per coordinate
/// so that no preactivation crosses zero.
fn fd_component(p: &NetworkParams, ds: &gdlab::data::Dataset, j: usize, r: usize, k: usize, h: f64) -> f64 {
    let loss_at = |delta: f64| {
        let mut q = p.clone();
        q.class_mut(j)[(r, k)] += delta;
        empirical_loss(&q, ds).unwrap()
    };
    let central = |h: f64| (loss_at(h) - loss_at(-h)) / (2.0 * h);
    (4.0 * central(h / 2.0) - central(h)) / 3.0
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let (n, d, m) = (8, 20, 6);
    let act = Activation::leaky(0.5).unwrap();
    // First seed whose instance keeps every preactivation away from the kink.
    let (ds, params) = (0..100u64)
        .find_map(|seed| {
            let ds = gen_gaussian_mixture(n, d, 0.5, 1.0, seed).unwrap();
            let p = init_network(m, d, act, 1.0, seed).unwrap();
            let eval = evaluate_all(&p, &ds).unwrap();
            let min_abs = eval
                .preacts_pos
                .as_slice()
                .iter()
                .chain(eval.preacts_neg.as_slice())
                .fold(f64::INFINITY, |a, z| a.min(z.abs()));
            (min_abs > 1e-3).then_some((ds, p))
        })
        .expect("an instance with all |preactivations| > 1e-3");

    let all: Vec<usize> = (0..n).collect();
    let g = batch_gradient(&params, &ds, &all).unwrap();
    let eval = evaluate_all(&params, &ds).unwrap();
    let mut worst = 0.0f64;
    for j in 0..2 {
        let analytic = if j == 0 { &g.g_pos } else { &g.g_neg };
        let pre = eval.preacts(j);
        for r in 0..m {
            let min_z = (0..n).map(|i| pre[(r, i)].abs()).fold(f64::INFINITY, f64::min);
            for k in 0..d {
                let max_x = (0..n).map(|i| ds.x()[(i, k)].abs()).fold(0.0, f64::max);
                let h = (0.25 * min_z / max_x).min(1e-3);
                let numeric = fd_component(&params, &ds, j, r, k, h);
                let a = analytic[(r, k)];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                assert!(rel < 1e-6, "(j={j}, r={r}, k={k}): analytic {a:e} vs numeric {numeric:e}, rel {rel:e}");
                worst = worst.max(rel);
            }
        }
    }
    println!("worst componentwise relative error: {worst:e}");
}

#[test]
fn relu_gradient_matches_finite_differences_away_from_kinks() {
    let (n, d, m) = (6, 12, 5);
    let ds = gen_gaussian_mixture(n, d, 0.5, 1.0, 11).unwrap();
    let p = init_network(m, d, Activation::Relu, 1.0, 11).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let g = batch_gradient(&p, &ds, &all).unwrap();
    let eval = evaluate_all(&p, &ds).unwrap();
    for j in 0..2 {
        let analytic = if j == 0 { &g.g_pos } else { &g.g_neg };
        let pre = eval.preacts(j);
        for r in 0..m {
            let min_z = (0..n).map(|i| pre[(r, i)].abs()).fold(f64::INFINITY, f64::min);
            for k in 0..d {
                let max_x = (0..n).map(|i| ds.x()[(i, k)].abs()).fold(0.0, f64::max);
                let h = (0.25 * min_z / max_x).min(1e-3);
                let numeric = fd_component(&p, &ds, j, r, k, h);
                let a = analytic[(r, k)];
                assert!((a - numeric).abs() <= 1e-6 * a.abs().max(numeric.abs()).max(1e-9), "({j},{r},{k}): {a} vs {numeric}");
            }
        }
    }
}
