//! Independent reference implementations used as test oracles. None of these
//! call into the solver or aggregator code they check.

#![allow(dead_code)]

use heca_core::ridge_qp::RidgeWindow;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random forecasting window: `m` experts around a common signal, target a
/// noisy mix of a few of them.
pub fn random_window(rng: &mut ChaCha8Rng, rows: usize, m: usize) -> RidgeWindow {
    let signal: Vec<f64> = (0..rows).map(|_| 1.5 + rng.random_range(-1.0..1.0)).collect();
    let mut f = DMatrix::zeros(rows, m);
    for j in 0..m {
        let bias = rng.random_range(-0.5..0.5);
        let spread = rng.random_range(0.1..1.0);
        for t in 0..rows {
            f[(t, j)] = signal[t] + bias + spread * rng.random_range(-1.0..1.0);
        }
    }
    let y: Vec<f64> = (0..rows)
        .map(|t| signal[t] + 0.3 * rng.random_range(-1.0..1.0))
        .collect();
    RidgeWindow::new(y, f).unwrap()
}

/// `||Y - F b||^2 + lambda sum_{j in S} (b_j - 1/c)^2`, evaluated directly.
pub fn objective(w: &RidgeWindow, subset: &[usize], x: &[f64], lambda: f64) -> f64 {
    let f = w.forecasts();
    let c = subset.len() as f64;
    let sse: f64 = (0..w.rows())
        .map(|t| {
            let fit: f64 = subset.iter().zip(x).map(|(&j, b)| f[(t, j)] * b).sum();
            (w.targets()[t] - fit).powi(2)
        })
        .sum();
    let pen: f64 = x.iter().map(|b| (b - 1.0 / c).powi(2)).sum();
    sse + lambda * pen
}

/// Grid search over `{eps <= x, sum x = 1}` for subsets of size 1 to 4: a
/// full grid at `step`, then repeated local grids shrinking by 10x until
/// `final_step`. The objective is convex, so local refinement around the
/// incumbent converges to the global minimum.
pub fn grid_search(
    w: &RidgeWindow,
    subset: &[usize],
    lambda: f64,
    eps: f64,
    step: f64,
    final_step: f64,
) -> (f64, Vec<f64>) {
    let c = subset.len();
    assert!((1..=4).contains(&c));
    let slack = 1.0 - c as f64 * eps;
    let to_x = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| eps + slack * v).collect() };
    if c == 1 {
        let x = vec![1.0];
        return (objective(w, subset, &x, lambda), x);
    }
    // simplex coordinates: the first c-1 entries, the last is implied
    let mut best_s: Vec<f64> = vec![1.0 / c as f64; c];
    let mut best = objective(w, subset, &to_x(&best_s), lambda);
    let n = (1.0 / step).round() as i64;
    let visit = |s: Vec<f64>, best: &mut f64, best_s: &mut Vec<f64>| {
        let v = objective(w, subset, &to_x(&s), lambda);
        if v < *best {
            *best = v;
            *best_s = s;
        }
    };
    match c {
        2 => {
            for i in 0..=n {
                let a = i as f64 / n as f64;
                visit(vec![a, 1.0 - a], &mut best, &mut best_s);
            }
        }
        3 => {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                    visit(vec![a, b, (1.0 - a - b).max(0.0)], &mut best, &mut best_s);
                }
            }
        }
        _ => {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    for k in 0..=(n - i - j) {
                        let (a, b, d) = (i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64);
                        visit(vec![a, b, d, (1.0 - a - b - d).max(0.0)], &mut best, &mut best_s);
                    }
                }
            }
        }
    }
    // local refinement: (2K+1)^(c-1) grid around the incumbent, re-centred
    // until the incumbent stops moving before shrinking the step
    let k = 10i64;
    let mut offsets = vec![vec![]];
    for _ in 0..c - 1 {
        offsets = offsets
            .into_iter()
            .flat_map(|o: Vec<i64>| {
                (-k..=k).map(move |d| {
                    let mut o = o.clone();
                    o.push(d);
                    o
                })
            })
            .collect();
    }
    let mut h = step;
    while h > final_step * 1.0001 {
        h /= 10.0;
        for _ in 0..1000 {
            let center = best_s.clone();
            for o in &offsets {
                let mut s: Vec<f64> = (0..c - 1).map(|i| center[i] + o[i] as f64 * h).collect();
                let rest = 1.0 - s.iter().sum::<f64>();
                s.push(rest);
                if s.iter().all(|&v| (-1e-15..=1.0 + 1e-15).contains(&v)) {
                    let s: Vec<f64> = s.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                    visit(s, &mut best, &mut best_s);
                }
            }
            if best_s == center {
                break;
            }
        }
    }
    (best, to_x(&best_s))
}

/// Euclidean projection onto `{lo <= x <= 1, sum x = 1}` by bisection on the
/// shift.
pub fn project_capped_simplex(v: &[f64], lo: f64) -> Vec<f64> {
    let sum_at = |tau: f64| v.iter().map(|x| (x - tau).clamp(lo, 1.0)).sum::<f64>();
    let (mut a, mut b) = (
        v.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0,
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0,
    );
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if sum_at(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let tau = 0.5 * (a + b);
    v.iter().map(|x| (x - tau).clamp(lo, 1.0)).collect()
}

/// Projected gradient descent with step `1/L` until the projected-gradient
/// step is below `tol`.
pub fn projected_gradient(
    w: &RidgeWindow,
    subset: &[usize],
    lambda: f64,
    lo: f64,
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let c = subset.len();
    let f = w.forecasts();
    let rows = w.rows();
    let mut h = DMatrix::zeros(c, c);
    let mut lin = vec![0.0; c];
    for (a, &i) in subset.iter().enumerate() {
        for (b, &j) in subset.iter().enumerate() {
            h[(a, b)] = (0..rows).map(|t| f[(t, i)] * f[(t, j)]).sum::<f64>();
        }
        h[(a, a)] += lambda;
        lin[a] = (0..rows).map(|t| f[(t, i)] * w.targets()[t]).sum::<f64>() + lambda / c as f64;
    }
    let l = h.clone().symmetric_eigen().eigenvalues.max().max(1e-300);
    let mut x = vec![1.0 / c as f64; c];
    for _ in 0..max_iter {
        let g: Vec<f64> = (0..c)
            .map(|a| (0..c).map(|b| h[(a, b)] * x[b]).sum::<f64>() - lin[a])
            .collect();
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / l).collect();
        let next = project_capped_simplex(&trial, lo);
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if moved <= tol {
            break;
        }
    }
    x
}

/// Straightforward hedge with weights kept in the linear domain, written
/// from the pseudocode: chains of length `d`, `eta_k = kappa / B_k *
/// sqrt(ln M / k)`, `B_{k+1} = max(B_k, max l_k)`.
pub fn reference_hedge(losses: &[Vec<f64>], b1: f64, d: usize, fictitious: bool) -> Vec<Vec<f64>> {
    let m = losses[0].len();
    let kappa = if d == 2 { 2.0 } else { 2f64.sqrt() };
    let mut omega: Vec<Vec<f64>> = vec![vec![1.0; m]; losses.len() + d];
    let mut pis = Vec::new();
    let mut b = b1;
    let mut sums = vec![0.0; m];
    for t in 1..=losses.len() {
        if t <= d {
            pis.push(vec![1.0 / m as f64; m]);
            continue;
        }
        let k = t - d;
        let eta = kappa / b * ((m as f64).ln() / k as f64).sqrt();
        let l = &losses[k - 1];
        for c in 0..m {
            sums[c] += l[c];
        }
        let prev = omega[t - d - 1].clone();
        let next: Vec<f64> = (0..m)
            .map(|c| {
                let e = if fictitious { eta / k as f64 * sums[c] } else { eta * l[c] };
                prev[c] * (-e).exp()
            })
            .collect();
        let z: f64 = next.iter().sum();
        pis.push(next.iter().map(|v| v / z).collect());
        omega[t - 1] = next;
        b = l.iter().cloned().fold(b, f64::max);
    }
    pis
}
