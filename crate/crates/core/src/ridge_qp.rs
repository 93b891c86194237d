//! Ridge regression with shrinkage toward equal weights on a fixed subset.
//!
//! For a fixed support `S` with `|S| = c` the problem is
//!
//! ```text
//! min_b  ||Y - F b||^2 + lambda * sum_{j in S} (b_j - 1/c)^2
//! s.t.   b_j = 0 off S,  eps <= b_j <= 1 on S,  sum_j b_j = 1
//! ```
//!
//! which is a small strictly convex QP whenever `lambda > 0`. It is solved
//! with a primal active-set method on the `c` support coordinates; the
//! equality constraint is carried through every equality-constrained
//! subproblem so that iterates stay on the simplex. Regressors are used as
//! given, without centering or scaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HecaError, Result};
use crate::linalg::{cholesky, cholesky_solve, Square};

/// Smallest positive subnormal double, `f64::MIN_POSITIVE * f64::EPSILON`.
pub const DEFAULT_EPSILON: f64 = 5e-324;

/// Lower bounds with `c * eps` at or below this are treated as zero during
/// the solve and restored afterwards.
const INACTIVE_LOWER_BOUND: f64 = 1e-12;
const PIVOT_THRESHOLD: f64 = 1e-12;
// Regularization added once a pivot falls under the threshold. Large enough
// that the min-norm tie-break survives the ill-conditioned solve to ~1e-10.
const TIKHONOV_SCALE: f64 = 1e-8;
const MULTIPLIER_TOL: f64 = 1e-11;
/// Solver tolerance on the scaled KKT residual.
pub const KKT_TOL: f64 = 1e-9;

/// One estimation window: targets `Y` (length `r`) and forecasts `F` (`r x M`),
/// with the Gram quantities cached for repeated subset solves.
#[derive(Debug, Clone)]
pub struct RidgeWindow {
    y: Vec<f64>,
    f: DMatrix<f64>,
    gram: Square,
    fty: Vec<f64>,
}

impl RidgeWindow {
    pub fn new(y: Vec<f64>, f: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(HecaError::validation("window must contain at least one row"));
        }
        if f.nrows() != y.len() {
            return Err(HecaError::validation(format!(
                "forecast matrix has {} rows but target window has {}",
                f.nrows(),
                y.len()
            )));
        }
        if f.ncols() == 0 {
            return Err(HecaError::validation("forecast matrix has no experts"));
        }
        if y.iter().any(|v| !v.is_finite()) || f.iter().any(|v| !v.is_finite()) {
            return Err(HecaError::validation("window data must be finite"));
        }
        let m = f.ncols();
        let mut gram = Square::zeros(m);
        let mut fty = vec![0.0; m];
        for i in 0..m {
            let ci = f.column(i);
            fty[i] = ci.iter().zip(&y).map(|(a, b)| a * b).sum();
            for j in i..m {
                let v = ci.dot(&f.column(j));
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        Ok(RidgeWindow { y, f, gram, fty })
    }

    pub fn experts(&self) -> usize {
        self.f.ncols()
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn forecasts(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Sum of squared residuals `||Y - F b||^2`, computed from the residuals
    /// directly rather than through the Gram matrix.
    pub fn sse(&self, b: &[f64]) -> f64 {
        (0..self.rows())
            .map(|t| {
                let fit: f64 = b
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(j, w)| self.f[(t, j)] * w)
                    .sum();
                let e = self.y[t] - fit;
                e * e
            })
            .sum()
    }

    /// Spectral norm of `F^T F`, i.e. the squared largest singular value of `F`.
    pub fn gram_spectral_norm(&self) -> f64 {
        let sv = self.f.clone().singular_values();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        top * top
    }
}

/// One instance of the subset problem.
#[derive(Debug, Clone)]
pub struct SubsetRidgeProblem<'a> {
    pub window: &'a RidgeWindow,
    /// Selected expert indices (0-based). Order does not matter.
    pub subset: Vec<usize>,
    pub lambda: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRidgeSolution {
    /// Length-`M` weights, zero off the subset.
    pub weights: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Objective with shrinkage toward `target` on the coordinates in `support`.
pub(crate) fn penalized_objective(
    window: &RidgeWindow,
    weights: &[f64],
    support: &[usize],
    target: f64,
    lambda: f64,
) -> f64 {
    let pen: f64 = support
        .iter()
        .map(|&j| {
            let d = weights[j] - target;
            d * d
        })
        .sum();
    window.sse(weights) + lambda * pen
}

fn check_common(window: &RidgeWindow, support: &[usize], lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(HecaError::validation(format!(
            "shrinkage intensity must be finite and non-negative, got {lambda}"
        )));
    }
    if support.is_empty() {
        return Err(HecaError::validation("subset must be non-empty"));
    }
    let m = window.experts();
    let mut seen = vec![false; m];
    for &j in support {
        if j >= m {
            return Err(HecaError::validation(format!(
                "expert index {j} out of range for {m} experts"
            )));
        }
        if seen[j] {
            return Err(HecaError::validation(format!("expert index {j} repeated in subset")));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Solves the subset problem to global optimality.
///
/// With `lambda = 0` and a rank-deficient window the minimizer is not
/// unique. A Cholesky pivot below `1e-12` of the largest diagonal triggers a
/// small Tikhonov term, which selects the minimum-norm minimizer to about
/// `1e-10`.
pub fn solve_subset_ridge(problem: &SubsetRidgeProblem<'_>) -> Result<SubsetRidgeSolution> {
    solve_subset_ridge_from(problem, None)
}

/// Solves a sequence of problems over an ascending `lambdas` grid on one
/// subset, warm-starting each solve from the previous optimum.
pub fn solve_lambda_path(
    window: &RidgeWindow,
    subset: &[usize],
    lambdas: &[f64],
    epsilon: f64,
) -> Result<Vec<SubsetRidgeSolution>> {
    let mut out: Vec<SubsetRidgeSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let problem = SubsetRidgeProblem {
            window,
            subset: subset.to_vec(),
            lambda,
            epsilon,
        };
        let sol = solve_subset_ridge_from(&problem, out.last().map(|s| s.weights.as_slice()))?;
        out.push(sol);
    }
    Ok(out)
}

fn solve_subset_ridge_from(
    problem: &SubsetRidgeProblem<'_>,
    start: Option<&[f64]>,
) -> Result<SubsetRidgeSolution> {
    let window = problem.window;
    let mut subset = problem.subset.clone();
    subset.sort_unstable();
    check_common(window, &subset, problem.lambda)?;
    let eps = problem.epsilon;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(HecaError::validation(format!("epsilon must be positive, got {eps}")));
    }
    let c = subset.len();
    if c as f64 * eps > 1.0 {
        return Err(HecaError::Infeasible(format!(
            "{c} experts with lower bound {eps} cannot sum to one"
        )));
    }
    let target = 1.0 / c as f64;
    let inactive = c as f64 * eps <= INACTIVE_LOWER_BOUND;
    let lower = vec![if inactive { 0.0 } else { eps }; c];
    let start_reduced: Option<Vec<f64>> =
        start.map(|w| subset.iter().map(|&j| w[j]).collect::<Vec<_>>());
    let reduced = solve_support(
        window,
        &subset,
        &lower,
        target,
        problem.lambda,
        start_reduced.as_deref(),
    )?;

    let mut weights = vec![0.0; window.experts()];
    for (k, &j) in subset.iter().enumerate() {
        weights[j] = reduced.x[k];
    }
    if inactive {
        snap_to_lower_bound(&mut weights, &subset, eps);
    }
    let objective = penalized_objective(window, &weights, &subset, target, problem.lambda);
    Ok(SubsetRidgeSolution {
        weights,
        objective,
        kkt_residual: reduced.kkt,
    })
}

/// Raises weights below `eps` to `eps` and takes the excess from the largest
/// weight, keeping every subset member strictly positive.
fn snap_to_lower_bound(weights: &mut [f64], subset: &[usize], eps: f64) {
    let mut added = 0.0;
    for &j in subset {
        if weights[j] < eps {
            added += eps - weights[j];
            weights[j] = eps;
        }
    }
    if added > 0.0 {
        // first maximum, so ties resolve to the smallest index
        let mut top = subset[0];
        for &j in subset {
            if weights[j] > weights[top] {
                top = j;
            }
        }
        weights[top] -= added;
    }
}

pub(crate) struct Reduced {
    pub x: Vec<f64>,
    pub kkt: f64,
}

/// Minimizes `||Y - F_S x||^2 + lambda ||x - target||^2` over
/// `{lower <= x <= 1, sum x = 1}` on the support coordinates.
pub(crate) fn solve_support(
    window: &RidgeWindow,
    support: &[usize],
    lower: &[f64],
    target: f64,
    lambda: f64,
    start: Option<&[f64]>,
) -> Result<Reduced> {
    let n = support.len();
    let mut h = window.gram.principal(support);
    let mut lin: Vec<f64> = support.iter().map(|&j| window.fty[j]).collect();
    for i in 0..n {
        h.set(i, i, h.at(i, i) + lambda);
        lin[i] += lambda * target;
    }
    let max_diag = h.max_abs_diag();
    if cholesky(&h, PIVOT_THRESHOLD * max_diag).is_none() {
        let delta = TIKHONOV_SCALE * max_diag.max(1.0);
        for i in 0..n {
            h.set(i, i, h.at(i, i) + delta);
        }
    }
    active_set(&h, &lin, lower, start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Lower,
    Upper,
}

/// Primal active-set method for `min 1/2 x'Hx - lin'x` subject to
/// `lower <= x <= 1` and `sum x = 1`. `H` must be positive definite.
fn active_set(h: &Square, lin: &[f64], lower: &[f64], start: Option<&[f64]>) -> Result<Reduced> {
    let n = h.n;
    let scale = h
        .data
        .iter()
        .chain(lin.iter())
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let sum_lower: f64 = lower.iter().sum();
    if sum_lower > 1.0 + 1e-15 {
        return Err(HecaError::Infeasible("lower bounds exceed the unit budget".into()));
    }

    if n == 1 {
        let x = vec![1.0];
        let status = vec![Status::Upper];
        let kkt = kkt_residual(h, lin, lower, &x, &status, scale);
        return Ok(Reduced { x, kkt });
    }
    let slack = 1.0 - sum_lower;
    if slack <= 1e-15 {
        let x = lower.to_vec();
        let status = vec![Status::Lower; n];
        let kkt = kkt_residual(h, lin, lower, &x, &status, scale);
        return Ok(Reduced { x, kkt });
    }

    let mut x: Vec<f64> = match start {
        Some(s) if is_feasible(s, lower) => s.to_vec(),
        _ => lower.iter().map(|lo| lo + slack / n as f64).collect(),
    };
    let mut status: Vec<Status> = x
        .iter()
        .zip(lower)
        .map(|(&xi, &lo)| {
            if xi <= lo {
                Status::Lower
            } else if xi >= 1.0 {
                Status::Upper
            } else {
                Status::Free
            }
        })
        .collect();
    if status.iter().all(|s| *s != Status::Free) {
        let pick = status.iter().position(|s| *s == Status::Upper).unwrap_or(0);
        status[pick] = Status::Free;
    }

    let max_iter = 50 * n + 100;
    let mut at_subspace_min = false;
    for _ in 0..max_iter {
        let grad = gradient(h, lin, &x);
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();

        if !at_subspace_min && free.len() >= 2 {
            let hff = h.principal(&free);
            let l = cholesky(&hff, 0.0).ok_or_else(|| {
                HecaError::Numerical("reduced Hessian lost positive definiteness".into())
            })?;
            let gf: Vec<f64> = free.iter().map(|&i| grad[i]).collect();
            let u = cholesky_solve(&l, &gf);
            let v = cholesky_solve(&l, &vec![1.0; free.len()]);
            let nu = u.iter().sum::<f64>() / v.iter().sum::<f64>();
            let p: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| -ui + nu * vi).collect();

            let mut alpha = 1.0;
            let mut blocking: Option<(usize, Status)> = None;
            for (k, &i) in free.iter().enumerate() {
                let (a, bound) = if p[k] < 0.0 {
                    ((lower[i] - x[i]) / p[k], Status::Lower)
                } else if p[k] > 0.0 {
                    ((1.0 - x[i]) / p[k], Status::Upper)
                } else {
                    continue;
                };
                let a = a.max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, bound));
                }
            }
            for (k, &i) in free.iter().enumerate() {
                x[i] += alpha * p[k];
            }
            match blocking {
                Some((i, bound)) => {
                    x[i] = if bound == Status::Lower { lower[i] } else { 1.0 };
                    status[i] = bound;
                    at_subspace_min = false;
                }
                None => at_subspace_min = true,
            }
            continue;
        }

        // Stationary on the current working set: inspect multipliers.
        let grad = if at_subspace_min { gradient(h, lin, &x) } else { grad };
        let nu = equality_multiplier(&grad, &status);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let mu = match status[i] {
                Status::Free => continue,
                Status::Lower => grad[i] - nu,
                Status::Upper => nu - grad[i],
            };
            if worst.map_or(true, |(_, w)| mu < w) {
                worst = Some((i, mu));
            }
        }
        match worst {
            Some((i, mu)) if mu < -MULTIPLIER_TOL * scale => {
                status[i] = Status::Free;
                at_subspace_min = false;
            }
            _ => {
                let kkt = kkt_residual(h, lin, lower, &x, &status, scale);
                return Ok(Reduced { x, kkt });
            }
        }
    }
    Err(HecaError::Numerical(format!(
        "active-set solver did not converge in {max_iter} iterations"
    )))
}

fn is_feasible(x: &[f64], lower: &[f64]) -> bool {
    let sum: f64 = x.iter().sum();
    (sum - 1.0).abs() <= 1e-12 && x.iter().zip(lower).all(|(&xi, &lo)| xi >= lo && xi <= 1.0)
}

fn gradient(h: &Square, lin: &[f64], x: &[f64]) -> Vec<f64> {
    (0..h.n)
        .map(|i| (0..h.n).map(|j| h.at(i, j) * x[j]).sum::<f64>() - lin[i])
        .collect()
}

fn equality_multiplier(grad: &[f64], status: &[Status]) -> f64 {
    let free: Vec<f64> = grad
        .iter()
        .zip(status)
        .filter(|(_, s)| **s == Status::Free)
        .map(|(g, _)| *g)
        .collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let min_lower = grad
        .iter()
        .zip(status)
        .filter(|(_, s)| **s == Status::Lower)
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    let max_upper = grad
        .iter()
        .zip(status)
        .filter(|(_, s)| **s == Status::Upper)
        .map(|(g, _)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    match (min_lower.is_finite(), max_upper.is_finite()) {
        (true, true) => 0.5 * (min_lower + max_upper),
        (true, false) => min_lower,
        (false, true) => max_upper,
        (false, false) => 0.0,
    }
}

/// Largest violation among stationarity, sign of bound multipliers,
/// complementarity, and primal feasibility. Dual quantities are divided by
/// the problem scale `max(1, |H|_max, |lin|_max)`.
fn kkt_residual(
    h: &Square,
    lin: &[f64],
    lower: &[f64],
    x: &[f64],
    status: &[Status],
    scale: f64,
) -> f64 {
    let grad = gradient(h, lin, x);
    let nu = equality_multiplier(&grad, status);
    let mut dual: f64 = 0.0;
    let mut compl: f64 = 0.0;
    for i in 0..x.len() {
        let r = grad[i] - nu;
        match status[i] {
            Status::Free => dual = dual.max(r.abs()),
            Status::Lower => {
                dual = dual.max((-r).max(0.0));
                compl = compl.max((r.max(0.0) * (x[i] - lower[i])).abs());
            }
            Status::Upper => {
                dual = dual.max(r.max(0.0));
                compl = compl.max(((-r).max(0.0) * (1.0 - x[i])).abs());
            }
        }
    }
    let sum: f64 = x.iter().sum();
    let mut primal = (sum - 1.0).abs();
    for (&xi, &lo) in x.iter().zip(lower) {
        primal = primal.max((lo - xi).max(0.0)).max((xi - 1.0).max(0.0));
    }
    (dual / scale).max(compl / scale).max(primal)
}
