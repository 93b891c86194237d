//! Exact best-subset selection for the egalitarian ridge problem.
//!
//! For a cardinality `c` the mixed-integer problem picks the `c` experts and
//! their weights that minimize the window SSE plus shrinkage toward `1/c`.
//! Two exact backends are provided:
//!
//! - [`solve_exhaustive`] solves the subset QP for all `C(M, c)` supports
//!   (complete subset ridge regressions), in parallel over contiguous rank
//!   blocks;
//! - [`solve_branch_bound`] runs a depth-first branch-and-bound whose node
//!   relaxation drops the cardinality restriction on the undecided experts.
//!
//! Both reduce with the same `(objective, subset)` order, so with equal leaf
//! solves they return the same subset bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HecaError, Result};
use crate::ridge_qp::{
    penalized_objective, solve_subset_ridge, solve_support, RidgeWindow, SubsetRidgeProblem,
};

/// Default cap on `M` for exhaustive enumeration.
pub const DEFAULT_MAX_EXHAUSTIVE_EXPERTS: usize = 25;

#[derive(Debug, Clone, Copy)]
pub struct CardinalityProblem<'a> {
    pub window: &'a RidgeWindow,
    pub cardinality: usize,
    pub lambda: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalitySolution {
    /// Sorted 0-based expert indices.
    pub subset: Vec<usize>,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Subsets solved (exhaustive) or search nodes visited (branch-and-bound).
    pub nodes_explored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exhaustive,
    BranchBound,
}

impl std::str::FromStr for Backend {
    type Err = HecaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Backend::Exhaustive),
            "branch-bound" | "bb" => Ok(Backend::BranchBound),
            other => Err(HecaError::validation(format!("unknown backend '{other}'"))),
        }
    }
}

pub fn solve(problem: &CardinalityProblem<'_>, backend: Backend) -> Result<CardinalitySolution> {
    match backend {
        Backend::Exhaustive => solve_exhaustive(problem),
        Backend::BranchBound => solve_branch_bound(problem),
    }
}

fn validate(problem: &CardinalityProblem<'_>) -> Result<()> {
    let m = problem.window.experts();
    let c = problem.cardinality;
    if c == 0 || c > m {
        return Err(HecaError::validation(format!(
            "cardinality {c} outside 1..={m}"
        )));
    }
    if !(problem.epsilon > 0.0) {
        return Err(HecaError::validation("epsilon must be positive"));
    }
    if c as f64 * problem.epsilon > 1.0 {
        return Err(HecaError::Infeasible(format!(
            "{c} members with lower bound {} cannot sum to one",
            problem.epsilon
        )));
    }
    Ok(())
}

/// `(objective, subset)` strictly smaller than the incumbent.
fn improves(obj: f64, subset: &[usize], best: &Option<(f64, Vec<usize>)>) -> bool {
    match best {
        None => true,
        Some((bo, bs)) => obj < *bo || (obj == *bo && subset < bs.as_slice()),
    }
}

fn solve_leaf(problem: &CardinalityProblem<'_>, subset: &[usize]) -> Result<(f64, Vec<f64>, f64)> {
    let sol = solve_subset_ridge(&SubsetRidgeProblem {
        window: problem.window,
        subset: subset.to_vec(),
        lambda: problem.lambda,
        epsilon: problem.epsilon,
    })?;
    Ok((sol.objective, sol.weights, sol.kkt_residual))
}

pub fn solve_exhaustive(problem: &CardinalityProblem<'_>) -> Result<CardinalitySolution> {
    solve_exhaustive_with(problem, DEFAULT_MAX_EXHAUSTIVE_EXPERTS)
}

/// Complete enumeration with an explicit cap on the number of experts.
pub fn solve_exhaustive_with(
    problem: &CardinalityProblem<'_>,
    max_experts: usize,
) -> Result<CardinalitySolution> {
    validate(problem)?;
    let m = problem.window.experts();
    let c = problem.cardinality;
    if m > max_experts {
        return Err(HecaError::ResourceExceeded(format!(
            "exhaustive enumeration over {m} experts exceeds the cap of {max_experts}; \
             use the branch-and-bound backend"
        )));
    }
    let total = binomial(m, c);
    let block = (total / 64).max(16);
    let starts: Vec<u64> = (0..total).step_by(block as usize).collect();

    let partials: Vec<Result<Option<(f64, Vec<usize>, Vec<f64>, f64)>>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + block).min(total);
            let mut subset = unrank_combination(m, c, start);
            let mut best: Option<(f64, Vec<usize>, Vec<f64>, f64)> = None;
            for rank in start..end {
                let (obj, w, kkt) = solve_leaf(problem, &subset)?;
                let better = match &best {
                    None => true,
                    Some((bo, bs, _, _)) => obj < *bo || (obj == *bo && subset < *bs),
                };
                if better {
                    best = Some((obj, subset.clone(), w, kkt));
                }
                if rank + 1 < end {
                    next_combination(&mut subset, m);
                }
            }
            Ok(best)
        })
        .collect();

    let mut best: Option<(f64, Vec<usize>, Vec<f64>, f64)> = None;
    for part in partials {
        if let Some((obj, subset, w, kkt)) = part? {
            let better = match &best {
                None => true,
                Some((bo, bs, _, _)) => obj < *bo || (obj == *bo && subset < *bs),
            };
            if better {
                best = Some((obj, subset, w, kkt));
            }
        }
    }
    let (objective, subset, weights, kkt_residual) =
        best.ok_or_else(|| HecaError::validation("no subsets to enumerate"))?;
    Ok(CardinalitySolution {
        subset,
        weights,
        objective,
        kkt_residual,
        nodes_explored: total as usize,
    })
}

/// Options for [`solve_branch_bound_traced`].
#[derive(Debug, Clone, Copy)]
pub struct BranchBoundOptions {
    /// Disable pruning to expand the whole tree (for checking bounds).
    pub prune: bool,
    /// Record every node in the returned [`SearchTree`].
    pub record: bool,
}

impl Default for BranchBoundOptions {
    fn default() -> Self {
        BranchBoundOptions {
            prune: true,
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub forced_in: Vec<usize>,
    pub excluded: Vec<usize>,
    /// Relaxation bound for internal nodes.
    pub bound: Option<f64>,
    /// Objective for leaves.
    pub leaf_objective: Option<f64>,
    pub pruned: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<NodeRecord>,
}

pub fn solve_branch_bound(problem: &CardinalityProblem<'_>) -> Result<CardinalitySolution> {
    solve_branch_bound_traced(problem, BranchBoundOptions::default()).map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Undecided,
    In,
    Out,
}

struct Node {
    id: usize,
    parent: Option<usize>,
    decisions: Vec<Decision>,
}

/// Depth-first branch-and-bound.
///
/// A node fixes some experts in or out. Its relaxation solves the subset QP
/// on `in ∪ undecided` with lower bound zero on the undecided experts and
/// shrinkage target `1/c` on every coordinate of that support. Any leaf `S`
/// below the node is feasible for the relaxation and pays an extra
/// `(|support| - c) / c^2` of shrinkage there, so subtracting
/// `lambda (|support| - c) / c^2` from the relaxed optimum gives a valid
/// lower bound. The undecided expert with the largest relaxed weight is
/// branched on, forced-in child first.
pub fn solve_branch_bound_traced(
    problem: &CardinalityProblem<'_>,
    options: BranchBoundOptions,
) -> Result<(CardinalitySolution, SearchTree)> {
    validate(problem)?;
    let m = problem.window.experts();
    let c = problem.cardinality;
    let target = 1.0 / c as f64;
    let forced_lower = if c as f64 * problem.epsilon <= 1e-12 {
        0.0
    } else {
        problem.epsilon
    };

    let mut tree = SearchTree::default();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut best_weights: Vec<f64> = Vec::new();
    let mut best_kkt = 0.0;
    let mut visited = 0usize;
    let mut next_id = 1usize;
    let mut stack = vec![Node {
        id: 0,
        parent: None,
        decisions: vec![Decision::Undecided; m],
    }];

    while let Some(node) = stack.pop() {
        visited += 1;
        let forced: Vec<usize> = (0..m).filter(|&j| node.decisions[j] == Decision::In).collect();
        let open: Vec<usize> = (0..m)
            .filter(|&j| node.decisions[j] == Decision::Undecided)
            .collect();
        let mut record = NodeRecord {
            id: node.id,
            parent: node.parent,
            forced_in: forced.clone(),
            excluded: (0..m).filter(|&j| node.decisions[j] == Decision::Out).collect(),
            bound: None,
            leaf_objective: None,
            pruned: false,
        };

        if forced.len() == c || forced.len() + open.len() == c {
            let mut subset = forced.clone();
            if forced.len() < c {
                subset.extend(&open);
                subset.sort_unstable();
            }
            let (obj, weights, kkt) = solve_leaf(problem, &subset)?;
            record.leaf_objective = Some(obj);
            if improves(obj, &subset, &best) {
                best = Some((obj, subset));
                best_weights = weights;
                best_kkt = kkt;
            }
            if options.record {
                tree.nodes.push(record);
            }
            continue;
        }

        let mut support: Vec<usize> = forced.iter().chain(open.iter()).copied().collect();
        support.sort_unstable();
        let lower: Vec<f64> = support
            .iter()
            .map(|&j| {
                if node.decisions[j] == Decision::In {
                    forced_lower
                } else {
                    0.0
                }
            })
            .collect();
        let relaxed = solve_support(problem.window, &support, &lower, target, problem.lambda, None)?;
        let mut full = vec![0.0; m];
        for (k, &j) in support.iter().enumerate() {
            full[j] = relaxed.x[k];
        }
        let surplus = (support.len() - c) as f64 * target * target;
        let bound = penalized_objective(problem.window, &full, &support, target, problem.lambda)
            - problem.lambda * surplus;
        record.bound = Some(bound);

        if options.prune {
            if let Some((inc, _)) = &best {
                if bound > inc + 1e-9 * (1.0 + inc.abs()) {
                    record.pruned = true;
                    if options.record {
                        tree.nodes.push(record);
                    }
                    continue;
                }
            }
        }
        if options.record {
            tree.nodes.push(record);
        }

        let mut pick = open[0];
        for &j in &open {
            if full[j] > full[pick] {
                pick = j;
            }
        }
        // forced-out child is pushed first so the forced-in child pops first
        if forced.len() + open.len() > c {
            let mut d = node.decisions.clone();
            d[pick] = Decision::Out;
            stack.push(Node { id: next_id, parent: Some(node.id), decisions: d });
            next_id += 1;
        }
        if forced.len() < c {
            let mut d = node.decisions.clone();
            d[pick] = Decision::In;
            stack.push(Node { id: next_id, parent: Some(node.id), decisions: d });
            next_id += 1;
        }
    }

    let (objective, subset) =
        best.ok_or_else(|| HecaError::Numerical("branch-and-bound found no leaf".into()))?;
    Ok((
        CardinalitySolution {
            subset,
            weights: best_weights,
            objective,
            kkt_residual: best_kkt,
            nodes_explored: visited,
        },
        tree,
    ))
}

/// Objective in the free-cardinality form: SSE plus shrinkage of the nonzero
/// weights toward `1/||b||_0`.
pub fn evaluate_objective(weights: &[f64], problem: &CardinalityProblem<'_>) -> Result<f64> {
    if weights.len() != problem.window.experts() {
        return Err(HecaError::validation(format!(
            "weight vector has length {}, expected {}",
            weights.len(),
            problem.window.experts()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(HecaError::validation("weights must be finite"));
    }
    let support: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] != 0.0).collect();
    if support.is_empty() {
        return Err(HecaError::validation(
            "zero weight vector has no support to shrink toward",
        ));
    }
    let target = 1.0 / support.len() as f64;
    Ok(penalized_objective(
        problem.window,
        weights,
        &support,
        target,
        problem.lambda,
    ))
}

/// Solutions for every cardinality plus the index of the overall minimizer
/// of [`evaluate_objective`] (smallest `c` on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityPartition {
    pub per_cardinality: Vec<CardinalitySolution>,
    /// 0-based position in `per_cardinality`; the cardinality is `best + 1`.
    pub best: usize,
}

/// Recovers the minimizer over all supports by solving each cardinality
/// separately and comparing the free-cardinality objective.
pub fn solve_cardinality_partition(
    window: &RidgeWindow,
    lambda: f64,
    epsilon: f64,
    backend: Backend,
) -> Result<CardinalityPartition> {
    let mut per_cardinality = Vec::with_capacity(window.experts());
    let mut best = 0;
    let mut best_obj = f64::INFINITY;
    for c in 1..=window.experts() {
        let problem = CardinalityProblem { window, cardinality: c, lambda, epsilon };
        let sol = solve(&problem, backend)?;
        let obj = evaluate_objective(&sol.weights, &problem)?;
        if obj < best_obj {
            best_obj = obj;
            best = c - 1;
        }
        per_cardinality.push(sol);
    }
    Ok(CardinalityPartition { per_cardinality, best })
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank_combination(n: usize, k: usize, mut rank: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            let count = binomial(n - next - 1, remaining);
            if rank < count {
                out.push(next);
                next += 1;
                break;
            }
            rank -= count;
            next += 1;
        }
    }
    out
}

/// Advances to the lexicographic successor; returns false after the last one.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
