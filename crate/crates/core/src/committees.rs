//! Rolling-window egalitarian committees.
//!
//! At round `t` the committee of size `c` is fitted on the window of rows
//! `t-l-r+1 ..= t-l` (oldest first) for every shrinkage intensity in the
//! grid. The intensity is chosen by pseudo-out-of-sample validation over the
//! previous `r_val` rounds, each validation fit using only the data that was
//! available at its own round. The committee forecast is `f_t' beta`.

use std::collections::HashMap;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HecaError, Result};
use crate::panel::ForecastPanel;
use crate::ridge_qp::{RidgeWindow, DEFAULT_EPSILON};
use crate::subset_select::{solve, Backend, CardinalityProblem, CardinalitySolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeConfig {
    /// Estimation window length `r`.
    pub window: usize,
    /// Validation periods `r_val`.
    pub val_window: usize,
    /// Ascending, positive shrinkage grid.
    pub lambda_grid: Vec<f64>,
    /// Lag `l` between the last usable target and the forecast round.
    pub lag: usize,
    pub epsilon: f64,
    pub backend: Backend,
}

impl CommitteeConfig {
    /// `r = 16`, `r_val = 1`, grid `0.01, 0.02, ..., 2.00`, tiny `eps`.
    pub fn with_lag(lag: usize) -> Self {
        CommitteeConfig {
            window: 16,
            val_window: 1,
            lambda_grid: (1..=200).map(|g| g as f64 / 100.0).collect(),
            lag,
            epsilon: DEFAULT_EPSILON,
            backend: Backend::BranchBound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.val_window == 0 {
            return Err(HecaError::validation("window lengths must be positive"));
        }
        if self.lag == 0 {
            return Err(HecaError::validation("lag must be at least 1"));
        }
        if self.lambda_grid.is_empty() {
            return Err(HecaError::validation("lambda grid is empty"));
        }
        if self.lambda_grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HecaError::validation("lambda grid values must be positive"));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HecaError::validation("lambda grid must be strictly ascending"));
        }
        if !(self.epsilon > 0.0) {
            return Err(HecaError::validation("epsilon must be positive"));
        }
        Ok(())
    }

    /// First 0-based row at which a single fit is possible.
    pub fn first_fit_round(&self) -> usize {
        self.lag + self.window - 1
    }

    /// First 0-based row at which a tuned committee forecast is possible.
    pub fn first_forecast_round(&self) -> usize {
        2 * self.lag + self.window + self.val_window - 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeForecasts {
    /// 0-based panel row.
    pub t: usize,
    /// Entry `c - 1` is the forecast of the committee with `c` members.
    pub yhat: Vec<f64>,
    pub members: Vec<Vec<usize>>,
    pub lambda_hat: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

type FitKey = (usize, usize, u64);

/// Memo of `(round, c, lambda) -> fit`. Fits are deterministic, so a cached
/// value is bit-identical to a recomputation.
#[derive(Debug, Default, Clone)]
pub struct FitCache {
    fits: HashMap<FitKey, CardinalitySolution>,
}

impl FitCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    /// Drops fits for rounds before `round`.
    pub fn retain_from(&mut self, round: usize) {
        self.fits.retain(|k, _| k.0 >= round);
    }
}

fn key(round: usize, c: usize, lambda: f64) -> FitKey {
    (round, c, lambda.to_bits())
}

/// Estimation window for a fit at row `t`.
pub fn window_at(panel: &ForecastPanel, t: usize, config: &CommitteeConfig) -> Result<RidgeWindow> {
    let first = config.first_fit_round();
    if t < first {
        return Err(HecaError::BurnIn {
            round: t,
            first_feasible: first,
        });
    }
    if t >= panel.len() {
        return Err(HecaError::validation(format!("round {t} beyond the panel")));
    }
    let last = t - config.lag;
    if last >= panel.realized_len() {
        return Err(HecaError::validation(format!(
            "target for period {} is not realized",
            panel.periods()[last]
        )));
    }
    if !panel.is_complete() {
        return Err(HecaError::validation("panel must be imputed before fitting"));
    }
    let start = last + 1 - config.window;
    let y: Vec<f64> = (start..=last).map(|s| panel.target()[s].unwrap()).collect();
    let f = DMatrix::from_fn(config.window, panel.num_experts(), |i, j| {
        panel.values()[(start + i, j)]
    });
    RidgeWindow::new(y, f)
}

/// Best `c`-member committee at row `t` for a given intensity.
pub fn fit_committee(
    panel: &ForecastPanel,
    t: usize,
    c: usize,
    lambda: f64,
    config: &CommitteeConfig,
) -> Result<CardinalitySolution> {
    let window = window_at(panel, t, config)?;
    solve(
        &CardinalityProblem {
            window: &window,
            cardinality: c,
            lambda,
            epsilon: config.epsilon,
        },
        config.backend,
    )
}

fn check_forecast_round(panel: &ForecastPanel, t: usize, config: &CommitteeConfig) -> Result<()> {
    config.validate()?;
    let first = config.first_forecast_round();
    if t < first {
        return Err(HecaError::BurnIn {
            round: t,
            first_feasible: first,
        });
    }
    if t >= panel.len() {
        return Err(HecaError::validation(format!("round {t} beyond the panel")));
    }
    Ok(())
}

fn validation_rounds(t: usize, config: &CommitteeConfig) -> RangeInclusive<usize> {
    (t + 1 - config.lag - config.val_window)..=(t - config.lag)
}

fn validation_loss(
    panel: &ForecastPanel,
    t: usize,
    c: usize,
    lambda: f64,
    config: &CommitteeConfig,
    fits: &HashMap<FitKey, CardinalitySolution>,
) -> f64 {
    validation_rounds(t, config)
        .map(|u| {
            let beta = &fits[&key(u, c, lambda)].weights;
            let fit: f64 = panel
                .values()
                .row(u)
                .iter()
                .zip(beta)
                .map(|(f, b)| f * b)
                .sum();
            (panel.target()[u].unwrap() - fit).powi(2)
        })
        .sum()
}

fn argmin_lambda(
    panel: &ForecastPanel,
    t: usize,
    c: usize,
    config: &CommitteeConfig,
    fits: &HashMap<FitKey, CardinalitySolution>,
) -> f64 {
    let mut best = config.lambda_grid[0];
    let mut best_loss = f64::INFINITY;
    for &lambda in &config.lambda_grid {
        let loss = validation_loss(panel, t, c, lambda, config, fits);
        // strict improvement keeps the smallest intensity on ties
        if loss < best_loss {
            best_loss = loss;
            best = lambda;
        }
    }
    best
}

/// Fills `fits` with every `(round, c, lambda)` in `wanted` that is missing.
fn ensure_fits(
    panel: &ForecastPanel,
    wanted: Vec<(usize, usize, f64)>,
    config: &CommitteeConfig,
    fits: &mut HashMap<FitKey, CardinalitySolution>,
) -> Result<()> {
    let mut missing: Vec<(usize, usize, f64)> = wanted
        .into_iter()
        .filter(|&(u, c, l)| !fits.contains_key(&key(u, c, l)))
        .collect();
    missing.sort_by_key(|m| (m.0, m.1, m.2.to_bits()));
    missing.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2.to_bits() == b.2.to_bits());
    let mut rounds: Vec<usize> = missing.iter().map(|m| m.0).collect();
    rounds.dedup();
    let windows: HashMap<usize, RidgeWindow> = rounds
        .iter()
        .map(|&u| Ok((u, window_at(panel, u, config)?)))
        .collect::<Result<_>>()?;

    let solved: Vec<Result<CardinalitySolution>> = missing
        .par_iter()
        .map(|&(u, c, lambda)| {
            solve(
                &CardinalityProblem {
                    window: &windows[&u],
                    cardinality: c,
                    lambda,
                    epsilon: config.epsilon,
                },
                config.backend,
            )
        })
        .collect();
    for (&(u, c, lambda), sol) in missing.iter().zip(solved) {
        fits.insert(key(u, c, lambda), sol?);
    }
    Ok(())
}

/// Validated shrinkage intensity for committee size `c` at row `t`.
pub fn select_lambda(
    panel: &ForecastPanel,
    t: usize,
    c: usize,
    config: &CommitteeConfig,
) -> Result<f64> {
    check_forecast_round(panel, t, config)?;
    if config.lambda_grid.len() == 1 {
        return Ok(config.lambda_grid[0]);
    }
    let mut fits = HashMap::new();
    let wanted = validation_rounds(t, config)
        .flat_map(|u| config.lambda_grid.iter().map(move |&l| (u, c, l)))
        .collect();
    ensure_fits(panel, wanted, config, &mut fits)?;
    Ok(argmin_lambda(panel, t, c, config, &fits))
}

/// Forecasts of all `M` committees at row `t`.
///
/// With a cache, fits from earlier rounds are reused; results are identical
/// either way.
pub fn committee_round(
    panel: &ForecastPanel,
    t: usize,
    config: &CommitteeConfig,
    cache: Option<&mut FitCache>,
) -> Result<CommitteeForecasts> {
    check_forecast_round(panel, t, config)?;
    let m = panel.num_experts();
    let mut local = FitCache::new();
    let cache = cache.unwrap_or(&mut local);
    let fits = &mut cache.fits;

    let lambda_hat: Vec<f64> = if config.lambda_grid.len() == 1 {
        vec![config.lambda_grid[0]; m]
    } else {
        let wanted = validation_rounds(t, config)
            .flat_map(|u| {
                (1..=m).flat_map(move |c| config.lambda_grid.iter().map(move |&l| (u, c, l)))
            })
            .collect();
        ensure_fits(panel, wanted, config, fits)?;
        (1..=m)
            .map(|c| argmin_lambda(panel, t, c, config, fits))
            .collect()
    };

    let wanted = (1..=m).map(|c| (t, c, lambda_hat[c - 1])).collect();
    ensure_fits(panel, wanted, config, fits)?;

    let f_t = panel.forecast_row(t);
    let mut out = CommitteeForecasts {
        t,
        yhat: Vec::with_capacity(m),
        members: Vec::with_capacity(m),
        lambda_hat: lambda_hat.clone(),
        weights: Vec::with_capacity(m),
    };
    for c in 1..=m {
        let sol = &fits[&key(t, c, lambda_hat[c - 1])];
        out.yhat
            .push(f_t.iter().zip(&sol.weights).map(|(f, b)| f * b).sum());
        out.members.push(sol.subset.clone());
        out.weights.push(sol.weights.clone());
    }
    // rounds needed by the next call start at t + 2 - lag - r_val
    let keep_from = (t + 2).saturating_sub(config.lag + config.val_window);
    cache.retain_from(keep_from);
    Ok(out)
}

/// Committee forecasts for every row in `rounds`, sharing one cache.
pub fn committee_path(
    panel: &ForecastPanel,
    rounds: RangeInclusive<usize>,
    config: &CommitteeConfig,
) -> Result<Vec<CommitteeForecasts>> {
    let mut cache = FitCache::new();
    rounds
        .map(|t| committee_round(panel, t, config, Some(&mut cache)))
        .collect()
}
