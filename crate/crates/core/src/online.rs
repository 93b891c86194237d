//! Hedge aggregation of committee forecasts.
//!
//! The aggregator keeps a distribution `pi_t` over `M` forecasters and
//! announces `pi_t' yhat_t`. Losses arrive with a delay of one or two
//! rounds:
//!
//! - two-round delay: `omega_t = omega_{t-2} * exp(-eta_{t-2} l_{t-2})`, so
//!   odd and even rounds run interleaved weight chains, and
//!   `eta_k = (2 / B_k) sqrt(ln M / k)`;
//! - one-round delay: `omega_t = omega_{t-1} * exp(-eta_{t-1} l_{t-1})` and
//!   `eta_k = (1 / B_k) sqrt(2 ln M / k)`.
//!
//! `B_{k+1} = max(B_k, max_c l_{k,c})` tracks the largest loss seen so far,
//! starting from a user guess `B_1`. The fictitious-play rule replaces the
//! latest loss by the running average of all observed losses.
//!
//! Weights are stored as log-weights shifted so the largest is zero, which
//! keeps every `omega` strictly positive over long horizons.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{HecaError, Result};
use crate::panel::ForecastPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delay {
    /// The forecast is announced before `y_{t-1}` is known.
    TwoRounds,
    /// The forecast waits for `y_{t-1}`.
    OneRound,
}

impl Delay {
    pub fn rounds(self) -> usize {
        match self {
            Delay::TwoRounds => 2,
            Delay::OneRound => 1,
        }
    }

    /// `eta_k * B_k * sqrt(k)`, divided by `sqrt(ln M)`.
    fn rate_constant(self) -> f64 {
        match self {
            Delay::TwoRounds => 2.0,
            Delay::OneRound => std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Exponential update with the most recent observed loss.
    LatestLoss,
    /// Exponential fictitious play: update with the average observed loss.
    FictitiousPlay,
}

/// How `eta` is produced.
///
/// `Printed` updates the rate eagerly: the new
/// rate `eta_{k+1}` is computed as soon as `l_k` arrives. `Proof` evaluates
/// the closed form `eta_k = kappa / B_k * sqrt(ln M / k)` at the moment the
/// rate is consumed. The two coincide; both are kept so that bound
/// experiments can name the schedule they use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSchedule {
    Printed,
    Proof,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub delay: Delay,
    pub rule: UpdateRule,
    pub schedule: RateSchedule,
    /// Initial guess `B_1` of the maximal loss.
    pub b1: f64,
}

impl AggregatorConfig {
    pub fn heca(delay: Delay, b1: f64) -> Self {
        AggregatorConfig {
            delay,
            rule: UpdateRule::LatestLoss,
            schedule: RateSchedule::Printed,
            b1,
        }
    }

    pub fn fictitious_play(delay: Delay, b1: f64) -> Self {
        AggregatorConfig {
            rule: UpdateRule::FictitiousPlay,
            ..AggregatorConfig::heca(delay, b1)
        }
    }
}

/// Closed-form learning rate `kappa / B_k * sqrt(ln M / k)`.
pub fn learning_rate(delay: Delay, m: usize, b_k: f64, k: usize) -> f64 {
    delay.rate_constant() / b_k * ((m as f64).ln() / k as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorState {
    config: AggregatorConfig,
    m: usize,
    /// Next round to be played (1-based).
    round: usize,
    pi: Vec<f64>,
    /// Log-weights of the last `delay` rounds, oldest first.
    log_omega: VecDeque<Vec<f64>>,
    /// `B_1, B_2, ...`
    b: Vec<f64>,
    /// `eta_1, eta_2, ...` (printed schedule only).
    eta: Vec<f64>,
    loss_history: Vec<Vec<f64>>,
    loss_sum: Vec<f64>,
    stalled: bool,
}

impl AggregatorState {
    pub fn new(m: usize, config: AggregatorConfig) -> Result<Self> {
        if m == 0 {
            return Err(HecaError::validation("aggregator needs at least one forecaster"));
        }
        if !(config.b1 > 0.0) || !config.b1.is_finite() {
            return Err(HecaError::validation(format!(
                "initial loss bound B1 must be positive, got {}",
                config.b1
            )));
        }
        let eta1 = learning_rate(config.delay, m, config.b1, 1);
        Ok(AggregatorState {
            config,
            m,
            round: 1,
            pi: vec![1.0 / m as f64; m],
            log_omega: VecDeque::with_capacity(config.delay.rounds()),
            b: vec![config.b1],
            eta: vec![eta1],
            loss_history: Vec::new(),
            loss_sum: vec![0.0; m],
            stalled: false,
        })
    }

    pub fn config(&self) -> &AggregatorConfig {
        &self.config
    }

    /// The round that the next call to [`play`](Self::play) produces.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Distribution used in the most recently played round.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Weights of the most recent round, scaled so the largest is one.
    pub fn omega(&self) -> Vec<f64> {
        match self.log_omega.back() {
            Some(lw) => lw.iter().map(|v| v.exp()).collect(),
            None => vec![1.0; self.m],
        }
    }

    /// Latest maximal-loss estimate.
    pub fn b(&self) -> f64 {
        *self.b.last().unwrap()
    }

    /// Latest learning rate.
    pub fn eta(&self) -> f64 {
        let k = self.b.len();
        match self.config.schedule {
            RateSchedule::Printed => *self.eta.last().unwrap(),
            RateSchedule::Proof => learning_rate(self.config.delay, self.m, self.b[k - 1], k),
        }
    }

    pub fn b_history(&self) -> &[f64] {
        &self.b
    }

    pub fn loss_history(&self) -> &[Vec<f64>] {
        &self.loss_history
    }

    fn rate(&self, k: usize) -> f64 {
        match self.config.schedule {
            RateSchedule::Printed => self.eta[k - 1],
            RateSchedule::Proof => learning_rate(self.config.delay, self.m, self.b[k - 1], k),
        }
    }

    /// Advances one round and returns `pi_t`.
    ///
    /// For `t <= delay` no loss is observable and `new_loss` must be `None`.
    /// Afterwards `new_loss` is `l_{t-delay}`; `None` marks an unrealized
    /// target and freezes the distribution for the rest of the run.
    pub fn play(&mut self, new_loss: Option<&[f64]>) -> Result<&[f64]> {
        let d = self.config.delay.rounds();
        let t = self.round;
        if t <= d {
            if new_loss.is_some() {
                return Err(HecaError::validation(format!(
                    "no loss is observable in round {t} with a {d}-round delay"
                )));
            }
            self.log_omega.push_back(vec![0.0; self.m]);
            self.pi = vec![1.0 / self.m as f64; self.m];
            self.round += 1;
            return Ok(&self.pi);
        }
        let Some(loss) = new_loss else {
            self.stalled = true;
            self.round += 1;
            return Ok(&self.pi);
        };
        if self.stalled {
            return Err(HecaError::validation(
                "losses must be contiguous once an unrealized round has been played",
            ));
        }
        if loss.len() != self.m {
            return Err(HecaError::validation(format!(
                "loss vector has length {}, expected {}",
                loss.len(),
                self.m
            )));
        }
        if let Some(v) = loss.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(HecaError::validation(format!(
                "losses must be finite and non-negative, got {v}"
            )));
        }

        let k = t - d;
        self.loss_history.push(loss.to_vec());
        for (s, l) in self.loss_sum.iter_mut().zip(loss) {
            *s += l;
        }
        let eta = self.rate(k);
        let prev = self.log_omega.pop_front().expect("weight chain primed");
        let mut next: Vec<f64> = match self.config.rule {
            UpdateRule::LatestLoss => prev.iter().zip(loss).map(|(w, l)| w - eta * l).collect(),
            UpdateRule::FictitiousPlay => {
                let scale = eta / k as f64;
                prev.iter()
                    .zip(&self.loss_sum)
                    .map(|(w, s)| w - scale * s)
                    .collect()
            }
        };
        let top = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        next.iter_mut().for_each(|v| *v -= top);
        let z: f64 = next.iter().map(|v| v.exp()).sum();
        self.pi = next.iter().map(|v| v.exp() / z).collect();
        self.log_omega.push_back(next);

        let b_next = loss.iter().cloned().fold(self.b[k - 1], f64::max);
        self.b.push(b_next);
        if self.config.schedule == RateSchedule::Printed {
            let constant = self.config.delay.rate_constant();
            self.eta
                .push(constant / b_next * ((self.m as f64).ln() / (k + 1) as f64).sqrt());
        }
        self.round += 1;
        Ok(&self.pi)
    }

    /// Plays one round and announces `pi_t' yhat_t`.
    pub fn step(&mut self, new_loss: Option<&[f64]>, yhat: &[f64]) -> Result<f64> {
        if yhat.len() != self.m {
            return Err(HecaError::validation(format!(
                "forecast vector has length {}, expected {}",
                yhat.len(),
                self.m
            )));
        }
        if yhat.iter().any(|v| !v.is_finite()) {
            return Err(HecaError::validation("committee forecasts must be finite"));
        }
        let pi = self.play(new_loss)?;
        Ok(pi.iter().zip(yhat).map(|(p, y)| p * y).sum())
    }
}

/// One step of the two-round-delay hedge aggregator.
pub fn heca_step(
    state: &AggregatorState,
    new_loss: Option<&[f64]>,
    yhat: &[f64],
) -> Result<(f64, AggregatorState)> {
    expect_variant(state, Delay::TwoRounds, UpdateRule::LatestLoss)?;
    let mut next = state.clone();
    let forecast = next.step(new_loss, yhat)?;
    Ok((forecast, next))
}

/// One step of the one-round-delay (delayed announcement) variant.
pub fn heca_delayed_step(
    state: &AggregatorState,
    new_loss: Option<&[f64]>,
    yhat: &[f64],
) -> Result<(f64, AggregatorState)> {
    expect_variant(state, Delay::OneRound, UpdateRule::LatestLoss)?;
    let mut next = state.clone();
    let forecast = next.step(new_loss, yhat)?;
    Ok((forecast, next))
}

/// One step of exponential fictitious play with either delay.
pub fn efp_step(
    state: &AggregatorState,
    new_loss: Option<&[f64]>,
    yhat: &[f64],
    delayed: bool,
) -> Result<(f64, AggregatorState)> {
    let delay = if delayed { Delay::OneRound } else { Delay::TwoRounds };
    expect_variant(state, delay, UpdateRule::FictitiousPlay)?;
    let mut next = state.clone();
    let forecast = next.step(new_loss, yhat)?;
    Ok((forecast, next))
}

fn expect_variant(state: &AggregatorState, delay: Delay, rule: UpdateRule) -> Result<()> {
    if state.config.delay != delay || state.config.rule != rule {
        return Err(HecaError::validation(format!(
            "state configured as {:?}/{:?}, expected {delay:?}/{rule:?}",
            state.config.delay, state.config.rule
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCase {
    /// `B_1` below the realized maximum; `gamma = Bbar / B_1`.
    Underestimate,
    /// `B_1` above the realized maximum; `gamma = B_1 / Bbar`.
    Overestimate,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound {
    pub value: f64,
    pub case: BoundCase,
    pub gamma: f64,
}

/// Worst-case average-regret bound after `t` rounds with `m` forecasters.
///
/// Two-round delay: `(1 + 2 gamma) Bbar sqrt(ln M / T)` when `B_1`
/// underestimates, `3 gamma Bbar sqrt(ln M / T)` when it overestimates, and
/// `3 Bbar sqrt(ln M / T)` when exact. The one-round-delay bounds are the
/// same values divided by `sqrt(2)`.
pub fn theorem_bound(m: usize, t: usize, b1: f64, bbar: f64, delay: Delay) -> Result<TheoremBound> {
    if m == 0 || t == 0 {
        return Err(HecaError::validation("bound needs M >= 1 and T >= 1"));
    }
    if !(b1 > 0.0 && bbar > 0.0) || !b1.is_finite() || !bbar.is_finite() {
        return Err(HecaError::validation(format!(
            "loss bounds must be positive, got B1 = {b1}, Bbar = {bbar}"
        )));
    }
    let root = ((m as f64).ln() / t as f64).sqrt();
    let (case, gamma, factor) = if bbar > b1 {
        let g = bbar / b1;
        (BoundCase::Underestimate, g, 1.0 + 2.0 * g)
    } else if b1 > bbar {
        let g = b1 / bbar;
        (BoundCase::Overestimate, g, 3.0 * g)
    } else {
        (BoundCase::Exact, 1.0, 3.0)
    };
    let mut value = factor * bbar * root;
    if delay == Delay::OneRound {
        value /= std::f64::consts::SQRT_2;
    }
    Ok(TheoremBound { value, case, gamma })
}

/// Average regret against the best single forecaster, with the 0-based index
/// of that forecaster (smallest index on ties).
pub fn average_regret(per_round_loss: &[f64], committee_loss: &[Vec<f64>]) -> Result<(f64, usize)> {
    let t = per_round_loss.len();
    if t == 0 || committee_loss.len() != t {
        return Err(HecaError::validation(
            "regret needs at least one round and matching loss rows",
        ));
    }
    let m = committee_loss[0].len();
    if m == 0 || committee_loss.iter().any(|r| r.len() != m) {
        return Err(HecaError::validation("committee loss rows must share a positive width"));
    }
    let mean_decision = per_round_loss.iter().sum::<f64>() / t as f64;
    let (best, best_mean) = column_means(committee_loss)
        .into_iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (c, v)| if v < acc.1 { (c, v) } else { acc });
    Ok((mean_decision - best_mean, best))
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows[0].len();
    let mut sums = vec![0.0; m];
    for r in rows {
        for (s, v) in sums.iter_mut().zip(r) {
            *s += v;
        }
    }
    sums.iter().map(|s| s / rows.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// Decision-maker losses `(y_t - pi_t' yhat_t)^2`.
    pub per_round_loss: Vec<f64>,
    /// `T x M` forecaster losses.
    pub committee_loss: Vec<Vec<f64>>,
    pub avg_regret: f64,
    /// 1-based index of the best forecaster (the committee size when the
    /// forecasters are egalitarian committees).
    pub best_committee: usize,
    pub best_avg_loss: f64,
    pub bbar_t: f64,
    pub b1: f64,
    /// `None` when every loss is zero.
    pub bound: Option<TheoremBound>,
}

impl RegretReport {
    pub fn from_losses(
        per_round_loss: Vec<f64>,
        committee_loss: Vec<Vec<f64>>,
        b1: f64,
        delay: Delay,
    ) -> Result<Self> {
        let (avg_regret, best) = average_regret(&per_round_loss, &committee_loss)?;
        let best_avg_loss =
            committee_loss.iter().map(|r| r[best]).sum::<f64>() / committee_loss.len() as f64;
        let bbar_t = committee_loss
            .iter()
            .flatten()
            .cloned()
            .fold(0.0, f64::max);
        let m = committee_loss[0].len();
        let bound = if bbar_t > 0.0 {
            Some(theorem_bound(m, per_round_loss.len(), b1, bbar_t, delay)?)
        } else {
            None
        };
        Ok(RegretReport {
            per_round_loss,
            committee_loss,
            avg_regret,
            best_committee: best + 1,
            best_avg_loss,
            bbar_t,
            b1,
            bound,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round.
    pub t: usize,
    pub forecast: f64,
    pub target: Option<f64>,
    pub loss: Option<f64>,
    pub pi: Vec<f64>,
    pub b: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRun {
    pub rounds: Vec<RoundRecord>,
    /// Regret over the rounds with realized targets; `None` if there are none.
    pub report: Option<RegretReport>,
    /// Rounds where `(y - pi'yhat)^2` exceeded `sum_c pi_c (y - yhat_c)^2`.
    pub jensen_violations: usize,
}

/// Runs an aggregator over forecasts `yhats[t][c]` and targets (trailing
/// `None` for unrealized periods). Unrealized rounds still get forecasts.
pub fn run_online(
    yhats: &[Vec<f64>],
    targets: &[Option<f64>],
    config: AggregatorConfig,
) -> Result<OnlineRun> {
    if yhats.is_empty() || yhats.len() != targets.len() {
        return Err(HecaError::validation(
            "forecast and target series must be non-empty and aligned",
        ));
    }
    let m = yhats[0].len();
    if yhats.iter().any(|r| r.len() != m) {
        return Err(HecaError::validation("forecast rows must share one width"));
    }
    let d = config.delay.rounds();
    let mut state = AggregatorState::new(m, config)?;
    let mut committee_loss: Vec<Vec<f64>> = Vec::new();
    let mut per_round = Vec::new();
    let mut rounds = Vec::with_capacity(yhats.len());
    let mut violations = 0;

    for (i, (yhat, target)) in yhats.iter().zip(targets).enumerate() {
        let t = i + 1;
        let observed = if t > d {
            targets[t - d - 1].map(|_| committee_loss[t - d - 1].as_slice())
        } else {
            None
        };
        let forecast = state.step(observed, yhat)?;
        let pi = state.pi().to_vec();
        let loss = target.map(|y| (y - forecast).powi(2));
        if let Some(y) = *target {
            let losses: Vec<f64> = yhat.iter().map(|v| (y - v).powi(2)).collect();
            let mixture: f64 = pi.iter().zip(&losses).map(|(p, l)| p * l).sum();
            let dm = loss.unwrap();
            if dm > mixture + 1e-12 * (1.0 + mixture) {
                violations += 1;
            }
            committee_loss.push(losses);
            per_round.push(dm);
        }
        rounds.push(RoundRecord {
            t,
            forecast,
            target: *target,
            loss,
            pi,
            b: state.b(),
            eta: state.eta(),
        });
    }
    let report = if per_round.is_empty() {
        None
    } else {
        Some(RegretReport::from_losses(
            per_round,
            committee_loss,
            config.b1,
            config.delay,
        )?)
    };
    Ok(OnlineRun {
        rounds,
        report,
        jensen_violations: violations,
    })
}

/// The hedge aggregator run directly over raw expert forecasts.
pub fn vanilla_hedge_run(
    yhats: &[Vec<f64>],
    targets: &[Option<f64>],
    b1: f64,
    delayed: bool,
) -> Result<OnlineRun> {
    let delay = if delayed { Delay::OneRound } else { Delay::TwoRounds };
    run_online(yhats, targets, AggregatorConfig::heca(delay, b1))
}

/// Squared losses of the simple average of all experts over `span`.
pub fn equal_weight_run(
    panel: &ForecastPanel,
    span: std::ops::RangeInclusive<usize>,
) -> Result<Vec<f64>> {
    let (a, b) = (*span.start(), *span.end());
    if a > b || b >= panel.realized_len() {
        return Err(HecaError::validation("equal-weight span must lie in the realized sample"));
    }
    if !panel.is_complete() {
        return Err(HecaError::validation("panel must be imputed"));
    }
    Ok((a..=b)
        .map(|t| {
            let row = panel.forecast_row(t);
            let avg = row.iter().sum::<f64>() / row.len() as f64;
            (panel.target()[t].unwrap() - avg).powi(2)
        })
        .collect())
}
