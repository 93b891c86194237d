//! End-to-end experiments: load, filter, impute, diagnose, form committees,
//! aggregate and report.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::committees::{committee_path, CommitteeConfig, CommitteeForecasts};
use crate::error::{HecaError, Result};
use crate::online::{
    average_regret, equal_weight_run, run_online, theorem_bound, AggregatorConfig, BoundCase,
    Delay, OnlineRun, RegretReport,
};
use crate::panel::{
    diagnostics, filter_experts, impute_missing, load_panel, write_diagnostics, ForecastPanel,
    PanelDiagnostics, PanelFormat,
};
use crate::ridge_qp::DEFAULT_EPSILON;
use crate::subset_select::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Heca,
    HecaDelayed,
    Efp,
    EfpDelayed,
    Hedge,
    HedgeDelayed,
    EqualWeight,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Heca,
        Algorithm::HecaDelayed,
        Algorithm::Efp,
        Algorithm::EfpDelayed,
        Algorithm::Hedge,
        Algorithm::HedgeDelayed,
        Algorithm::EqualWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Heca => "heca",
            Algorithm::HecaDelayed => "heca-delayed",
            Algorithm::Efp => "efp",
            Algorithm::EfpDelayed => "efp-delayed",
            Algorithm::Hedge => "hedge",
            Algorithm::HedgeDelayed => "hedge-delayed",
            Algorithm::EqualWeight => "equal-weight",
        }
    }

    /// Feedback delay of the aggregator; `None` for the equal-weight rule.
    pub fn delay(self) -> Option<Delay> {
        match self {
            Algorithm::Heca | Algorithm::Efp | Algorithm::Hedge => Some(Delay::TwoRounds),
            Algorithm::HecaDelayed | Algorithm::EfpDelayed | Algorithm::HedgeDelayed => {
                Some(Delay::OneRound)
            }
            Algorithm::EqualWeight => None,
        }
    }

    /// Whether the aggregator runs over egalitarian committees rather than
    /// the raw experts.
    pub fn uses_committees(self) -> bool {
        matches!(
            self,
            Algorithm::Heca | Algorithm::HecaDelayed | Algorithm::Efp | Algorithm::EfpDelayed
        )
    }

    fn aggregator(self, b1: f64) -> Option<AggregatorConfig> {
        let delay = self.delay()?;
        Some(match self {
            Algorithm::Efp | Algorithm::EfpDelayed => AggregatorConfig::fictitious_play(delay, b1),
            _ => AggregatorConfig::heca(delay, b1),
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = HecaError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                HecaError::validation(format!(
                    "unknown algorithm '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// How the initial loss guess `B_1` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum B1Choice {
    /// Largest individual expert loss observed before the first round.
    Auto,
    Explicit(f64),
}

impl FromStr for B1Choice {
    type Err = HecaError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(B1Choice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(B1Choice::Explicit(v)),
            _ => Err(HecaError::validation(format!(
                "b1 must be 'auto' or a positive number, got '{s}'"
            ))),
        }
    }
}

/// Parses a `lo:step:hi` grid. Endpoints are resolved in decimal so that
/// `0.01:0.01:2` yields exactly `g / 100` for `g = 1..=200`.
pub fn parse_lambda_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || HecaError::validation(format!("lambda grid must look like lo:step:hi, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    if parts.len() == 1 {
        let v: f64 = parts[0].parse().map_err(|_| bad())?;
        return Ok(vec![v]);
    }
    if parts.len() != 3 {
        return Err(bad());
    }
    let decimals = parts
        .iter()
        .map(|p| p.split_once('.').map_or(0, |(_, frac)| frac.len()))
        .max()
        .unwrap_or(0);
    if decimals > 15 {
        return Err(bad());
    }
    let scale = 10f64.powi(decimals as i32);
    let mut ints = [0i64; 3];
    for (slot, p) in ints.iter_mut().zip(&parts) {
        let v: f64 = p.parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        *slot = (v * scale).round() as i64;
    }
    let [lo, step, hi] = ints;
    if step <= 0 || hi < lo {
        return Err(HecaError::validation(format!(
            "lambda grid needs step > 0 and hi >= lo, got '{spec}'"
        )));
    }
    let n = (hi - lo) / step;
    if n >= 1_000_000 {
        return Err(HecaError::ResourceExceeded(format!("lambda grid '{spec}' is too large")));
    }
    Ok((0..=n).map(|k| (lo + k * step) as f64 / scale).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_path: Option<PathBuf>,
    /// First and last period labels of the data span (whole panel if `None`).
    pub span: Option<(String, String)>,
    pub algorithm: Algorithm,
    pub window: usize,
    pub val_window: usize,
    pub lambda_grid: Vec<f64>,
    pub lag: usize,
    pub epsilon: f64,
    pub b1: B1Choice,
    pub backend: Backend,
    pub out_dir: Option<PathBuf>,
    pub force_lag: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let committees = CommitteeConfig::with_lag(2);
        ExperimentConfig {
            data_path: None,
            span: None,
            algorithm: Algorithm::Heca,
            window: committees.window,
            val_window: committees.val_window,
            lambda_grid: committees.lambda_grid,
            lag: committees.lag,
            epsilon: DEFAULT_EPSILON,
            b1: B1Choice::Auto,
            backend: committees.backend,
            out_dir: None,
            force_lag: false,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| HecaError::validation(format!("'{key}' expects an integer, got '{v}'")))
        };
        match key.trim() {
            "data" => self.data_path = Some(PathBuf::from(value)),
            "span" => {
                let (a, b) = value
                    .split_once(':')
                    .or_else(|| value.split_once(','))
                    .ok_or_else(|| {
                        HecaError::validation(format!("span must look like START:END, got '{value}'"))
                    })?;
                self.span = Some((a.trim().to_string(), b.trim().to_string()));
            }
            "algo" | "algorithm" => self.algorithm = value.parse()?,
            "window" => self.window = int(value)?,
            "val-window" => self.val_window = int(value)?,
            "lambda-grid" => self.lambda_grid = parse_lambda_grid(value)?,
            "lag" => self.lag = int(value)?,
            "epsilon" => {
                self.epsilon = value.parse().map_err(|_| {
                    HecaError::validation(format!("epsilon must be a number, got '{value}'"))
                })?
            }
            "b1" => self.b1 = value.parse()?,
            "backend" => self.backend = value.parse()?,
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "force-lag" => {
                self.force_lag = match value {
                    "" | "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => {
                        return Err(HecaError::validation(format!(
                            "force-lag expects true/false, got '{value}'"
                        )))
                    }
                }
            }
            other => return Err(HecaError::validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HecaError::Parse {
                row: i + 1,
                column: String::from("config"),
                message: format!("expected key = value, got '{line}'"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn committee_config(&self) -> CommitteeConfig {
        CommitteeConfig {
            window: self.window,
            val_window: self.val_window,
            lambda_grid: self.lambda_grid.clone(),
            lag: self.lag,
            epsilon: self.epsilon,
            backend: self.backend,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.committee_config().validate()?;
        if let Some(delay) = self.algorithm.delay() {
            if self.lag != delay.rounds() && !self.force_lag {
                return Err(HecaError::validation(format!(
                    "algorithm {} expects lag {} but lag is {}; pass --force-lag to override",
                    self.algorithm,
                    delay.rounds(),
                    self.lag
                )));
            }
        }
        Ok(())
    }
}

/// One line of the per-round output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRow {
    /// 1-based round; round 1 is the first feasible period.
    pub t: usize,
    pub period: String,
    pub forecast: f64,
    pub target: Option<f64>,
    pub loss: Option<f64>,
    pub pi: Vec<f64>,
    pub b: Option<f64>,
    pub eta: Option<f64>,
}

/// One line of the comparison table against the equal-weight benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: usize,
    pub period: String,
    pub equal_weight_loss: f64,
    pub loss: f64,
    /// Equal-weight loss minus algorithm loss.
    pub difference: f64,
    pub cum_equal_weight_loss: f64,
    pub cum_loss: f64,
    pub cum_difference: f64,
    /// Cumulative loss of the forecaster that is best over the whole sample.
    pub cum_best_loss: f64,
    /// Average regret over rounds `1..=t` against the best forecaster on
    /// that prefix.
    pub avg_regret: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub forecasters: usize,
    pub rounds: usize,
    pub realized_rounds: usize,
    pub first_period: String,
    pub last_period: String,
    pub b1: Option<f64>,
    pub avg_loss: Option<f64>,
    pub equal_weight_avg_loss: Option<f64>,
    pub avg_regret: Option<f64>,
    pub best_committee: Option<usize>,
    #[serde(rename = "Bbar_T")]
    pub bbar_t: Option<f64>,
    pub bound: Option<f64>,
    pub bound_case: Option<BoundCase>,
    pub gamma: Option<f64>,
    /// Whether the average regret stayed within the bound on every prefix;
    /// `None` when no bound applies.
    pub within_bound_every_prefix: Option<bool>,
    pub jensen_violations: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Summary,
    pub rounds: Vec<RoundRow>,
    pub comparison: Vec<ComparisonRow>,
    pub diagnostics: Option<PanelDiagnostics>,
    pub committees: Vec<CommitteeForecasts>,
    /// Experts kept after filtering, in panel order.
    pub experts: Vec<String>,
    pub regret: Option<RegretReport>,
}

/// Loads the configured panel, runs the experiment and writes artifacts into
/// `out_dir` when one is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let path = config
        .data_path
        .as_ref()
        .ok_or_else(|| HecaError::validation("no data file given"))?;
    let panel = load_panel(path, PanelFormat::Csv)?;
    let report = run_on_panel(&panel, config)?;
    if let Some(dir) = &config.out_dir {
        report.write_artifacts(dir)?;
    }
    Ok(report)
}

/// Runs the experiment on an in-memory panel without touching the disk.
pub fn run_on_panel(panel: &ForecastPanel, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let panel = match &config.span {
        None => panel.clone(),
        Some((a, b)) => {
            let lookup = |label: &str| {
                panel.period_index(label).ok_or_else(|| {
                    HecaError::validation(format!("span period '{label}' is not in the data"))
                })
            };
            let (ia, ib) = (lookup(a)?, lookup(b)?);
            if ia > ib {
                return Err(HecaError::validation(format!("span start {a} is after span end {b}")));
            }
            panel.slice_rows(ia..=ib)?
        }
    };
    let filtered = filter_experts(&panel, None)?;
    let imputed = impute_missing(&filtered)?;
    let realized = imputed.realized_len();
    let diag = if realized >= 2 {
        diagnostics(&imputed, 0..=realized - 1).ok()
    } else {
        None
    };

    let committee_cfg = config.committee_config();
    let t1 = committee_cfg.first_forecast_round();
    let last = imputed.len() - 1;
    if t1 > last {
        return Err(HecaError::BurnIn {
            round: last,
            first_feasible: t1,
        });
    }
    let b1 = match (config.b1, config.algorithm.delay()) {
        (_, None) => f64::NAN,
        (B1Choice::Explicit(v), _) => v,
        (B1Choice::Auto, Some(_)) => auto_b1(&filtered, t1)?,
    };

    let targets: Vec<Option<f64>> = imputed.target()[t1..=last].to_vec();
    let periods: Vec<String> = imputed.periods()[t1..=last].iter().map(|p| p.to_string()).collect();
    let mut committees = Vec::new();
    let yhats: Vec<Vec<f64>> = if config.algorithm.uses_committees() {
        committees = committee_path(&imputed, t1..=last, &committee_cfg)?;
        committees.iter().map(|c| c.yhat.clone()).collect()
    } else {
        (t1..=last).map(|t| imputed.forecast_row(t)).collect()
    };

    let run = match config.algorithm.aggregator(b1) {
        Some(agg) => run_online(&yhats, &targets, agg)?,
        None => equal_weight_rounds(&yhats, &targets)?,
    };
    let delay = config.algorithm.delay();

    let rounds: Vec<RoundRow> = run
        .rounds
        .iter()
        .zip(&periods)
        .map(|(r, p)| RoundRow {
            t: r.t,
            period: p.clone(),
            forecast: r.forecast,
            target: r.target,
            loss: r.loss,
            pi: r.pi.clone(),
            b: delay.map(|_| r.b),
            eta: delay.map(|_| r.eta),
        })
        .collect();

    let n_real = targets.iter().filter(|y| y.is_some()).count();
    let ew_losses = if n_real > 0 {
        equal_weight_run(&imputed, t1..=t1 + n_real - 1)?
    } else {
        Vec::new()
    };
    let comparison = match &run.report {
        Some(report) => comparison_table(report, &ew_losses, &periods, b1, delay)?,
        None => Vec::new(),
    };

    let summary = summarize(config.algorithm, &run, &comparison, &ew_losses, &periods, b1, delay);
    Ok(ExperimentReport {
        summary,
        rounds,
        comparison,
        diagnostics: diag,
        committees,
        experts: imputed.experts().to_vec(),
        regret: run.report,
    })
}

/// Largest squared error of any reported forecast over the realized rows
/// before `t1`.
fn auto_b1(panel: &ForecastPanel, t1: usize) -> Result<f64> {
    let mut b1: f64 = 0.0;
    for t in 0..t1.min(panel.realized_len()) {
        let y = panel.target()[t].expect("realized row");
        for j in 0..panel.num_experts() {
            if panel.mask()[(t, j)] {
                b1 = b1.max((y - panel.values()[(t, j)]).powi(2));
            }
        }
    }
    if b1 > 0.0 {
        Ok(b1)
    } else {
        Err(HecaError::validation(
            "every forecast before the first round is exact, so B1 cannot be set \
             automatically; pass an explicit --b1",
        ))
    }
}

fn equal_weight_rounds(yhats: &[Vec<f64>], targets: &[Option<f64>]) -> Result<OnlineRun> {
    let m = yhats[0].len();
    let pi = vec![1.0 / m as f64; m];
    let mut per_round = Vec::new();
    let mut committee_loss = Vec::new();
    let rounds = yhats
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (row, target))| {
            let forecast = row.iter().sum::<f64>() / m as f64;
            let loss = target.map(|y| (y - forecast).powi(2));
            if let (Some(y), Some(l)) = (target, loss) {
                per_round.push(l);
                committee_loss.push(row.iter().map(|v| (y - v).powi(2)).collect::<Vec<_>>());
            }
            crate::online::RoundRecord {
                t: i + 1,
                forecast,
                target: *target,
                loss,
                pi: pi.clone(),
                b: f64::NAN,
                eta: f64::NAN,
            }
        })
        .collect();
    let report = if per_round.is_empty() {
        None
    } else {
        let (avg_regret, best) = average_regret(&per_round, &committee_loss)?;
        let t = committee_loss.len() as f64;
        Some(RegretReport {
            best_avg_loss: committee_loss.iter().map(|r| r[best]).sum::<f64>() / t,
            bbar_t: committee_loss.iter().flatten().cloned().fold(0.0, f64::max),
            per_round_loss: per_round,
            committee_loss,
            avg_regret,
            best_committee: best + 1,
            b1: f64::NAN,
            bound: None,
        })
    };
    Ok(OnlineRun {
        rounds,
        report,
        jensen_violations: 0,
    })
}

fn comparison_table(
    report: &RegretReport,
    ew_losses: &[f64],
    periods: &[String],
    b1: f64,
    delay: Option<Delay>,
) -> Result<Vec<ComparisonRow>> {
    let m = report.committee_loss[0].len();
    let best = report.best_committee - 1;
    let mut cum = [0.0f64; 3];
    let mut cum_best = 0.0;
    let mut cum_each = vec![0.0; m];
    let mut bbar: f64 = 0.0;
    let mut out = Vec::with_capacity(ew_losses.len());
    for (i, (&ew, &loss)) in ew_losses.iter().zip(&report.per_round_loss).enumerate() {
        let row = &report.committee_loss[i];
        cum[0] += ew;
        cum[1] += loss;
        cum[2] += ew - loss;
        cum_best += row[best];
        for (c, l) in cum_each.iter_mut().zip(row) {
            *c += l;
        }
        bbar = row.iter().cloned().fold(bbar, f64::max);
        let t = i + 1;
        let prefix_best = cum_each.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = match delay {
            Some(d) if bbar > 0.0 => Some(theorem_bound(m, t, b1, bbar, d)?.value),
            _ => None,
        };
        out.push(ComparisonRow {
            t,
            period: periods[i].clone(),
            equal_weight_loss: ew,
            loss,
            difference: ew - loss,
            cum_equal_weight_loss: cum[0],
            cum_loss: cum[1],
            cum_difference: cum[2],
            cum_best_loss: cum_best,
            avg_regret: (cum[1] - prefix_best) / t as f64,
            bound,
        });
    }
    Ok(out)
}

fn summarize(
    algorithm: Algorithm,
    run: &OnlineRun,
    comparison: &[ComparisonRow],
    ew_losses: &[f64],
    periods: &[String],
    b1: f64,
    delay: Option<Delay>,
) -> Summary {
    let report = run.report.as_ref();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let bound = report.and_then(|r| r.bound);
    let within = bound.map(|_| {
        comparison.iter().all(|row| match row.bound {
            Some(b) => row.avg_regret <= b,
            None => row.avg_regret <= 0.0,
        })
    });
    Summary {
        algorithm,
        forecasters: run.rounds[0].pi.len(),
        rounds: run.rounds.len(),
        realized_rounds: ew_losses.len(),
        first_period: periods[0].clone(),
        last_period: periods[periods.len() - 1].clone(),
        b1: delay.map(|_| b1),
        avg_loss: report.and_then(|r| mean(&r.per_round_loss)),
        equal_weight_avg_loss: mean(ew_losses),
        avg_regret: report.map(|r| r.avg_regret),
        best_committee: report.map(|r| r.best_committee),
        bbar_t: report.map(|r| r.bbar_t),
        bound: bound.map(|b| b.value),
        bound_case: bound.map(|b| b.case),
        gamma: bound.map(|b| b.gamma),
        within_bound_every_prefix: within,
        jensen_violations: run.jensen_violations,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary)?;
        s.push('\n');
        Ok(s)
    }

    /// `t, forecast, target, loss, pi_1..pi_M, B_t, eta_t`.
    pub fn rounds_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let m = self.rounds.first().map_or(0, |r| r.pi.len());
        let mut header: Vec<String> = ["t", "forecast", "target", "loss"].map(String::from).to_vec();
        header.extend((1..=m).map(|c| format!("pi_{c}")));
        header.extend(["B_t", "eta_t"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rounds {
            let mut rec = vec![r.t.to_string(), r.forecast.to_string(), opt(r.target), opt(r.loss)];
            rec.extend(r.pi.iter().map(|p| p.to_string()));
            rec.push(opt(r.b));
            rec.push(opt(r.eta));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| HecaError::Io(e.into_error()))
    }

    pub fn comparison_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let name = self.summary.algorithm.name();
        w.write_record([
            "t".to_string(),
            "period".into(),
            "equal_weight_loss".into(),
            format!("{name}_loss"),
            "difference".into(),
            "cum_equal_weight_loss".into(),
            format!("cum_{name}_loss"),
            "cum_difference".into(),
            "cum_best_loss".into(),
            "avg_regret".into(),
            "bound".into(),
        ])?;
        for r in &self.comparison {
            w.write_record([
                r.t.to_string(),
                r.period.clone(),
                r.equal_weight_loss.to_string(),
                r.loss.to_string(),
                r.difference.to_string(),
                r.cum_equal_weight_loss.to_string(),
                r.cum_loss.to_string(),
                r.cum_difference.to_string(),
                r.cum_best_loss.to_string(),
                r.avg_regret.to_string(),
                opt(r.bound),
            ])?;
        }
        w.into_inner().map_err(|e| HecaError::Io(e.into_error()))
    }

    /// Aligned text rendering of the comparison table.
    pub fn render_pretty(&self) -> String {
        let name = self.summary.algorithm.name();
        let header = [
            "t".to_string(),
            "period".into(),
            "equal-weight".into(),
            name.to_string(),
            "diff".into(),
            "cum diff".into(),
            "cum best".into(),
            "avg regret".into(),
            "bound".into(),
        ];
        let f = |v: f64| format!("{v:.6}");
        let mut rows: Vec<Vec<String>> = vec![header.to_vec()];
        for r in &self.comparison {
            rows.push(vec![
                r.t.to_string(),
                r.period.clone(),
                f(r.equal_weight_loss),
                f(r.loss),
                f(r.difference),
                f(r.cum_difference),
                f(r.cum_best_loss),
                f(r.avg_regret),
                r.bound.map(f).unwrap_or_else(|| "-".into()),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|k| rows.iter().map(|r| r[k].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(k, (c, w))| if k == 1 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        let s = &self.summary;
        out.push_str(&format!(
            "\n{} over {} rounds ({} realized), {} forecasters\n",
            s.algorithm, s.rounds, s.realized_rounds, s.forecasters
        ));
        if let (Some(r), Some(best)) = (s.avg_regret, s.best_committee) {
            out.push_str(&format!("average regret {r:.6} against forecaster {best}"));
            match s.bound {
                Some(b) => out.push_str(&format!(", bound {b:.6}\n")),
                None => out.push('\n'),
            }
        }
        out
    }

    /// Writes `rounds.csv`, `summary.json`, `comparison.csv`, the committee
    /// audit (`committees.jsonl`) and the panel diagnostics into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rounds.csv"), self.rounds_csv()?)?;
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        fs::write(dir.join("comparison.csv"), self.comparison_csv()?)?;
        if !self.committees.is_empty() {
            let mut f = std::io::BufWriter::new(fs::File::create(dir.join("committees.jsonl"))?);
            for c in &self.committees {
                serde_json::to_writer(&mut f, c)?;
                f.write_all(b"\n")?;
            }
            f.flush()?;
        }
        if let Some(d) = &self.diagnostics {
            write_diagnostics(d, &self.experts, dir)?;
        }
        Ok(())
    }
}
