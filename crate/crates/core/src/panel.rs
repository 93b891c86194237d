//! Expert-forecast panels: CSV ingestion, expert filtering, imputation and
//! error diagnostics.
//!
//! The CSV layout is `period,target,<expert1>,<expert2>,...` with one row
//! per period. An empty field is a missing value. Targets may be missing
//! only at the end of the sample (not yet realized).

use std::fmt;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HecaError, Result};

/// Period label. `YYYYQn` labels are parsed into quarters; anything else is
/// kept as an opaque label ordered by its position in the file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    Quarter { year: i32, quarter: u8 },
    Label(String),
}

impl Period {
    pub fn parse(s: &str) -> Period {
        let s = s.trim();
        if let Some((y, q)) = s.split_once(['Q', 'q']) {
            if let (Ok(year), Ok(quarter)) = (y.parse::<i32>(), q.parse::<u8>()) {
                if (1..=4).contains(&quarter) && y.len() == 4 {
                    return Period::Quarter { year, quarter };
                }
            }
        }
        Period::Label(s.to_string())
    }

    /// Integer quarter index (`4 * year + quarter - 1`) for quarterly labels.
    pub fn quarter_index(&self) -> Option<i64> {
        match self {
            Period::Quarter { year, quarter } => Some(4 * *year as i64 + *quarter as i64 - 1),
            Period::Label(_) => None,
        }
    }

    pub fn from_quarter_index(idx: i64) -> Period {
        Period::Quarter {
            year: idx.div_euclid(4) as i32,
            quarter: (idx.rem_euclid(4) + 1) as u8,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Quarter { year, quarter } => write!(f, "{year}Q{quarter}"),
            Period::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelFormat {
    Csv,
}

/// Time-indexed matrix of expert forecasts with a reporting mask and the
/// aligned target series.
#[derive(Debug, Clone)]
pub struct ForecastPanel {
    periods: Vec<Period>,
    experts: Vec<String>,
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    target: Vec<Option<f64>>,
}

// unreported cells hold NaN placeholders and are not compared
impl PartialEq for ForecastPanel {
    fn eq(&self, other: &Self) -> bool {
        self.periods == other.periods
            && self.experts == other.experts
            && self.target == other.target
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &seen)| !seen || a == b)
    }
}

impl ForecastPanel {
    /// Builds a panel and checks its invariants. Unreported cells may hold
    /// any value; they are normalized to NaN.
    pub fn new(
        periods: Vec<Period>,
        experts: Vec<String>,
        mut values: DMatrix<f64>,
        mask: DMatrix<bool>,
        target: Vec<Option<f64>>,
    ) -> Result<Self> {
        let t = periods.len();
        let m = experts.len();
        if t == 0 {
            return Err(HecaError::validation("no data rows"));
        }
        if m == 0 {
            return Err(HecaError::validation("panel has no expert columns"));
        }
        if values.shape() != (t, m) || mask.shape() != (t, m) || target.len() != t {
            return Err(HecaError::validation("panel dimensions are inconsistent"));
        }
        for i in 0..t {
            for j in 0..m {
                if mask[(i, j)] {
                    if !values[(i, j)].is_finite() {
                        return Err(HecaError::validation(format!(
                            "non-finite forecast for expert '{}' in period {}",
                            experts[j], periods[i]
                        )));
                    }
                } else {
                    values[(i, j)] = f64::NAN;
                }
            }
        }
        for (i, p) in periods.iter().enumerate() {
            if periods[..i].contains(p) {
                return Err(HecaError::validation(format!("duplicate period label {p}")));
            }
        }
        let quarters: Option<Vec<i64>> = periods.iter().map(Period::quarter_index).collect();
        if let Some(q) = quarters {
            if q.windows(2).any(|w| w[1] <= w[0]) {
                return Err(HecaError::validation("periods must be strictly increasing"));
            }
        }
        if let Some(v) = target.iter().flatten().find(|v| !v.is_finite()) {
            return Err(HecaError::validation(format!("non-finite target value {v}")));
        }
        let realized = target.iter().take_while(|v| v.is_some()).count();
        if target[realized..].iter().any(Option::is_some) {
            return Err(HecaError::validation(format!(
                "target missing in the interior at period {}",
                periods[realized]
            )));
        }
        Ok(ForecastPanel {
            periods,
            experts,
            values,
            mask,
            target,
        })
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn experts(&self) -> &[String] {
        &self.experts
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn target(&self) -> &[Option<f64>] {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    /// Number of leading periods with a realized target.
    pub fn realized_len(&self) -> usize {
        self.target.iter().take_while(|v| v.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    pub fn forecast_row(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    pub fn period_index(&self, label: &str) -> Option<usize> {
        let p = Period::parse(label);
        self.periods.iter().position(|q| *q == p)
    }

    /// Restriction to the rows in `range`.
    pub fn slice_rows(&self, range: RangeInclusive<usize>) -> Result<ForecastPanel> {
        let (a, b) = (*range.start(), *range.end());
        if a > b || b >= self.len() {
            return Err(HecaError::validation(format!(
                "row range {a}..={b} outside panel of {} rows",
                self.len()
            )));
        }
        let n = b - a + 1;
        ForecastPanel::new(
            self.periods[a..=b].to_vec(),
            self.experts.clone(),
            self.values.rows(a, n).into_owned(),
            self.mask.rows(a, n).into_owned(),
            self.target[a..=b].to_vec(),
        )
    }

    fn select_columns(&self, keep: &[usize]) -> Result<ForecastPanel> {
        let t = self.len();
        ForecastPanel::new(
            self.periods.clone(),
            keep.iter().map(|&j| self.experts[j].clone()).collect(),
            DMatrix::from_fn(t, keep.len(), |i, k| self.values[(i, keep[k])]),
            DMatrix::from_fn(t, keep.len(), |i, k| self.mask[(i, keep[k])]),
            self.target.clone(),
        )
    }
}

pub fn load_panel(path: impl AsRef<Path>, format: PanelFormat) -> Result<ForecastPanel> {
    match format {
        PanelFormat::Csv => {
            let file = std::fs::File::open(path.as_ref())?;
            read_panel_csv(file)
        }
    }
}

pub fn read_panel_csv<R: Read>(reader: R) -> Result<ForecastPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(HecaError::validation("no data rows")),
    };
    if header.len() < 3
        || !header[0].eq_ignore_ascii_case("period")
        || !header[1].eq_ignore_ascii_case("target")
    {
        return Err(HecaError::validation(
            "header must be 'period,target,<expert1>,...' with at least one expert",
        ));
    }
    let experts: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let m = experts.len();

    let mut periods = Vec::new();
    let mut target = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec?;
        let row = k + 2;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != m + 2 {
            return Err(HecaError::Parse {
                row,
                column: "<row>".into(),
                message: format!("expected {} fields, found {}", m + 2, rec.len()),
            });
        }
        periods.push(Period::parse(&rec[0]));
        target.push(parse_cell(&rec[1], row, "target")?);
        for j in 0..m {
            cells.push(parse_cell(&rec[j + 2], row, &experts[j])?);
        }
    }
    let t = periods.len();
    if t == 0 {
        return Err(HecaError::validation("no data rows"));
    }
    let values = DMatrix::from_fn(t, m, |i, j| cells[i * m + j].unwrap_or(f64::NAN));
    let mask = DMatrix::from_fn(t, m, |i, j| cells[i * m + j].is_some());
    ForecastPanel::new(periods, experts, values, mask, target)
}

fn parse_cell(s: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(HecaError::Parse {
            row,
            column: column.to_string(),
            message: format!("'{s}' is not a finite number"),
        }),
    }
}

/// Writes the panel in the CSV input layout. Floats use the shortest
/// round-trip representation, so output is byte-stable.
pub fn write_panel_csv<W: Write>(panel: &ForecastPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["period".to_string(), "target".to_string()];
    header.extend(panel.experts.iter().cloned());
    w.write_record(&header)?;
    for t in 0..panel.len() {
        let mut rec = vec![
            panel.periods[t].to_string(),
            panel.target[t].map(|v| v.to_string()).unwrap_or_default(),
        ];
        for j in 0..panel.num_experts() {
            rec.push(if panel.mask[(t, j)] {
                panel.values[(t, j)].to_string()
            } else {
                String::new()
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps the experts that never miss two consecutive periods inside `span`
/// (all rows when `None`). Column order is preserved.
pub fn filter_experts(
    panel: &ForecastPanel,
    span: Option<RangeInclusive<usize>>,
) -> Result<ForecastPanel> {
    let span = span.unwrap_or(0..=panel.len() - 1);
    if *span.end() >= panel.len() || span.start() > span.end() {
        return Err(HecaError::validation("filter span outside the panel"));
    }
    let keep: Vec<usize> = (0..panel.num_experts())
        .filter(|&j| {
            let col = panel.mask.column(j);
            !span
                .clone()
                .collect::<Vec<_>>()
                .windows(2)
                .any(|w| !col[w[0]] && !col[w[1]])
        })
        .collect();
    if keep.is_empty() {
        return Err(HecaError::validation(
            "every expert misses two consecutive periods; nothing left to combine",
        ));
    }
    panel.select_columns(&keep)
}

/// Replaces each missing forecast by the mean of the forecasts reported in
/// the same period.
pub fn impute_missing(panel: &ForecastPanel) -> Result<ForecastPanel> {
    let mut values = panel.values.clone();
    for t in 0..panel.len() {
        let reported: Vec<f64> = (0..panel.num_experts())
            .filter(|&j| panel.mask[(t, j)])
            .map(|j| panel.values[(t, j)])
            .collect();
        if reported.is_empty() {
            return Err(HecaError::validation(format!(
                "no reported forecasts in period {}",
                panel.periods[t]
            )));
        }
        if reported.len() == panel.num_experts() {
            continue;
        }
        let mean = reported.iter().sum::<f64>() / reported.len() as f64;
        for j in 0..panel.num_experts() {
            if !panel.mask[(t, j)] {
                values[(t, j)] = mean;
            }
        }
    }
    let mask = DMatrix::from_element(panel.len(), panel.num_experts(), true);
    ForecastPanel::new(
        panel.periods.clone(),
        panel.experts.clone(),
        values,
        mask,
        panel.target.clone(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDiagnostics {
    /// Sample variance (denominator `n - 1`) of each expert's forecast errors.
    pub error_variances: Vec<f64>,
    /// Pearson correlations of forecast errors; NaN off the diagonal when an
    /// expert's errors are constant.
    pub error_correlations: Vec<Vec<f64>>,
    /// 2-norm condition number of the forecast matrix over the span.
    pub condition_number: f64,
}

/// Error variances, error correlations and the condition number of the raw
/// forecast matrix over `span`.
pub fn diagnostics(panel: &ForecastPanel, span: RangeInclusive<usize>) -> Result<PanelDiagnostics> {
    let (a, b) = (*span.start(), *span.end());
    if a > b || b >= panel.len() {
        return Err(HecaError::validation("diagnostic span outside the panel"));
    }
    let n = b - a + 1;
    if n < 2 {
        return Err(HecaError::validation("diagnostic span needs at least 2 periods"));
    }
    if b >= panel.realized_len() {
        return Err(HecaError::validation(format!(
            "target not realized at period {}",
            panel.periods[b]
        )));
    }
    let m = panel.num_experts();
    if (a..=b).any(|t| (0..m).any(|j| !panel.mask[(t, j)])) {
        return Err(HecaError::validation("panel must be imputed before diagnostics"));
    }
    let errors = DMatrix::from_fn(n, m, |i, j| {
        panel.target[a + i].unwrap() - panel.values[(a + i, j)]
    });
    let means: Vec<f64> = (0..m).map(|j| errors.column(j).mean()).collect();
    let cov = |i: usize, j: usize| -> f64 {
        (0..n)
            .map(|t| (errors[(t, i)] - means[i]) * (errors[(t, j)] - means[j]))
            .sum::<f64>()
            / (n - 1) as f64
    };
    let error_variances: Vec<f64> = (0..m).map(|j| cov(j, j)).collect();
    let error_correlations: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let d = (error_variances[i] * error_variances[j]).sqrt();
                        if d > 0.0 {
                            (cov(i, j) / d).clamp(-1.0, 1.0)
                        } else {
                            f64::NAN
                        }
                    }
                })
                .collect()
        })
        .collect();
    let design = panel.values.rows(a, n).into_owned();
    Ok(PanelDiagnostics {
        error_variances,
        error_correlations,
        condition_number: condition_number(&design),
    })
}

/// Ratio of the largest to the smallest singular value over unit vectors of
/// the column space; infinite when the matrix has fewer rows than columns or
/// is rank deficient.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.nrows() < a.ncols() || a.is_empty() {
        return f64::INFINITY;
    }
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Writes `variances.csv`, `correlations.csv` and `diagnostics.json` into `dir`.
pub fn write_diagnostics(diag: &PanelDiagnostics, experts: &[String], dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("variances.csv"))?;
    w.write_record(experts)?;
    w.write_record(diag.error_variances.iter().map(|v| v.to_string()))?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("correlations.csv"))?;
    let mut header = vec![String::from("expert")];
    header.extend(experts.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in experts.iter().zip(&diag.error_correlations) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let summary = serde_json::json!({ "condition_number": json_number(diag.condition_number) });
    std::fs::write(dir.join("diagnostics.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Non-finite values are not representable in JSON; they become `null`.
pub(crate) fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}
