//! Seeded synthetic panels.
//!
//! Experts forecast a latent AR(1) growth path with their own bias and
//! dispersion. The target is the average of a "core" group of three
//! experts plus optional Gaussian noise; at each break point the core group
//! rotates to the next three experts, giving a regime switch. Optional
//! oracle experts (appended last) forecast the target exactly.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HecaError, Result};
use crate::panel::{ForecastPanel, Period};

const CORE_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Total number of experts, oracles included.
    pub experts: usize,
    pub horizon: usize,
    /// Standard deviation of the target noise.
    pub noise: f64,
    pub seed: u64,
    /// 0-based rows where the core group rotates.
    pub breaks: Vec<usize>,
    /// Number of experts that forecast the target exactly.
    pub oracle: usize,
    /// Probability that a non-core, non-oracle forecast is left blank.
    pub missing: f64,
    pub start: Period,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            experts: 8,
            horizon: 40,
            noise: 0.0,
            seed: 0,
            breaks: Vec::new(),
            oracle: 0,
            missing: 0.0,
            start: Period::Quarter { year: 2000, quarter: 1 },
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = HecaError;

    /// Parses `key=value` pairs separated by commas, e.g.
    /// `experts=6,horizon=60,noise=0.2,seed=7,breaks=30;45,oracle=1`.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| HecaError::validation(format!("expected key=value, got '{part}'")))?;
            let bad = || HecaError::validation(format!("invalid value '{v}' for '{k}'"));
            match k.trim() {
                "experts" => spec.experts = v.parse().map_err(|_| bad())?,
                "horizon" => spec.horizon = v.parse().map_err(|_| bad())?,
                "noise" => spec.noise = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                "oracle" => spec.oracle = v.parse().map_err(|_| bad())?,
                "missing" => spec.missing = v.parse().map_err(|_| bad())?,
                "start" => spec.start = Period::parse(v),
                "breaks" => {
                    spec.breaks = v
                        .split(';')
                        .filter(|b| !b.is_empty())
                        .map(|b| b.trim().parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
                other => {
                    return Err(HecaError::validation(format!("unknown synthetic key '{other}'")))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(HecaError::validation("synthetic horizon must be positive"));
        }
        if self.experts < self.oracle + CORE_SIZE {
            return Err(HecaError::validation(format!(
                "need at least {} experts for {} oracle(s) and a core group of {CORE_SIZE}",
                self.oracle + CORE_SIZE,
                self.oracle
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(HecaError::validation("noise must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.missing) {
            return Err(HecaError::validation("missing probability must lie in [0, 1)"));
        }
        if self.breaks.iter().any(|&b| b == 0 || b >= self.horizon) {
            return Err(HecaError::validation("break points must lie inside the horizon"));
        }
        if self.breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HecaError::validation("break points must be strictly increasing"));
        }
        Ok(())
    }

    /// 0-based indices of the core group in force at row `t`.
    pub fn core_group(&self, t: usize) -> Vec<usize> {
        let generic = self.experts - self.oracle;
        let regime = self.breaks.iter().filter(|&&b| b <= t).count();
        (0..CORE_SIZE)
            .map(|k| (regime * CORE_SIZE + k) % generic)
            .collect()
    }
}

pub fn emit_synthetic(spec: &SyntheticSpec) -> Result<ForecastPanel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let generic = spec.experts - spec.oracle;

    let bias: Vec<f64> = (0..generic).map(|_| 0.3 * std_normal.sample(&mut rng)).collect();
    let spread: Vec<f64> = (0..generic).map(|_| 0.2 + 0.6 * rng.random::<f64>()).collect();

    let t_len = spec.horizon;
    let mut values = DMatrix::zeros(t_len, spec.experts);
    let mut mask = DMatrix::from_element(t_len, spec.experts, true);
    let mut target = Vec::with_capacity(t_len);
    let mut level = 1.5;
    for t in 0..t_len {
        level = 1.5 + 0.6 * (level - 1.5) + 0.5 * std_normal.sample(&mut rng);
        for j in 0..generic {
            values[(t, j)] = level + bias[j] + spread[j] * std_normal.sample(&mut rng);
        }
        let core = spec.core_group(t);
        let mean = core.iter().map(|&j| values[(t, j)]).sum::<f64>() / core.len() as f64;
        let y = if spec.noise > 0.0 {
            mean + spec.noise * std_normal.sample(&mut rng)
        } else {
            mean
        };
        target.push(Some(y));
        for j in generic..spec.experts {
            values[(t, j)] = y;
        }
        if spec.missing > 0.0 {
            for j in 0..generic {
                let draw: f64 = rng.random();
                if !core.contains(&j) && draw < spec.missing {
                    mask[(t, j)] = false;
                }
            }
        }
    }

    let start = spec.start.quarter_index();
    let periods: Vec<Period> = (0..t_len)
        .map(|t| match (start, &spec.start) {
            (Some(q), _) => Period::from_quarter_index(q + t as i64),
            (None, label) => Period::Label(format!("{label}+{t}")),
        })
        .collect();
    let experts: Vec<String> = (0..spec.experts)
        .map(|j| {
            if j < generic {
                format!("expert_{:02}", j + 1)
            } else {
                format!("oracle_{:02}", j + 1 - generic)
            }
        })
        .collect();
    ForecastPanel::new(periods, experts, values, mask, target)
}
