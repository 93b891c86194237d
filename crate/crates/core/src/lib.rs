//! Forecast combination with egalitarian committees.
//!
//! The pipeline has two stages. First, for every committee size `c` an
//! exact cardinality-constrained ridge regression picks the best `c`
//! experts and shrinks their weights toward `1/c` ([`subset_select`],
//! backed by the per-subset QP in [`ridge_qp`]); the rolling-window driver
//! in [`committees`] tunes the shrinkage intensity and produces one
//! forecast per committee. Second, a hedge-style aggregator
//! ([`online`]) mixes the committee forecasts with multiplicative weights
//! and tracks realized average regret against the closed-form bounds.
//!
//! [`panel`] handles CSV ingestion, expert filtering and imputation;
//! [`experiment`] wires everything together for the command-line tool and
//! [`synthetic`] generates reproducible test panels.

pub mod committees;
pub mod error;
pub mod experiment;
mod linalg;
pub mod online;
pub mod panel;
pub mod ridge_qp;
pub mod subset_select;
pub mod synthetic;

pub use error::{HecaError, Result};
