//! Periodicity-guided pulse-signal estimation and reconstruction for
//! ultra-short observation windows.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod losses;
pub mod models;
pub mod seeds;
pub mod sigcore;
pub mod synth;
pub mod train;
pub mod xcorr;

pub use error::{Error, Result};
pub use sigcore::{BandDistribution, HrEstimate, MetricsReport, Signal};
pub use xcorr::RunningCorrelation;
