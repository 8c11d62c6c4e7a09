//! Panel threshold regression and distributed-lag event studies with
//! two-way fixed effects and cluster-robust inference, plus a synthetic
//! weighted-voting data generator used to validate the estimators.

pub mod binscatter;
pub mod cli;
pub mod dgp;
pub mod event_study;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod plot;
pub mod regression;
pub mod threshold;
pub mod within;

pub use error::{Error, Result};
