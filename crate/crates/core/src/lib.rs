//! Intertemporal difference-in-differences for binned cumulative treatments.
//!
//! The crate covers ingestion of a unit × period panel, cumulative exposure
//! and binning, clustering of units on baseline features, switch detection,
//! optional residualization on controls, the estimators with bootstrap
//! inference, a simulator with known ground truth, and the batch pipeline
//! behind the `cumdid` binary.

pub mod clustering;
pub mod config;
pub mod cohorts;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod exposure;
pub mod ols;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod residualize;

pub use error::{Error, ErrorKind, Result};
