//! Experiment harness: configuration, per-epoch information-plane logging,
//! the four experiments, CSV reports and SVG plots.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod trajectory;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
pub use trajectory::InfoPlanePoint;
