//! Knowledge tracing with personalized learning gains and causal forgetting.
//!
//! The crate covers the whole pipeline: log ingestion ([`data`]), concept
//! prerequisite graphs ([`graph`]), the recurrent cells ([`model`]),
//! training and metrics ([`train`]) and a synthetic-student oracle ([`synth`]).

pub mod config;
pub mod data;
pub mod graph;
pub mod model;
pub mod synth;
pub mod train;
mod error;

pub use config::{GradcheckConfig, RunConfig};
pub use error::{CoreError, Result};
