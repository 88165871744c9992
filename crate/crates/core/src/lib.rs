//! Forecasting competitions that reward the top scorer, and the mechanisms,
//! strategies and concentration bounds that make them truthful.

// Domain checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod concentration;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod mechanism;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod scoring;
pub mod stats;
pub mod types;

pub use distributions::{BlockStructure, ConditionalQuery, EventDistribution, Family};
pub use error::{ArenaError, Result};
pub use types::{BeliefMatrix, OutcomeVector, ProbMatrix, ReportMatrix};
