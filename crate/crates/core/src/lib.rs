//! In-context physical reasoning agents.
//!
//! The crate bundles a deterministic 2D puzzle simulator, a tokenized
//! policy trained with turn-aware group-relative policy optimization, a
//! learned success predictor used as an in-context simulator, balanced
//! dataset curation for that predictor, and a root-node PUCT planner.

pub mod agent;
pub mod curation;
pub mod error;
pub mod grpo;
pub mod harness;
pub mod planner;
pub mod policy;
pub mod seed;
pub mod sim;
pub mod worldmodel;

pub use error::{Error, Result};
