//! The tokenized policy: a one-hidden-layer network over context features
//! with grammar-masked softmax outputs.

pub mod context;
pub mod network;

pub use context::{ContextReader, GrammarState, FEATURE_DIM};
pub use network::{
    kl_divergence, masked_log_softmax, snapshot, PolicyParams, RefPolicy, Sampled, Step,
};
