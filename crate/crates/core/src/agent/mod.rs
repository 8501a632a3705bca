//! Agent-facing data model: actions, token codecs, histories, episodes.

pub mod action;
pub mod history;
pub mod tokens;

pub use action::{EnvAction, TimedEvent};
pub use history::{build_context, AttemptOutcome, EpisodeRecord, History, Trajectory};
pub use tokens::{decode_action, encode_action, Token, TokenSeq, VOCAB_SIZE};
