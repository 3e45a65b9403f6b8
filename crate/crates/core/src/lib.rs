//! Token-level WORD and CIU classification for aphasia discourse transcripts.

pub mod chat;
pub mod classifiers;
pub mod error;
pub mod features;
pub mod gate;
pub mod harness;
pub mod labels;
pub mod metrics;
pub mod sparse;
pub mod stats;

pub use error::{Error, Result};
