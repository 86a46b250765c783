//! Visual-to-music generation: captioning, LLM prompt bridging and music
//! synthesis over pluggable inference backends, with provenance traces and
//! the objective evaluation metrics used to compare systems.

pub mod audio;
pub mod backends;
pub mod bridge;
pub mod canonical;
pub mod captioning;
pub mod config;
pub mod digest;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod templates;
pub mod trace;

#[doc(hidden)]
pub mod testutil;

pub use error::{PipelineError, StageName};
