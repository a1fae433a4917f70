//! The iteration loop over the plan tree.

mod config;
mod engine;
mod segment;
mod trace;

pub use config::{ConfigError, ContextMode, EdgeKind, RefinementMode, SearchConfig, SearchStrategy};
pub use engine::{run_episode, EpisodeResult, SearchError, StopReason};
pub use segment::{Termination, TrajectorySegment};
pub use trace::{EpisodeTrace, Phase, PromptRecord, TraceEvent};
