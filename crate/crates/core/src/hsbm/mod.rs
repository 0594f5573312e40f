//! Topic inference with a nested degree-corrected stochastic block model on
//! the document–word multigraph.

mod engine;
pub mod graph;
pub mod infer;
pub mod special;
pub mod state;
pub mod topics;

use thiserror::Error;

pub use graph::{BipartiteGraph, Side};
pub use infer::{infer, InferConfig, InferenceRun};
pub use state::{description_length, BlockEdge, BlockState, LevelState};
pub use topics::{extract_topics, select_level, LevelChoice, TopicModel};

#[derive(Debug, Error, PartialEq)]
pub enum HsbmError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("inconsistent block state: {0}")]
    InconsistentState(String),
    #[error("level {level} out of range (state has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("invalid inference config: {0}")]
    InvalidConfig(String),
}
