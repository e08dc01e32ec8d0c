//! Critique-guided iterative reasoning engine for multi-hop question answering.
//!
//! The engine drives a text-generation backend through interleaved question
//! decomposition, retrieval, reasoning, and self-evaluation. Candidate
//! reasoning trajectories are searched with an iteration-level beam guided by
//! cumulative process rewards. Supporting subsystems provide a BM25 sparse
//! retriever with hybrid dense fusion, trajectory markup parsing, token-level
//! F1 evaluation, and training-corpus synthesis.

pub mod accounting;
pub mod backend;
pub mod config;
pub mod eval;
pub mod markup;
pub mod retrieval;
pub mod search;
pub mod sim;
pub mod synthesis;
pub mod trajectory;

pub use accounting::EfficiencyRecord;
pub use backend::{GenBackend, GenRequest, GenResponse, GenSession};
pub use retrieval::{CorpusDoc, InvertedIndex, RetrievalHit};
pub use trajectory::{
    OutcomeScore, ReasoningStep, RetrievalLabel, RewardConfig, SupportLabel, Trajectory,
};
