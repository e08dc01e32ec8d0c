//! Efficiency accounting: per-trajectory and run-level cost ledgers.
//!
//! One reasoning iteration is a complete retrieval-generation round; multiple
//! retrieval calls may occur within a single iteration. Wall time is
//! attributed by the backends (real clients measure request time, the
//! scripted mock reports zero) so that scripted runs serialize
//! deterministically regardless of host load.

use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Cost ledger for one trajectory or one aggregated run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    pub iterations: u64,
    pub retrieval_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Attributed wall time in microseconds.
    pub wall_time_us: u64,
}

/// How sibling ledgers composed in time: one after another, or overlapping.
///
/// Throughput divides instances by elapsed time, not summed time, so the
/// caller must declare which shape applies. Counts are summed either way;
/// wall time is summed for sequential siblings and maxed for concurrent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeShape {
    Sequential,
    Concurrent,
}

impl EfficiencyRecord {
    pub fn wall_time(&self) -> Duration {
        Duration::from_micros(self.wall_time_us)
    }

    pub fn add_usage(&mut self, prompt_tokens: u64, completion_tokens: u64, elapsed_us: u64) {
        self.prompt_tokens += prompt_tokens;
        self.completion_tokens += completion_tokens;
        self.wall_time_us += elapsed_us;
    }
}

/// Merge a set of sibling ledgers into one, per the declared shape.
///
/// The empty list merges to the zero record. Merging is associative within
/// each shape.
pub fn ledger_merge(records: &[EfficiencyRecord], shape: MergeShape) -> EfficiencyRecord {
    let mut out = EfficiencyRecord::default();
    for r in records {
        out.iterations += r.iterations;
        out.retrieval_calls += r.retrieval_calls;
        out.prompt_tokens += r.prompt_tokens;
        out.completion_tokens += r.completion_tokens;
        out.wall_time_us = match shape {
            MergeShape::Sequential => out.wall_time_us + r.wall_time_us,
            MergeShape::Concurrent => out.wall_time_us.max(r.wall_time_us),
        };
    }
    out
}
