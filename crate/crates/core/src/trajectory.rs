//! Trajectory and reward data model: critique labels, scalar reward maps,
//! reasoning steps, cumulative rewards, and candidate/final selection.
//!
//! All reward arithmetic uses `f64`. The default map values (1.0, 0.5, 0.0)
//! are exactly representable, so incremental folding and batch summation
//! agree bit-exactly.

use crate::accounting::EfficiencyRecord;
use crate::retrieval::RetrievalHit;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relevance judgment of a retrieved document for the current sub-question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalLabel {
    Relevant,
    PartiallyRelevant,
    Irrelevant,
}

impl RetrievalLabel {
    /// The bracketed surface form used in trajectory text and critic output.
    pub fn surface(&self) -> &'static str {
        match self {
            RetrievalLabel::Relevant => "[Relevant]",
            RetrievalLabel::PartiallyRelevant => "[Partially Relevant]",
            RetrievalLabel::Irrelevant => "[Irrelevant]",
        }
    }

    pub fn parse_surface(s: &str) -> Option<Self> {
        match s.trim() {
            "[Relevant]" => Some(RetrievalLabel::Relevant),
            "[Partially Relevant]" => Some(RetrievalLabel::PartiallyRelevant),
            "[Irrelevant]" => Some(RetrievalLabel::Irrelevant),
            _ => None,
        }
    }

    pub const ALL: [RetrievalLabel; 3] = [
        RetrievalLabel::Relevant,
        RetrievalLabel::PartiallyRelevant,
        RetrievalLabel::Irrelevant,
    ];
}

/// Support judgment of a reasoning step against its evidence document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupportLabel {
    FullySupported,
    PartiallySupported,
    NotSupported,
}

impl SupportLabel {
    pub fn surface(&self) -> &'static str {
        match self {
            SupportLabel::FullySupported => "[Fully supported]",
            SupportLabel::PartiallySupported => "[Partially supported]",
            SupportLabel::NotSupported => "[Not supported]",
        }
    }

    pub fn parse_surface(s: &str) -> Option<Self> {
        match s.trim() {
            "[Fully supported]" => Some(SupportLabel::FullySupported),
            "[Partially supported]" => Some(SupportLabel::PartiallySupported),
            "[Not supported]" => Some(SupportLabel::NotSupported),
            _ => None,
        }
    }

    pub const ALL: [SupportLabel; 3] = [
        SupportLabel::FullySupported,
        SupportLabel::PartiallySupported,
        SupportLabel::NotSupported,
    ];
}

/// Overall quality judgment of a finished trajectory on the 1..=5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeScore(u8);

impl OutcomeScore {
    pub fn new(value: u8) -> Result<Self, RewardError> {
        if (1..=5).contains(&value) {
            Ok(OutcomeScore(value))
        } else {
            Err(RewardError::OutcomeOutOfRange(value))
        }
    }

    pub fn value(&self) -> u8 {
        self.0
    }
}

/// Reward granularity: fine keeps the middle label at 0.5, coarse collapses
/// it to 0 so the reward is strictly binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Fine,
    Coarse,
}

/// Strategy for choosing the final trajectory among the finished pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Argmax of the cumulative process reward.
    CumulativeProcess,
    /// Argmax of the normalized outcome score.
    Outcome,
    /// Uniform pick with the given seed (baseline).
    Random { seed: u64 },
}

/// Label-to-scalar reward mappings plus the final-selection strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub granularity: Granularity,
    /// Scalars for (Relevant, PartiallyRelevant, Irrelevant).
    pub retrieval_map: [f64; 3],
    /// Scalars for (FullySupported, PartiallySupported, NotSupported).
    pub support_map: [f64; 3],
    pub selection: SelectionStrategy,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig::fine()
    }
}

impl RewardConfig {
    pub fn fine() -> Self {
        RewardConfig {
            granularity: Granularity::Fine,
            retrieval_map: [1.0, 0.5, 0.0],
            support_map: [1.0, 0.5, 0.0],
            selection: SelectionStrategy::CumulativeProcess,
        }
    }

    pub fn coarse() -> Self {
        RewardConfig {
            granularity: Granularity::Coarse,
            retrieval_map: [1.0, 0.0, 0.0],
            support_map: [1.0, 0.0, 0.0],
            selection: SelectionStrategy::CumulativeProcess,
        }
    }

    pub fn retrieval_reward(&self, label: RetrievalLabel) -> f64 {
        match label {
            RetrievalLabel::Relevant => self.retrieval_map[0],
            RetrievalLabel::PartiallyRelevant => self.retrieval_map[1],
            RetrievalLabel::Irrelevant => self.retrieval_map[2],
        }
    }

    pub fn support_reward(&self, label: SupportLabel) -> f64 {
        match label {
            SupportLabel::FullySupported => self.support_map[0],
            SupportLabel::PartiallySupported => self.support_map[1],
            SupportLabel::NotSupported => self.support_map[2],
        }
    }

    /// Normalize a 1..=5 outcome score onto [0,1]: (v - 1) / 4.
    pub fn outcome_norm(&self, score: OutcomeScore) -> f64 {
        f64::from(score.value() - 1) / 4.0
    }
}

/// Whether a step resolved an atomic question directly or decomposed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    NonAtomic,
    Atomic,
}

/// The evidence document selected for a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDoc {
    pub doc_id: String,
    pub text: String,
}

/// One iteration of the reasoning loop: sub-question, evidence, critique
/// labels with their scalar rewards, reasoning text, and the reduced
/// remaining question.
///
/// Atomic steps carry no sub-question and no remaining question. Critique
/// labels are absent only in plain-greedy mode, where no critic runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub kind: StepKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sub_question: Option<String>,
    pub doc: StepDoc,
    /// All scored hits considered for this step, for audit.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub candidates: Vec<RetrievalHit>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub retrieval_label: Option<RetrievalLabel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_retr: Option<f64>,
    pub reasoning: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub support_label: Option<SupportLabel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_reas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub remaining_question: Option<String>,
}

impl ReasoningStep {
    /// Populate the scalar rewards from the labels under `cfg`.
    pub fn apply_rewards(&mut self, cfg: &RewardConfig) {
        self.r_retr = self.retrieval_label.map(|l| cfg.retrieval_reward(l));
        self.r_reas = self.support_label.map(|l| cfg.support_reward(l));
    }
}

/// Lifecycle of a candidate trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Active,
    Finished,
    Failed,
}

/// An evolving reasoning prefix: the original question, its ordered steps,
/// the cumulative process reward, and (once finished) the extracted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question: String,
    pub steps: Vec<ReasoningStep>,
    pub status: TrajectoryStatus,
    /// Cumulative process reward; absent when no critique ran (plain greedy).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outcome: Option<OutcomeScore>,
    /// Creation order within a run; the reproducible tie-breaker.
    pub birth_index: u64,
    pub accounting: EfficiencyRecord,
    /// Why a Failed trajectory failed, when it did.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn new(question: impl Into<String>, birth_index: u64) -> Self {
        Trajectory {
            question: question.into(),
            steps: Vec::new(),
            status: TrajectoryStatus::Active,
            r_c: Some(0.0),
            answer: None,
            outcome: None,
            birth_index,
            accounting: EfficiencyRecord::default(),
            failure: None,
        }
    }

    /// Cumulative reward used for ranking; unrewarded trajectories rank as 0.
    pub fn reward(&self) -> f64 {
        self.r_c.unwrap_or(0.0)
    }

    /// Batch recomputation of the cumulative reward: the sum over steps of
    /// r_retr + r_reas. Must equal the incremental `r_c` bit-exactly.
    pub fn batch_reward(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.r_retr.unwrap_or(0.0) + s.r_reas.unwrap_or(0.0))
            .sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("outcome score {0} outside 1..=5")]
    OutcomeOutOfRange(u8),
    #[error("selection strategy Outcome requires an outcome score on every finished trajectory (missing on birth {0})")]
    MissingOutcome(u64),
    #[error("final_select called with no finished trajectories")]
    EmptyFinishedPool,
}

/// Per-iteration reward summand: retrieval reward plus support reward.
pub fn step_reward(step: &ReasoningStep, cfg: &RewardConfig) -> f64 {
    let r = step
        .retrieval_label
        .map(|l| cfg.retrieval_reward(l))
        .unwrap_or(0.0);
    let s = step
        .support_label
        .map(|l| cfg.support_reward(l))
        .unwrap_or(0.0);
    r + s
}

/// Fold one step into a running cumulative reward.
pub fn accumulate(prev: f64, step: &ReasoningStep, cfg: &RewardConfig) -> f64 {
    prev + step_reward(step, cfg)
}

/// Keep the min(k, |candidates|) trajectories with the largest cumulative
/// reward. Ties break toward the smaller birth index; output is ordered by
/// (reward desc, birth asc). The input is unmodified; an empty input yields
/// an empty output (search exhaustion, not a fault).
pub fn top_k_select(candidates: &[Trajectory], k: usize) -> Vec<Trajectory> {
    let mut ranked: Vec<&Trajectory> = candidates.iter().collect();
    ranked.sort_by(|a, b| {
        b.reward()
            .partial_cmp(&a.reward())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.birth_index.cmp(&b.birth_index))
    });
    ranked.into_iter().take(k).cloned().collect()
}

/// Choose the final trajectory among the finished pool per the configured
/// strategy. Ties break toward the smaller birth index.
pub fn final_select<'a>(
    finished: &'a [Trajectory],
    cfg: &RewardConfig,
) -> Result<&'a Trajectory, RewardError> {
    if finished.is_empty() {
        return Err(RewardError::EmptyFinishedPool);
    }
    match cfg.selection {
        SelectionStrategy::CumulativeProcess => {
            Ok(argmax_by(finished, |t| t.reward()))
        }
        SelectionStrategy::Outcome => {
            for t in finished {
                if t.outcome.is_none() {
                    return Err(RewardError::MissingOutcome(t.birth_index));
                }
            }
            Ok(argmax_by(finished, |t| {
                cfg.outcome_norm(t.outcome.expect("checked above"))
            }))
        }
        SelectionStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = rng.gen_range(0..finished.len());
            Ok(&finished[idx])
        }
    }
}

fn argmax_by<F: Fn(&Trajectory) -> f64>(items: &[Trajectory], key: F) -> &Trajectory {
    items
        .iter()
        .max_by(|a, b| {
            key(a)
                .partial_cmp(&key(b))
                .unwrap_or(std::cmp::Ordering::Equal)
                // On reward ties prefer the smaller birth index, i.e. treat
                // it as larger in the max comparison.
                .then(b.birth_index.cmp(&a.birth_index))
        })
        .expect("non-empty checked by caller")
}
