//! Training-corpus construction: few-shot rationale synthesis reformatted
//! into the trajectory markup (phase 1), critic-record extraction over a
//! disjoint corpus (phase 2), self-critique annotation (phase 3), and the
//! outcome-threshold self-improvement filter.

use crate::backend::{
    critique_outcome, critique_reasoning, critique_retrieval, wrap_instruction, BackendError,
    CriticError, GenRequest, GenSession, GENERATOR_PROMPT, OUTCOME_CRITIC_PROMPT,
    REASONING_CRITIC_PROMPT, RETRIEVAL_CRITIC_PROMPT,
};
use crate::eval::token_f1;
use crate::markup::{
    extract_answer, parse_trajectory, render_prefix, strip_documents, MarkupError, RenderUpto,
    Segment, SegmentRole,
};
use crate::trajectory::{
    OutcomeScore, ReasoningStep, RewardConfig, StepDoc, StepKind, Trajectory,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Which pipeline phase produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Phase1,
    Phase3,
    SelfImprovement,
}

/// One training record: ordered role-tagged segments whose concatenation is
/// the full training text, so a downstream trainer can mask document (and
/// critique) segments without re-parsing markup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub instance_id: String,
    pub segments: Vec<Segment>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outcome: Option<OutcomeScore>,
}

impl TrainingRecord {
    /// The concatenated text of all segments.
    pub fn text(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }
}

/// A synthesis input: a question with its gold answer and supporting
/// documents, one document per reasoning hop, each formatted "Title\nBody".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthInstance {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub documents: Vec<String>,
}

/// Phase assignment of the corpus: generator instances (X) and the
/// non-overlapping critic instances (X_critic), plus the self-improvement
/// threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub generator_ids: BTreeSet<String>,
    pub critic_ids: BTreeSet<String>,
    pub tau: OutcomeScore,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if let Some(id) = self.generator_ids.intersection(&self.critic_ids).next() {
            return Err(SynthesisError::CorpusOverlap(id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("could not parse generator output: {0}")]
    ParseFailure(String),
    #[error("extracted answer {extracted:?} does not match gold {gold:?} (f1 {f1:.3})")]
    AnswerMismatch {
        extracted: String,
        gold: String,
        f1: f64,
    },
    #[error("instance {0} appears in both the generator and critic corpora")]
    CorpusOverlap(String),
    #[error("instance {0} is not assigned to the corpus required by this phase")]
    WrongCorpus(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Minimum token-level F1 for a synthesized answer to count as matching the
/// gold answer; slightly under 1.0 to tolerate article/punctuation drift.
pub const ANSWER_F1_GATE: f64 = 0.99;

// ---------------------------------------------------------------------------
// Phase 1: rationale synthesis
// ---------------------------------------------------------------------------

/// Few-shot-prompt the generator for an interleaved rationale, parse its
/// sectioned output, and reformat it into trajectory markup with a retrieval
/// trigger before each injected document. Records whose extracted answer
/// misses the gold answer are rejected, not emitted.
pub fn synthesize_rationale(
    instance: &SynthInstance,
    session: &mut dyn GenSession,
) -> Result<TrainingRecord, SynthesisError> {
    if instance.documents.is_empty() {
        return Err(SynthesisError::InvalidInput(
            "instance has no supporting documents".into(),
        ));
    }
    let docs_block = instance
        .documents
        .iter()
        .enumerate()
        .map(|(i, d)| format!("### Document #{}: {d}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = wrap_instruction(
        &GENERATOR_PROMPT
            .replace("{documents}", &docs_block)
            .replace("{question}", &instance.question),
    );
    let mut req = GenRequest::new(prompt);
    req.max_tokens = 2048;
    let resp = session.complete(&req)?;

    let traj = reformat_rationale(&instance.question, &instance.documents, &resp.text)?;
    let answer = traj.answer.clone().expect("reformat always sets an answer");
    let f1 = token_f1(&answer, &instance.answer);
    if f1 < ANSWER_F1_GATE {
        return Err(SynthesisError::AnswerMismatch {
            extracted: answer,
            gold: instance.answer.clone(),
            f1,
        });
    }
    record_from_trajectory(&instance.id, &traj, Provenance::Phase1, None)
}

/// A `### `-headed section of the generator's output.
struct Section {
    title: String,
    body: String,
}

fn split_sections(text: &str) -> Vec<Section> {
    let mut sections = Vec::new();
    for line in text.lines() {
        if let Some(title) = line.strip_prefix("### ") {
            sections.push(Section {
                title: title.trim().to_string(),
                body: String::new(),
            });
        } else if let Some(cur) = sections.last_mut() {
            if !cur.body.is_empty() {
                cur.body.push('\n');
            }
            cur.body.push_str(line);
        }
    }
    for s in &mut sections {
        s.body = s.body.trim().to_string();
    }
    sections
}

/// Reorganize the sectioned generator output into the interleaved trajectory
/// markup: one iteration per sub-question/remaining-question section, with
/// document i injected into iteration i.
fn reformat_rationale(
    question: &str,
    documents: &[String],
    output: &str,
) -> Result<Trajectory, SynthesisError> {
    let sections = split_sections(output);
    let mut hops: Vec<(String, String)> = Vec::new();
    let mut answer: Option<String> = None;
    for s in &sections {
        if let Some(q) = s
            .title
            .strip_prefix("Sub-question:")
            .or_else(|| s.title.strip_prefix("Remaining Question:"))
        {
            hops.push((q.trim().to_string(), s.body.clone()));
        } else if s.title == "Final Answer" {
            answer = Some(
                extract_answer(&s.body)
                    .map_err(|e| SynthesisError::ParseFailure(e.to_string()))?,
            );
        }
    }
    let answer =
        answer.ok_or_else(|| SynthesisError::ParseFailure("missing ### Final Answer".into()))?;
    if hops.is_empty() {
        return Err(SynthesisError::ParseFailure(
            "no sub-question sections".into(),
        ));
    }
    if hops.len() != documents.len() {
        return Err(SynthesisError::ParseFailure(format!(
            "{} reasoning sections but {} supporting documents",
            hops.len(),
            documents.len()
        )));
    }

    let mut traj = Trajectory::new(question, 0);
    let last = hops.len() - 1;
    for (i, (hop_q, body)) in hops.iter().enumerate() {
        let atomic = i == last;
        traj.steps.push(ReasoningStep {
            index: i,
            kind: if atomic {
                StepKind::Atomic
            } else {
                StepKind::NonAtomic
            },
            sub_question: (!atomic).then(|| hop_q.clone()),
            doc: StepDoc {
                doc_id: String::new(),
                text: documents[i].clone(),
            },
            candidates: Vec::new(),
            retrieval_label: None,
            r_retr: None,
            reasoning: body.clone(),
            support_label: None,
            r_reas: None,
            remaining_question: (!atomic).then(|| hops[i + 1].0.clone()),
        });
    }
    traj.answer = Some(answer);
    traj.status = crate::trajectory::TrajectoryStatus::Finished;
    traj.r_c = None;
    Ok(traj)
}

/// Render a trajectory and split it into maskable segments; the emitted
/// record always re-parses under the full grammar.
fn record_from_trajectory(
    instance_id: &str,
    traj: &Trajectory,
    provenance: Provenance,
    outcome: Option<OutcomeScore>,
) -> Result<TrainingRecord, SynthesisError> {
    let text = render_prefix(traj, RenderUpto::End);
    parse_trajectory(&text, &RewardConfig::fine())
        .map_err(|e| SynthesisError::ParseFailure(format!("rendered record fails re-parse: {e}")))?;
    Ok(TrainingRecord {
        instance_id: instance_id.to_string(),
        segments: strip_documents(&text)?,
        provenance,
        outcome,
    })
}

// ---------------------------------------------------------------------------
// Phase 2: critic records
// ---------------------------------------------------------------------------

/// Per-label counts of a critic-record batch, for balance auditing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub retrieval: BTreeMap<String, u64>,
    pub support: BTreeMap<String, u64>,
    pub outcome: BTreeMap<u8, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticBatch {
    pub records: Vec<TrainingRecord>,
    pub counts: LabelCounts,
}

/// The question a step was answering: its own sub-question, else the most
/// recent remaining question, else the original question.
fn step_question(traj: &Trajectory, idx: usize) -> String {
    if let Some(q) = &traj.steps[idx].sub_question {
        return q.clone();
    }
    traj.steps[..idx]
        .iter()
        .rev()
        .find_map(|s| s.remaining_question.clone())
        .unwrap_or_else(|| traj.question.clone())
}

/// Extract one critic-training record per critique judgment in a labeled
/// trajectory: a retrieval record and a reasoning record per step, plus one
/// outcome record. The instance must belong to the critic corpus.
pub fn build_critic_records(
    instance_id: &str,
    traj: &Trajectory,
    cfg: &SynthesisConfig,
) -> Result<CriticBatch, SynthesisError> {
    cfg.validate()?;
    if cfg.generator_ids.contains(instance_id) || !cfg.critic_ids.contains(instance_id) {
        return Err(SynthesisError::WrongCorpus(instance_id.to_string()));
    }
    let mut records = Vec::new();
    let mut counts = LabelCounts::default();
    let mk = |prompt: String, completion: String| TrainingRecord {
        instance_id: instance_id.to_string(),
        segments: vec![
            Segment {
                role: SegmentRole::Instruction,
                text: prompt,
            },
            Segment {
                role: SegmentRole::Critique,
                text: completion,
            },
        ],
        provenance: Provenance::Phase1,
        outcome: None,
    };
    for (i, step) in traj.steps.iter().enumerate() {
        let question = step_question(traj, i);
        let retr = step.retrieval_label.ok_or_else(|| {
            SynthesisError::InvalidInput(format!("step {i} has no retrieval label"))
        })?;
        let reas = step.support_label.ok_or_else(|| {
            SynthesisError::InvalidInput(format!("step {i} has no reasoning label"))
        })?;
        records.push(mk(
            wrap_instruction(
                &RETRIEVAL_CRITIC_PROMPT
                    .replace("{question}", &question)
                    .replace("{evidence}", &step.doc.text),
            ),
            format!("Rating: {}", retr.surface()),
        ));
        *counts
            .retrieval
            .entry(retr.surface().to_string())
            .or_insert(0) += 1;
        records.push(mk(
            wrap_instruction(
                &REASONING_CRITIC_PROMPT
                    .replace("{question}", &question)
                    .replace("{evidence}", &step.doc.text)
                    .replace("{response}", &step.reasoning),
            ),
            format!("Rating: {}", reas.surface()),
        ));
        *counts
            .support
            .entry(reas.surface().to_string())
            .or_insert(0) += 1;
    }
    let outcome = traj
        .outcome
        .ok_or_else(|| SynthesisError::InvalidInput("trajectory has no outcome score".into()))?;
    records.push(mk(
        wrap_instruction(
            &OUTCOME_CRITIC_PROMPT
                .replace("{question}", &traj.question)
                .replace("{reasoning}", &render_prefix(traj, RenderUpto::End)),
        ),
        format!("Rating: [{}]", outcome.value()),
    ));
    *counts.outcome.entry(outcome.value()).or_insert(0) += 1;
    Ok(CriticBatch { records, counts })
}

// ---------------------------------------------------------------------------
// Phase 3: self-critique annotation
// ---------------------------------------------------------------------------

/// Annotate an unlabeled trajectory with critique labels from the critic:
/// a retrieval judgment after each paragraph, a reasoning judgment after
/// each reasoning text, and an overall score at the end. The output
/// re-parses under the full grammar.
pub fn annotate_self_critique(
    text: &str,
    instance_id: &str,
    critic: &mut dyn GenSession,
) -> Result<TrainingRecord, SynthesisError> {
    let mut traj = parse_trajectory(text, &RewardConfig::fine())?;
    let labeled = traj.steps.iter().any(|s| {
        s.retrieval_label.is_some() || s.support_label.is_some()
    }) || traj.outcome.is_some();
    if labeled {
        return Err(SynthesisError::InvalidInput(
            "trajectory already carries critique labels".into(),
        ));
    }
    for i in 0..traj.steps.len() {
        let question = step_question(&traj, i);
        let (retr, _) = critique_retrieval(critic, &question, &traj.steps[i].doc.text)?;
        traj.steps[i].retrieval_label = Some(retr);
        let (reas, _) =
            critique_reasoning(critic, &question, &traj.steps[i].doc.text, &traj.steps[i].reasoning)?;
        traj.steps[i].support_label = Some(reas);
    }
    let rendered = render_prefix(&traj, RenderUpto::End);
    let outcome = critique_outcome(critic, &traj.question, &rendered)?;
    traj.outcome = Some(outcome);
    record_from_trajectory(instance_id, &traj, Provenance::Phase3, Some(outcome))
}

// ---------------------------------------------------------------------------
// Self-improvement filter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<TrainingRecord>,
    pub dropped_below_threshold: u64,
    pub dropped_missing_outcome: u64,
}

/// Keep exactly the records whose outcome score reaches `tau`, preserving
/// order. Records without an outcome are dropped under a distinct counter.
pub fn filter_self_improvement(
    records: impl IntoIterator<Item = TrainingRecord>,
    tau: OutcomeScore,
) -> FilterReport {
    let mut report = FilterReport {
        kept: Vec::new(),
        dropped_below_threshold: 0,
        dropped_missing_outcome: 0,
    };
    for mut r in records {
        match r.outcome {
            Some(score) if score >= tau => {
                r.provenance = Provenance::SelfImprovement;
                report.kept.push(r);
            }
            Some(_) => report.dropped_below_threshold += 1,
            None => report.dropped_missing_outcome += 1,
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GenBackend, ScriptedBackend};
    use crate::markup::figure_text;
    use crate::trajectory::{RetrievalLabel, SupportLabel};

    fn exemplar_instance() -> SynthInstance {
        SynthInstance {
            id: "x1".into(),
            question: "What nationality is the director of film Cuidado Con Las Imitaciones?"
                .into(),
            answer: "Spanish".into(),
            documents: vec![
                "Cuidado con las imitaciones\nCuidado con las imitaciones is a 1948 Argentine film directed by Luis Bayon Herrera.".into(),
                "Luis Bayon Herrera\nLuis Bayon Herrera (23 September 1889 - 30 March 1956) was a Spanish film director and screenwriter who worked in Argentine film.".into(),
            ],
        }
    }

    fn exemplar_output() -> &'static str {
        "To answer this multi-hop question, we need to solve the following sub-questions:\n\n\
### Decompose the multi-hop question into sub-questions\n\
1. Who is the director of the film Cuidado Con Las Imitaciones?\n\
2. What is the nationality of that director?\n\n\
Next, let's solve the sub-questions one by one.\n\n\
### Sub-question: Who is the director of the film Cuidado Con Las Imitaciones?\n\
From Document #1, we know that the film was directed by Luis Bayon Herrera.\n\n\
### Remaining Question: What is the nationality of Luis Bayon Herrera?\n\
From Document #2, we know that Luis Bayon Herrera was a Spanish film director, which means his nationality is Spanish.\n\n\
### Final Answer\n\
@@Spanish@@\n"
    }

    #[test]
    fn synthesizes_the_exemplar_into_two_iterations() {
        let backend = ScriptedBackend::from_turns(vec![exemplar_output()]);
        let mut s = backend.session("x1").unwrap();
        let record = synthesize_rationale(&exemplar_instance(), &mut *s).unwrap();
        let text = record.text();
        let traj = parse_trajectory(&text, &RewardConfig::fine()).unwrap();
        assert_eq!(traj.steps.len(), 2);
        assert_eq!(traj.answer.as_deref(), Some("Spanish"));
        assert_eq!(traj.steps[0].kind, StepKind::NonAtomic);
        assert_eq!(traj.steps[1].kind, StepKind::Atomic);
        assert!(traj.steps[0].doc.text.starts_with("Cuidado con las imitaciones"));
        assert!(traj.steps[1].doc.text.starts_with("Luis Bayon Herrera"));
        assert_eq!(record.provenance, Provenance::Phase1);
        // Documents are maskable segments covering the injected paragraphs.
        let docs: Vec<_> = record
            .segments
            .iter()
            .filter(|s| s.role == SegmentRole::Document)
            .collect();
        assert_eq!(docs.len(), 2);
    }

    #[test]
    fn missing_final_answer_is_parse_failure() {
        let out = exemplar_output().replace("### Final Answer\n@@Spanish@@\n", "");
        let backend = ScriptedBackend::from_turns(vec![out]);
        let mut s = backend.session("x1").unwrap();
        assert!(matches!(
            synthesize_rationale(&exemplar_instance(), &mut *s).unwrap_err(),
            SynthesisError::ParseFailure(_)
        ));
    }

    #[test]
    fn wrong_answer_is_rejected() {
        let out = exemplar_output().replace("@@Spanish@@", "@@French@@");
        let backend = ScriptedBackend::from_turns(vec![out]);
        let mut s = backend.session("x1").unwrap();
        assert!(matches!(
            synthesize_rationale(&exemplar_instance(), &mut *s).unwrap_err(),
            SynthesisError::AnswerMismatch { .. }
        ));
    }

    #[test]
    fn answer_gate_tolerates_article_drift() {
        let out = exemplar_output().replace("@@Spanish@@", "@@The Spanish.@@");
        let backend = ScriptedBackend::from_turns(vec![out]);
        let mut s = backend.session("x1").unwrap();
        assert!(synthesize_rationale(&exemplar_instance(), &mut *s).is_ok());
    }

    fn corpora() -> SynthesisConfig {
        SynthesisConfig {
            generator_ids: ["x1", "x2"].iter().map(|s| s.to_string()).collect(),
            critic_ids: ["c1", "c2"].iter().map(|s| s.to_string()).collect(),
            tau: OutcomeScore::new(4).unwrap(),
        }
    }

    #[test]
    fn critic_records_count_and_histogram() {
        let traj = parse_trajectory(&figure_text(), &RewardConfig::fine()).unwrap();
        let batch = build_critic_records("c1", &traj, &corpora()).unwrap();
        // 3 retrieval + 3 reasoning + 1 outcome.
        assert_eq!(batch.records.len(), 7);
        assert_eq!(batch.counts.retrieval["[Partially Relevant]"], 3);
        assert_eq!(batch.counts.support["[Fully supported]"], 3);
        assert_eq!(batch.counts.outcome[&4], 1);
        // Prompts embed the step question and evidence.
        assert!(batch.records[0].text().contains("The Family Stone"));
    }

    #[test]
    fn critic_records_enforce_corpus_assignment() {
        let traj = parse_trajectory(&figure_text(), &RewardConfig::fine()).unwrap();
        let err = build_critic_records("x1", &traj, &corpora()).unwrap_err();
        assert!(matches!(err, SynthesisError::WrongCorpus(id) if id == "x1"));
        let mut overlapping = corpora();
        overlapping.critic_ids.insert("x1".into());
        let err = build_critic_records("c1", &traj, &overlapping).unwrap_err();
        assert!(matches!(err, SynthesisError::CorpusOverlap(id) if id == "x1"));
    }

    fn unlabeled_figure() -> String {
        let mut t = parse_trajectory(&figure_text(), &RewardConfig::fine()).unwrap();
        for s in &mut t.steps {
            s.retrieval_label = None;
            s.support_label = None;
            s.r_retr = None;
            s.r_reas = None;
        }
        t.outcome = None;
        render_prefix(&t, RenderUpto::End)
    }

    #[test]
    fn annotation_reconstructs_the_figure_labels() {
        let critic = ScriptedBackend::from_turns(vec![
            "Rating: [Partially Relevant]\nExplanation: e.",
            "Rating: [Fully supported]\nExplanation: e.",
            "Rating: [Partially Relevant]\nExplanation: e.",
            "Rating: [Fully supported]\nExplanation: e.",
            "Rating: [Partially Relevant]\nExplanation: e.",
            "Rating: [Fully supported]\nExplanation: e.",
            "Rating: [4]\nExplanation: e.",
        ]);
        let mut s = critic.session("fig").unwrap();
        let record = annotate_self_critique(&unlabeled_figure(), "fig", &mut *s).unwrap();
        assert_eq!(record.text(), figure_text());
        assert_eq!(record.outcome.unwrap().value(), 4);
        let back = parse_trajectory(&record.text(), &RewardConfig::fine()).unwrap();
        assert_eq!(back.r_c, Some(4.5));
    }

    #[test]
    fn annotation_rejects_already_labeled_input() {
        let critic = ScriptedBackend::from_turns(vec!["unused"]);
        let mut s = critic.session("fig").unwrap();
        assert!(matches!(
            annotate_self_critique(&figure_text(), "fig", &mut *s).unwrap_err(),
            SynthesisError::InvalidInput(_)
        ));
    }

    #[test]
    fn annotation_round_trips_structure() {
        let critic = ScriptedBackend::from_turns(vec![
            "Rating: [Relevant]",
            "Rating: [Not supported]",
            "Rating: [Irrelevant]",
            "Rating: [Partially supported]",
            "Rating: [Relevant]",
            "Rating: [Fully supported]",
            "Rating: [2]",
        ]);
        let mut s = critic.session("fig").unwrap();
        let record = annotate_self_critique(&unlabeled_figure(), "fig", &mut *s).unwrap();
        let back = parse_trajectory(&record.text(), &RewardConfig::fine()).unwrap();
        assert_eq!(back.steps.len(), 3);
        assert_eq!(back.steps[0].retrieval_label, Some(RetrievalLabel::Relevant));
        assert_eq!(back.steps[0].support_label, Some(SupportLabel::NotSupported));
        assert_eq!(back.outcome.unwrap().value(), 2);
    }

    fn rec(id: &str, outcome: Option<u8>) -> TrainingRecord {
        TrainingRecord {
            instance_id: id.into(),
            segments: vec![Segment {
                role: SegmentRole::Generation,
                text: "g".into(),
            }],
            provenance: Provenance::Phase3,
            outcome: outcome.map(|v| OutcomeScore::new(v).unwrap()),
        }
    }

    #[test]
    fn filter_keeps_exactly_threshold_and_above() {
        let records = vec![
            rec("a", Some(5)),
            rec("b", Some(4)),
            rec("c", Some(3)),
            rec("d", Some(2)),
            rec("e", None),
        ];
        let report = filter_self_improvement(records, OutcomeScore::new(4).unwrap());
        let kept: Vec<&str> = report.kept.iter().map(|r| r.instance_id.as_str()).collect();
        assert_eq!(kept, vec!["a", "b"]);
        assert_eq!(report.dropped_below_threshold, 2);
        assert_eq!(report.dropped_missing_outcome, 1);
        assert!(report
            .kept
            .iter()
            .all(|r| r.provenance == Provenance::SelfImprovement));
    }

    #[test]
    fn filter_with_minimum_threshold_keeps_all_scored() {
        let records = vec![rec("a", Some(1)), rec("b", Some(5))];
        let report = filter_self_improvement(records, OutcomeScore::new(1).unwrap());
        assert_eq!(report.kept.len(), 2);
        assert_eq!(report.dropped_below_threshold, 0);
    }
}
