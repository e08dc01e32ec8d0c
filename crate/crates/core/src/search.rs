//! Iteration-level beam search over reasoning trajectories.
//!
//! The engine drives the generation backend through the trajectory surface
//! language one iteration at a time. Each iteration of an active candidate
//! expands into up to `b_q x d_b` children: `b_q` sampled sub-question
//! continuations, each paired with the top `d_b` retrieved documents. The
//! children are scored by cumulative process reward and the best `k` stay in
//! the beam; candidates that produce a final answer leave the beam for the
//! finished pool, from which the final trajectory is selected.

use crate::accounting::EfficiencyRecord;
use crate::backend::{
    critique_outcome, critique_reasoning, critique_retrieval, BackendError, CriticError,
    FinishReason, GenBackend, GenRequest, GenResponse, GenSession,
};
use crate::markup::{
    escape_doc, events_to_trajectory, parse_partial, render_prefix, Needs, RenderUpto, HDR_ATOMIC,
    HDR_NON_ATOMIC, PARA_CLOSE, PARA_OPEN,
};
use crate::retrieval::{Retrieve, RetrievalError, RetrievalHit};
use crate::trajectory::{
    final_select, top_k_select, RewardConfig, RewardError, Trajectory, TrajectoryStatus,
};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// How candidates are explored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Iteration-level beam search guided by cumulative process rewards.
    Beam,
    /// Single path with critique labels but no branching (beam with
    /// k = b_q = d_b = 1).
    GuidedGreedy,
    /// Single path with no critique at all; the no-reward baseline.
    PlainGreedy,
}

/// Where critique labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// The generator emits quality labels interleaved with its reasoning.
    Inline,
    /// A separate critic backend is prompted for each judgment.
    Separated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Beam width: candidates kept per iteration.
    pub k: usize,
    /// Sub-question samples per candidate per iteration.
    pub b_q: usize,
    /// Document branches per sampled sub-question.
    pub d_b: usize,
    /// Documents requested per retrieval call.
    pub n_docs: usize,
    /// Maximum reasoning iterations before the run gives up.
    pub max_iterations: usize,
    /// Token budget per generation call.
    pub max_tokens: u32,
    pub mode: SearchMode,
    pub critic_mode: CriticMode,
    pub reward: RewardConfig,
    /// Sampling temperature for sub-question exploration.
    pub temperature: f64,
    /// Base seed; per-call seeds are derived from it.
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 2,
            b_q: 2,
            d_b: 2,
            n_docs: 5,
            max_iterations: 8,
            max_tokens: 1024,
            mode: SearchMode::Beam,
            critic_mode: CriticMode::Inline,
            reward: RewardConfig::default(),
            temperature: 0.7,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(SearchError::InvalidConfig(what.to_string()))
            }
        };
        check(self.k >= 1, "k must be >= 1")?;
        check(self.b_q >= 1, "b_q must be >= 1")?;
        check(self.d_b >= 1, "d_b must be >= 1")?;
        check(self.n_docs >= 1, "n_docs must be >= 1")?;
        check(self.d_b <= self.n_docs, "d_b must not exceed n_docs")?;
        check(self.max_iterations >= 1, "max_iterations must be >= 1")?;
        check(self.max_tokens >= 1, "max_tokens must be >= 1")?;
        check(
            self.temperature.is_finite() && self.temperature >= 0.0,
            "temperature must be finite and >= 0",
        )?;
        Ok(())
    }

    /// The configuration actually executed: greedy modes collapse the beam.
    pub fn effective(&self) -> SearchConfig {
        let mut cfg = self.clone();
        if matches!(self.mode, SearchMode::GuidedGreedy | SearchMode::PlainGreedy) {
            cfg.k = 1;
            cfg.b_q = 1;
            cfg.d_b = 1;
        }
        cfg
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("no finished trajectory after {iterations} iterations")]
    Unanswered { iterations: u64 },
}

/// Result of one engine run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// The selected trajectory.
    pub chosen: Trajectory,
    /// Every trajectory that reached a final answer, in birth order.
    pub finished: Vec<Trajectory>,
    /// Branches abandoned on malformed output, kept for audit.
    pub failed: Vec<Trajectory>,
    /// Run-level cost ledger (counts every call exactly once).
    pub accounting: EfficiencyRecord,
}

/// The orchestration engine: a generator backend, an optional critic
/// backend (required in separated mode), and a retriever.
pub struct Engine<'a> {
    pub cfg: SearchConfig,
    pub generator: &'a dyn GenBackend,
    pub critic: Option<&'a dyn GenBackend>,
    pub retriever: &'a dyn Retrieve,
}

impl Engine<'_> {
    pub fn run(&self, question: &str) -> Result<SearchOutcome, SearchError> {
        self.cfg.validate()?;
        let cfg = self.cfg.effective();
        let wants_critic =
            cfg.critic_mode == CriticMode::Separated && cfg.mode != SearchMode::PlainGreedy;
        let critic = match (wants_critic, self.critic) {
            (true, Some(backend)) => Some(backend.session(question)?),
            (true, None) => {
                return Err(SearchError::InvalidConfig(
                    "separated critic mode requires a critic backend".into(),
                ))
            }
            (false, _) => None,
        };
        let mut run = Run {
            reward: cfg.reward.clone(),
            plain: cfg.mode == SearchMode::PlainGreedy,
            separated: wants_critic,
            cfg,
            retriever: self.retriever,
            gen: self.generator.session(question)?,
            critic,
            next_birth: 1,
            seed_counter: 0,
            ledger: EfficiencyRecord::default(),
            finished: Vec::new(),
            failed: Vec::new(),
        };
        run.search(question)
    }
}

struct Run<'e> {
    cfg: SearchConfig,
    reward: RewardConfig,
    plain: bool,
    separated: bool,
    retriever: &'e dyn Retrieve,
    gen: Box<dyn GenSession + 'e>,
    critic: Option<Box<dyn GenSession + 'e>>,
    next_birth: u64,
    seed_counter: u64,
    ledger: EfficiencyRecord,
    finished: Vec<Trajectory>,
    failed: Vec<Trajectory>,
}

impl Run<'_> {
    fn search(&mut self, question: &str) -> Result<SearchOutcome, SearchError> {
        let mut root = Trajectory::new(question, 0);
        if self.plain {
            root.r_c = None;
        }
        let mut actives = vec![root];
        for _ in 0..self.cfg.max_iterations {
            if actives.is_empty() {
                break;
            }
            self.ledger.iterations += 1;
            // Expansion order is part of the contract: candidates expand in
            // birth order so scripted runs are reproducible.
            actives.sort_by_key(|t| t.birth_index);
            let mut children = Vec::new();
            for parent in &actives {
                self.expand(parent, &mut children)?;
            }
            actives = top_k_select(&children, self.cfg.k);
        }
        if self.finished.is_empty() {
            return Err(SearchError::Unanswered {
                iterations: self.ledger.iterations,
            });
        }
        let chosen = final_select(&self.finished, &self.reward)?.clone();
        Ok(SearchOutcome {
            chosen,
            finished: std::mem::take(&mut self.finished),
            failed: std::mem::take(&mut self.failed),
            accounting: self.ledger.clone(),
        })
    }

    fn generate(&mut self, prefix: &str, stops: &[&str]) -> Result<GenResponse, SearchError> {
        let mut req = GenRequest::new(prefix).with_stops(stops);
        req.temperature = self.cfg.temperature;
        req.max_tokens = self.cfg.max_tokens;
        req.seed = Some(self.cfg.seed.wrapping_add(self.seed_counter));
        self.seed_counter += 1;
        let resp = self.gen.complete(&req)?;
        self.ledger.add_usage(
            resp.usage.prompt_tokens,
            resp.usage.completion_tokens,
            resp.elapsed_us,
        );
        Ok(resp)
    }

    fn alloc_birth(&mut self) -> u64 {
        let b = self.next_birth;
        self.next_birth += 1;
        b
    }

    /// Record a contained branch failure (malformed model output).
    fn fail_branch(&mut self, parent: &Trajectory, why: String) {
        let mut t = parent.clone();
        t.birth_index = self.alloc_birth();
        t.status = TrajectoryStatus::Failed;
        t.failure = Some(why);
        self.failed.push(t);
    }

    /// Expand one active candidate for one iteration.
    fn expand(
        &mut self,
        parent: &Trajectory,
        children: &mut Vec<Trajectory>,
    ) -> Result<(), SearchError> {
        let prefix = render_prefix(parent, RenderUpto::Steps(parent.steps.len()));

        // Phase A: sample sub-question continuations. Identical samples are
        // deduplicated, so a candidate yields *up to* b_q x d_b children.
        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for _ in 0..self.cfg.b_q {
            let resp = self.generate(&prefix, &[PARA_OPEN])?;
            if seen.insert(resp.text.clone()) {
                samples.push(resp);
            }
        }

        for sample in samples {
            let a_cost = cost_of(&sample);
            let hit_paragraph = matches!(&sample.finish, FinishReason::Stop(s) if s == PARA_OPEN);
            if !hit_paragraph {
                // No retrieval trigger: either a direct final answer or a stall.
                let text = format!("{prefix}{}", sample.text);
                self.build_child(parent, &text, None, a_cost, children)?;
                continue;
            }

            // Phase B: inject each of the top d_b documents and continue
            // generation to the end of the iteration.
            let text2 = format!("{prefix}{}{PARA_OPEN}", sample.text);
            let query = match parse_partial(&text2) {
                Ok(pp) => match pp.needs {
                    Needs::Retrieval(q) => q,
                    other => {
                        self.fail_branch(parent, format!("expected retrieval trigger, got {other:?}"));
                        continue;
                    }
                },
                Err(e) => {
                    self.fail_branch(parent, e.to_string());
                    continue;
                }
            };
            let hits = self.retriever.search(&query, self.cfg.n_docs)?;
            self.ledger.retrieval_calls += 1;
            if hits.is_empty() {
                self.fail_branch(parent, format!("no documents for query {query:?}"));
                continue;
            }
            for hit in hits.iter().take(self.cfg.d_b) {
                let doc = self
                    .retriever
                    .doc_text(&hit.doc_id)
                    .ok_or_else(|| RetrievalError::UnknownDocId(hit.doc_id.clone()))?;
                let text3 = format!("{text2}{}{PARA_CLOSE}\n", escape_doc(&doc));
                let resp = self.generate(&text3, &[HDR_NON_ATOMIC, HDR_ATOMIC])?;
                let text4 = format!("{text3}{}", resp.text);
                let mut cost = a_cost.clone();
                cost.retrieval_calls = 1;
                cost.prompt_tokens += resp.usage.prompt_tokens;
                cost.completion_tokens += resp.usage.completion_tokens;
                cost.wall_time_us += resp.elapsed_us;
                self.build_child(parent, &text4, Some((hit, &hits)), cost, children)?;
            }
        }
        Ok(())
    }

    /// Parse the expanded surface text and graft its new steps onto a clone
    /// of the parent. Contained parse/critic failures go to the failed pool;
    /// infrastructure errors propagate.
    fn build_child(
        &mut self,
        parent: &Trajectory,
        text: &str,
        injected: Option<(&RetrievalHit, &[RetrievalHit])>,
        cost: EfficiencyRecord,
        children: &mut Vec<Trajectory>,
    ) -> Result<(), SearchError> {
        let pp = match parse_partial(text) {
            Ok(pp) => pp,
            Err(e) => {
                self.fail_branch(parent, e.to_string());
                return Ok(());
            }
        };
        let parsed = events_to_trajectory(&pp.events, &self.reward);
        if parsed.steps.len() <= parent.steps.len() && parsed.answer.is_none() {
            self.fail_branch(parent, "iteration produced no step and no answer".into());
            return Ok(());
        }

        let mut child = parent.clone();
        child.birth_index = self.alloc_birth();
        child.failure = None;
        child.accounting.iterations += (parsed.steps.len() - parent.steps.len()) as u64;
        child.accounting.retrieval_calls += cost.retrieval_calls;
        child
            .accounting
            .add_usage(cost.prompt_tokens, cost.completion_tokens, cost.wall_time_us);

        for (i, step) in parsed.steps[parent.steps.len()..].iter().enumerate() {
            let mut step = step.clone();
            step.index = child.steps.len();
            if i == 0 {
                if let Some((hit, candidates)) = injected {
                    step.doc.doc_id = hit.doc_id.clone();
                    step.candidates = candidates.to_vec();
                }
            }
            if !self.plain {
                if self.separated {
                    if let Err(e) = self.critique_step(&child, &mut step) {
                        match e {
                            CriticError::Backend(b) => return Err(b.into()),
                            other => {
                                self.fail_branch(parent, other.to_string());
                                return Ok(());
                            }
                        }
                    }
                }
                step.apply_rewards(&self.reward);
                let inc = step.r_retr.unwrap_or(0.0) + step.r_reas.unwrap_or(0.0);
                child.r_c = Some(child.r_c.unwrap_or(0.0) + inc);
            }
            child.steps.push(step);
        }

        child.answer = parsed.answer;
        child.outcome = parsed.outcome;
        if child.answer.is_some() {
            child.status = TrajectoryStatus::Finished;
            if self.separated && child.outcome.is_none() {
                let rendered = render_prefix(&child, RenderUpto::End);
                match self.critique_final(&child.question, &rendered) {
                    Ok(score) => child.outcome = Some(score),
                    Err(CriticError::Backend(b)) => return Err(b.into()),
                    Err(other) => {
                        self.fail_branch(parent, other.to_string());
                        return Ok(());
                    }
                }
            }
            self.finished.push(child);
        } else {
            child.status = TrajectoryStatus::Active;
            children.push(child);
        }
        Ok(())
    }

    /// Fill in missing critique labels for one step via the critic backend.
    fn critique_step(
        &mut self,
        child: &Trajectory,
        step: &mut crate::trajectory::ReasoningStep,
    ) -> Result<(), CriticError> {
        let question = step
            .sub_question
            .clone()
            .or_else(|| {
                child
                    .steps
                    .iter()
                    .rev()
                    .find_map(|s| s.remaining_question.clone())
            })
            .unwrap_or_else(|| child.question.clone());
        let session = self.critic.as_mut().expect("separated mode has a critic");
        let mut metered = Metered {
            inner: session.as_mut(),
            used: EfficiencyRecord::default(),
        };
        if step.retrieval_label.is_none() && !step.doc.text.trim().is_empty() {
            let (label, _) = critique_retrieval(&mut metered, &question, &step.doc.text)?;
            step.retrieval_label = Some(label);
        }
        if step.support_label.is_none() && !step.reasoning.trim().is_empty() {
            let (label, _) =
                critique_reasoning(&mut metered, &question, &step.doc.text, &step.reasoning)?;
            step.support_label = Some(label);
        }
        let used = metered.used;
        self.ledger
            .add_usage(used.prompt_tokens, used.completion_tokens, used.wall_time_us);
        Ok(())
    }

    fn critique_final(
        &mut self,
        question: &str,
        rendered: &str,
    ) -> Result<crate::trajectory::OutcomeScore, CriticError> {
        let session = self.critic.as_mut().expect("separated mode has a critic");
        let mut metered = Metered {
            inner: session.as_mut(),
            used: EfficiencyRecord::default(),
        };
        let score = critique_outcome(&mut metered, question, rendered)?;
        let used = metered.used;
        self.ledger
            .add_usage(used.prompt_tokens, used.completion_tokens, used.wall_time_us);
        Ok(score)
    }
}

fn cost_of(resp: &GenResponse) -> EfficiencyRecord {
    EfficiencyRecord {
        iterations: 0,
        retrieval_calls: 0,
        prompt_tokens: resp.usage.prompt_tokens,
        completion_tokens: resp.usage.completion_tokens,
        wall_time_us: resp.elapsed_us,
    }
}

/// Usage-tallying adapter around a critic session.
struct Metered<'a> {
    inner: &'a mut dyn GenSession,
    used: EfficiencyRecord,
}

impl GenSession for Metered<'_> {
    fn complete(&mut self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        let resp = self.inner.complete(req)?;
        self.used.add_usage(
            resp.usage.prompt_tokens,
            resp.usage.completion_tokens,
            resp.elapsed_us,
        );
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::trajectory::{RetrievalLabel, SelectionStrategy, SupportLabel};

    /// Retrieval stub: every query returns the same ranked doc list.
    struct FixedRetriever {
        docs: Vec<(&'static str, &'static str)>,
    }

    impl Retrieve for FixedRetriever {
        fn search(&self, _query: &str, top_n: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
            Ok(self
                .docs
                .iter()
                .take(top_n)
                .enumerate()
                .map(|(i, (id, _))| RetrievalHit::sparse(*id, 10.0 - i as f64))
                .collect())
        }

        fn doc_text(&self, doc_id: &str) -> Option<String> {
            self.docs
                .iter()
                .find(|(id, _)| *id == doc_id)
                .map(|(_, text)| text.to_string())
        }
    }

    fn one_doc() -> FixedRetriever {
        FixedRetriever {
            docs: vec![("d1", "Paris\nParis is the capital of France.")],
        }
    }

    fn greedy(mode: SearchMode, critic_mode: CriticMode) -> SearchConfig {
        SearchConfig {
            mode,
            critic_mode,
            max_iterations: 4,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn plain_greedy_answers_without_rewards() {
        let backend = ScriptedBackend::from_turns(vec![
            "[Atomic Question]\n<paragraph>",
            "Reasoning: The capital of France is Paris.\n[Final Answer] @@Paris@@\n",
        ]);
        let retriever = one_doc();
        let engine = Engine {
            cfg: greedy(SearchMode::PlainGreedy, CriticMode::Inline),
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        let out = engine.run("What is the capital of France?").unwrap();
        assert_eq!(out.chosen.answer.as_deref(), Some("Paris"));
        assert_eq!(out.chosen.r_c, None);
        assert_eq!(out.chosen.steps.len(), 1);
        assert_eq!(out.chosen.steps[0].doc.doc_id, "d1");
        assert!(out.chosen.steps[0].retrieval_label.is_none());
        assert_eq!(out.accounting.retrieval_calls, 1);
        assert_eq!(out.accounting.iterations, 1);
    }

    #[test]
    fn guided_greedy_inline_two_iterations() {
        let backend = ScriptedBackend::from_turns(vec![
            // Iteration 1, phase A.
            "[Non-Atomic Question]\n<sub-question> Who directed the film?\n<paragraph>",
            // Iteration 1, phase B: reasoning plus the next header (cut by stop).
            "Retrieval Quality: [Relevant]\nReasoning: The director is X.\n</sub-question> Reasoning Quality: [Fully supported]\n[Remaining Question] Where was X born?\n[Non-Atomic Question] junk",
            // Iteration 2, phase A.
            "[Atomic Question]\n<paragraph>",
            // Iteration 2, phase B: finishes the trajectory.
            "Retrieval Quality: [Partially Relevant]\nReasoning: X was born in Paris.\nReasoning Quality: [Fully supported]\n[Final Answer] @@Paris@@\nOverall Reasoning Quality: [4]\n",
        ]);
        let retriever = one_doc();
        let engine = Engine {
            cfg: greedy(SearchMode::GuidedGreedy, CriticMode::Inline),
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        let out = engine.run("Where was the director of the film born?").unwrap();
        let t = &out.chosen;
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.answer.as_deref(), Some("Paris"));
        assert_eq!(t.outcome.unwrap().value(), 4);
        // 2.0 (Relevant + Fully) + 1.5 (Partially + Fully) = 3.5.
        assert_eq!(t.r_c, Some(3.5));
        assert_eq!(
            t.steps[0].sub_question.as_deref(),
            Some("Who directed the film?")
        );
        assert_eq!(
            t.steps[0].remaining_question.as_deref(),
            Some("Where was X born?")
        );
        assert_eq!(t.steps[1].retrieval_label, Some(RetrievalLabel::PartiallyRelevant));
        assert_eq!(out.accounting.retrieval_calls, 2);
    }

    #[test]
    fn separated_critic_fills_labels_and_outcome() {
        let backend = ScriptedBackend::from_turns(vec![
            "[Atomic Question]\n<paragraph>",
            "Reasoning: The capital of France is Paris.\n[Final Answer] @@Paris@@\n",
        ]);
        let critic = ScriptedBackend::from_turns(vec![
            "Rating: [Relevant]\nExplanation: on point.",
            "Rating: [Fully supported]\nExplanation: direct.",
            "Rating: [5]\nExplanation: clean.",
        ]);
        let retriever = one_doc();
        let engine = Engine {
            cfg: greedy(SearchMode::GuidedGreedy, CriticMode::Separated),
            generator: &backend,
            critic: Some(&critic),
            retriever: &retriever,
        };
        let out = engine.run("What is the capital of France?").unwrap();
        let t = &out.chosen;
        assert_eq!(t.steps[0].retrieval_label, Some(RetrievalLabel::Relevant));
        assert_eq!(t.steps[0].support_label, Some(SupportLabel::FullySupported));
        assert_eq!(t.r_c, Some(2.0));
        assert_eq!(t.outcome.unwrap().value(), 5);
        // Critic tokens are charged to the run ledger.
        assert!(out.accounting.prompt_tokens > 100);
    }

    #[test]
    fn separated_mode_without_critic_backend_is_rejected() {
        let backend = ScriptedBackend::from_turns(vec!["x"]);
        let retriever = one_doc();
        let engine = Engine {
            cfg: greedy(SearchMode::GuidedGreedy, CriticMode::Separated),
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        assert!(matches!(
            engine.run("q").unwrap_err(),
            SearchError::InvalidConfig(_)
        ));
    }

    #[test]
    fn beam_keeps_higher_reward_branch() {
        // b_q = 2, d_b = 1, k = 1: two sampled sub-questions; the second
        // earns a higher process reward and must win the beam slot; both
        // finish on the next iteration.
        let backend = ScriptedBackend::from_turns(vec![
            // Iteration 1, phase A: two samples.
            "[Non-Atomic Question]\n<sub-question> weak?\n<paragraph>",
            "[Non-Atomic Question]\n<sub-question> strong?\n<paragraph>",
            // Phase B for sample 1: low reward.
            "Retrieval Quality: [Irrelevant]\nReasoning: guesswork.\n</sub-question> Reasoning Quality: [Not supported]\n[Remaining Question] rest?\n",
            // Phase B for sample 2: high reward.
            "Retrieval Quality: [Relevant]\nReasoning: solid.\n</sub-question> Reasoning Quality: [Fully supported]\n[Remaining Question] rest?\n",
            // Iteration 2 expands only the surviving candidate; the two
            // samples are textually identical, so they dedup to one branch.
            "[Atomic Question]\n<paragraph>",
            "[Atomic Question]\n<paragraph>",
            "Retrieval Quality: [Relevant]\nReasoning: done.\nReasoning Quality: [Fully supported]\n[Final Answer] @@win@@\nOverall Reasoning Quality: [5]\n",
        ]);
        let retriever = one_doc();
        let cfg = SearchConfig {
            k: 1,
            b_q: 2,
            d_b: 1,
            max_iterations: 3,
            ..SearchConfig::default()
        };
        let engine = Engine {
            cfg,
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        let out = engine.run("q?").unwrap();
        let t = &out.chosen;
        assert_eq!(t.answer.as_deref(), Some("win"));
        assert_eq!(t.steps[0].sub_question.as_deref(), Some("strong?"));
        assert_eq!(t.r_c, Some(4.0));
        assert_eq!(out.finished.len(), 1);
    }

    #[test]
    fn doc_branching_expands_both_documents() {
        // d_b = 2: one sampled sub-question, two document branches, both
        // finishing with different rewards; cumulative-process selection
        // picks the higher one.
        let backend = ScriptedBackend::from_turns(vec![
            "[Atomic Question]\n<paragraph>",
            // Branch for doc 1.
            "Retrieval Quality: [Partially Relevant]\nReasoning: hmm.\nReasoning Quality: [Partially supported]\n[Final Answer] @@weak@@\nOverall Reasoning Quality: [3]\n",
            // Branch for doc 2.
            "Retrieval Quality: [Relevant]\nReasoning: clear.\nReasoning Quality: [Fully supported]\n[Final Answer] @@strong@@\nOverall Reasoning Quality: [5]\n",
        ]);
        let retriever = FixedRetriever {
            docs: vec![("a", "A\nalpha."), ("b", "B\nbeta.")],
        };
        let cfg = SearchConfig {
            k: 2,
            b_q: 1,
            d_b: 2,
            max_iterations: 2,
            ..SearchConfig::default()
        };
        let engine = Engine {
            cfg,
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        let out = engine.run("q?").unwrap();
        assert_eq!(out.finished.len(), 2);
        assert_eq!(out.chosen.answer.as_deref(), Some("strong"));
        assert_eq!(out.chosen.steps[0].doc.doc_id, "b");
        assert_eq!(out.chosen.r_c, Some(2.0));
        // Both finished trajectories recorded the full candidate list.
        assert_eq!(out.finished[0].steps[0].candidates.len(), 2);
    }

    #[test]
    fn outcome_selection_overrides_process_reward() {
        let backend = ScriptedBackend::from_turns(vec![
            "[Atomic Question]\n<paragraph>",
            "Retrieval Quality: [Relevant]\nReasoning: a.\nReasoning Quality: [Fully supported]\n[Final Answer] @@high-process@@\nOverall Reasoning Quality: [2]\n",
            "Retrieval Quality: [Irrelevant]\nReasoning: b.\nReasoning Quality: [Not supported]\n[Final Answer] @@high-outcome@@\nOverall Reasoning Quality: [5]\n",
        ]);
        let retriever = FixedRetriever {
            docs: vec![("a", "A\nalpha."), ("b", "B\nbeta.")],
        };
        let mut cfg = SearchConfig {
            k: 2,
            b_q: 1,
            d_b: 2,
            max_iterations: 2,
            ..SearchConfig::default()
        };
        cfg.reward.selection = SelectionStrategy::Outcome;
        let engine = Engine {
            cfg,
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        let out = engine.run("q?").unwrap();
        assert_eq!(out.chosen.answer.as_deref(), Some("high-outcome"));
    }

    #[test]
    fn malformed_branch_is_contained() {
        // First phase-B continuation is garbage; the second succeeds.
        let backend = ScriptedBackend::from_turns(vec![
            "[Atomic Question]\n<paragraph>",
            "complete nonsense with no markers at all",
            "Reasoning: fine.\n[Final Answer] @@ok@@\n",
        ]);
        let retriever = FixedRetriever {
            docs: vec![("a", "A\nalpha."), ("b", "B\nbeta.")],
        };
        let cfg = SearchConfig {
            k: 2,
            b_q: 1,
            d_b: 2,
            max_iterations: 2,
            mode: SearchMode::Beam,
            critic_mode: CriticMode::Inline,
            ..SearchConfig::default()
        };
        let engine = Engine {
            cfg,
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        let out = engine.run("q?").unwrap();
        assert_eq!(out.chosen.answer.as_deref(), Some("ok"));
        assert_eq!(out.failed.len(), 1);
        assert!(out.failed[0].failure.is_some());
    }

    #[test]
    fn unanswered_when_budget_exhausted() {
        // The model never emits a final answer.
        let backend = ScriptedBackend::from_turns(vec![
            "[Non-Atomic Question]\n<sub-question> s?\n<paragraph>",
            "Reasoning: r.\n</sub-question>\n[Remaining Question] rest?\n",
            "[Non-Atomic Question]\n<sub-question> s2?\n<paragraph>",
            "Reasoning: r2.\n</sub-question>\n[Remaining Question] rest2?\n",
        ]);
        let retriever = one_doc();
        let cfg = SearchConfig {
            max_iterations: 2,
            mode: SearchMode::GuidedGreedy,
            ..SearchConfig::default()
        };
        let engine = Engine {
            cfg,
            generator: &backend,
            critic: None,
            retriever: &retriever,
        };
        assert!(matches!(
            engine.run("q?").unwrap_err(),
            SearchError::Unanswered { iterations: 2 }
        ));
    }

    #[test]
    fn invalid_config_rejected_before_any_call() {
        let backend = ScriptedBackend::from_turns(Vec::<String>::new());
        let retriever = one_doc();
        for bad in [
            SearchConfig {
                k: 0,
                ..SearchConfig::default()
            },
            SearchConfig {
                d_b: 9,
                n_docs: 5,
                ..SearchConfig::default()
            },
            SearchConfig {
                temperature: f64::NAN,
                ..SearchConfig::default()
            },
        ] {
            let engine = Engine {
                cfg: bad,
                generator: &backend,
                critic: None,
                retriever: &retriever,
            };
            assert!(matches!(
                engine.run("q").unwrap_err(),
                SearchError::InvalidConfig(_)
            ));
        }
    }

    #[test]
    fn greedy_modes_collapse_the_beam() {
        let cfg = SearchConfig {
            mode: SearchMode::GuidedGreedy,
            ..SearchConfig::default()
        };
        let eff = cfg.effective();
        assert_eq!((eff.k, eff.b_q, eff.d_b), (1, 1, 1));
        let beam = SearchConfig::default().effective();
        assert_eq!((beam.k, beam.b_q, beam.d_b), (2, 2, 2));
    }
}
