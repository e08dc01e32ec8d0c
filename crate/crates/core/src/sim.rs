//! Deterministic simulation worlds for exercising the search engine without
//! a live model: a closure-driven mock backend and a planted-path multi-hop
//! environment with controllable critique noise.

use crate::backend::{
    approx_tokens, truncate_mock, BackendError, GenBackend, GenRequest, GenResponse, GenSession,
    Usage,
};
use crate::markup::{events_to_trajectory, parse_partial, PARA_CLOSE, PARA_OPEN};
use crate::retrieval::{Retrieve, RetrievalError, RetrievalHit};
use crate::trajectory::{RetrievalLabel, RewardConfig, SupportLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Mock backend that computes each completion from the request prefix.
///
/// The callback receives the prefix and how many times this session has
/// already been called with that exact prefix, so repeated sampling from one
/// decision point can cycle through alternatives. Stop strings and the token
/// budget are applied to the callback's output exactly as in the scripted
/// mock; attributed wall time is zero.
pub struct FnBackend<F> {
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&str, usize) -> String + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnBackend { f }
    }
}

impl<F> GenBackend for FnBackend<F>
where
    F: Fn(&str, usize) -> String + Send + Sync,
{
    fn session(&self, _run_key: &str) -> Result<Box<dyn GenSession + '_>, BackendError> {
        Ok(Box::new(FnSession {
            f: &self.f,
            counts: std::collections::HashMap::new(),
        }))
    }
}

struct FnSession<'a, F> {
    f: &'a F,
    counts: std::collections::HashMap<String, usize>,
}

impl<F> GenSession for FnSession<'_, F>
where
    F: Fn(&str, usize) -> String + Send + Sync,
{
    fn complete(&mut self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        req.validate()?;
        let count = self.counts.entry(req.prefix.clone()).or_insert(0);
        let full = (self.f)(&req.prefix, *count);
        *count += 1;
        let (text, finish) = truncate_mock(&full, req);
        Ok(GenResponse {
            usage: Usage {
                prompt_tokens: approx_tokens(&req.prefix),
                completion_tokens: approx_tokens(&text),
            },
            text,
            finish,
            elapsed_us: 0,
        })
    }
}

/// A synthetic multi-hop environment with one planted correct path.
///
/// Every question takes `depth` reasoning hops. At each hop the generator
/// offers one on-path sub-question and `n_bad_subq` distractors in a
/// seed-determined order, and the retriever ranks the on-path document first
/// or second with equal probability. The final answer is the gold answer
/// exactly when every hop used the on-path sub-question *and* the on-path
/// document, so single-path strategies succeed only when every coin flip
/// lands their way while wider searches can recover.
///
/// Inline critique labels are correct with probability `1 - label_noise`;
/// the overall outcome score is replaced by a uniform draw with probability
/// `outcome_noise`. Making the outcome noisier than the process labels makes
/// cumulative-process selection the strongest signal, outcome selection
/// weaker, and random selection weakest.
#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub depth: usize,
    pub n_bad_subq: usize,
    pub n_bad_docs: usize,
    pub label_noise: f64,
    pub outcome_noise: f64,
    pub seed: u64,
}

impl Default for PlantedWorld {
    fn default() -> Self {
        PlantedWorld {
            depth: 3,
            n_bad_subq: 1,
            n_bad_docs: 4,
            label_noise: 0.1,
            outcome_noise: 0.35,
            seed: 0,
        }
    }
}

pub const GOLD_ANSWER: &str = "gold";

impl PlantedWorld {
    pub fn question(&self, case: usize) -> String {
        format!("planted case {case} seed {}?", self.seed)
    }

    pub fn good_subq(&self, hop: usize) -> String {
        format!("hop {hop} correct continuation?")
    }

    pub fn bad_subq(&self, hop: usize, i: usize) -> String {
        format!("hop {hop} distractor {i}?")
    }

    pub fn good_doc_id(&self, hop: usize) -> String {
        format!("doc-{hop}-good")
    }

    pub fn bad_doc_id(&self, hop: usize, i: usize) -> String {
        format!("doc-{hop}-bad-{i}")
    }

    /// Seeded RNG keyed on arbitrary context strings, so every decision is a
    /// pure function of the world seed and its context.
    fn rng(&self, parts: &[&str]) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for p in parts {
            hasher.update([0xff]);
            hasher.update(p.as_bytes());
        }
        let digest = hasher.finalize();
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().unwrap()))
    }

    fn hop_of_query(&self, query: &str) -> Option<usize> {
        query.strip_prefix("hop ")?.split_whitespace().next()?.parse().ok()
    }

    fn noisy<T: Copy>(&self, rng: &mut ChaCha8Rng, correct: T, all: &[T]) -> T {
        if rng.gen::<f64>() < self.label_noise {
            all[rng.gen_range(0..all.len())]
        } else {
            correct
        }
    }

    pub fn retriever(&self) -> PlantedRetriever {
        PlantedRetriever {
            world: self.clone(),
        }
    }

    /// The generation backend for this world.
    pub fn backend(&self) -> FnBackend<impl Fn(&str, usize) -> String + Send + Sync> {
        let w = self.clone();
        FnBackend::new(move |prefix: &str, call: usize| w.generate(prefix, call))
    }

    fn generate(&self, prefix: &str, call: usize) -> String {
        let pp = parse_partial(prefix).expect("engine prefixes are well-formed");
        let traj = events_to_trajectory(&pp.events, &RewardConfig::fine());
        let phase_b = prefix.trim_end().ends_with(PARA_CLOSE);

        if phase_b {
            // Critique the just-injected document and reason over it.
            let hop = traj.steps.len() - 1;
            let step = &traj.steps[hop];
            let subq_good = step.sub_question.as_deref() == Some(self.good_subq(hop).as_str());
            let doc_good = step.doc.text.starts_with(&self.good_doc_id(hop));
            let good = subq_good && doc_good;
            let mut rng = self.rng(&["phase-b", prefix]);
            let retr = self.noisy(
                &mut rng,
                if doc_good {
                    RetrievalLabel::Relevant
                } else {
                    RetrievalLabel::Irrelevant
                },
                &RetrievalLabel::ALL,
            );
            let reas = self.noisy(
                &mut rng,
                if good {
                    SupportLabel::FullySupported
                } else {
                    SupportLabel::NotSupported
                },
                &SupportLabel::ALL,
            );
            let reasoning = if good {
                format!("From Document, hop {hop} is resolved.")
            } else {
                format!("From Document, hop {hop} stays unclear.")
            };
            return format!(
                "Retrieval Quality: {}\nReasoning: {}\n</sub-question> Reasoning Quality: {}\n[Remaining Question] {}\n",
                retr.surface(),
                reasoning,
                reas.surface(),
                if hop + 1 < self.depth {
                    format!("what remains after hop {}?", hop)
                } else {
                    "what is the final answer?".to_string()
                }
            );
        }

        let hop = traj.steps.len();
        if hop >= self.depth {
            // Every hop done: emit the answer this path earned.
            let goods = traj
                .steps
                .iter()
                .enumerate()
                .filter(|(i, s)| {
                    s.sub_question.as_deref() == Some(self.good_subq(*i).as_str())
                        && s.doc.text.starts_with(&self.good_doc_id(*i))
                })
                .count();
            let all_good = goods == self.depth;
            let answer = if all_good {
                GOLD_ANSWER.to_string()
            } else {
                format!("wrong after {goods} good hops")
            };
            let mut rng = self.rng(&["outcome", prefix]);
            let outcome = if rng.gen::<f64>() < self.outcome_noise {
                rng.gen_range(1..=5)
            } else if all_good {
                5
            } else {
                2
            };
            return format!(
                "[Final Answer] @@{answer}@@\nOverall Reasoning Quality: [{outcome}]\n"
            );
        }

        // Sample one of the sub-question options in a seed-determined order.
        let mut options = vec![self.good_subq(hop)];
        for i in 0..self.n_bad_subq {
            options.push(self.bad_subq(hop, i));
        }
        let mut rng = self.rng(&["options", prefix]);
        // Fisher-Yates with the keyed RNG: the order is call-independent.
        for i in (1..options.len()).rev() {
            options.swap(i, rng.gen_range(0..=i));
        }
        let pick = &options[call % options.len()];
        format!("[Non-Atomic Question]\n<sub-question> {pick}\n{PARA_OPEN}")
    }
}

/// Retriever for [`PlantedWorld`]: on-path queries surface the on-path
/// document at rank 0 or 1 (seed-determined coin flip); distractor queries
/// surface only off-path documents.
pub struct PlantedRetriever {
    world: PlantedWorld,
}

impl Retrieve for PlantedRetriever {
    fn search(&self, query: &str, top_n: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        let Some(hop) = self.world.hop_of_query(query) else {
            return Ok(Vec::new());
        };
        let mut ids: Vec<String> = (0..self.world.n_bad_docs)
            .map(|i| self.world.bad_doc_id(hop, i))
            .collect();
        if query == self.world.good_subq(hop) {
            let mut rng = self.world.rng(&["rank", query]);
            let rank = usize::from(rng.gen_bool(0.5));
            ids.insert(rank.min(ids.len()), self.world.good_doc_id(hop));
        }
        Ok(ids
            .into_iter()
            .take(top_n)
            .enumerate()
            .map(|(i, id)| RetrievalHit::sparse(id, 100.0 - i as f64))
            .collect())
    }

    fn doc_text(&self, doc_id: &str) -> Option<String> {
        Some(format!("{doc_id}\nEvidence paragraph for {doc_id}."))
    }
}
