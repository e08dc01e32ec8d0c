//! Parser and serializer for the self-critique trajectory surface language
//! exchanged between the engine and the generation backend.
//!
//! The marker strings below are the wire contract with the backend and are
//! normative. One iteration of the language looks like:
//!
//! ```text
//! [Non-Atomic Question]
//! <sub-question> Which state is the largest in New England?
//! <paragraph>New England ...</paragraph>
//! Retrieval Quality: [Partially Relevant]
//! Reasoning: From Document, we know that Maine is the largest state ...
//! </sub-question> Reasoning Quality: [Fully supported]
//! [Remaining Question] How many counties are there in Maine?
//! ```
//!
//! Atomic iterations drop the sub-question markers and the remaining
//! question. A trajectory closes with `[Final Answer] @@answer@@` and
//! `Overall Reasoning Quality: [n]`. Note that `</sub-question>` closes
//! after the reasoning text, not after the sub-question itself.
//!
//! The parser is whitespace-tolerant; the renderer emits one newline
//! between markers. Critique-label lines are optional on input so that
//! unlabeled trajectories (pre-annotation, or plain-greedy output) parse
//! under the same grammar.

use crate::trajectory::{
    OutcomeScore, ReasoningStep, RetrievalLabel, RewardConfig, StepDoc, StepKind, SupportLabel,
    Trajectory, TrajectoryStatus,
};
use std::fmt::Write as _;
use std::ops::Range;
use thiserror::Error;

pub const HDR_NON_ATOMIC: &str = "[Non-Atomic Question]";
pub const HDR_ATOMIC: &str = "[Atomic Question]";
pub const SUBQ_OPEN: &str = "<sub-question>";
pub const SUBQ_CLOSE: &str = "</sub-question>";
pub const PARA_OPEN: &str = "<paragraph>";
pub const PARA_CLOSE: &str = "</paragraph>";
pub const RETR_QUALITY: &str = "Retrieval Quality:";
pub const REASONING: &str = "Reasoning:";
pub const REAS_QUALITY: &str = "Reasoning Quality:";
pub const REMAINING: &str = "[Remaining Question]";
pub const FINAL_ANSWER: &str = "[Final Answer]";
pub const OVERALL: &str = "Overall Reasoning Quality:";
pub const ANSWER_DELIM: &str = "@@";
pub const QUESTION_PREAMBLE: &str = "Question:";
/// Critic-prompt surface marker ("Rating: [label]").
pub const RATING: &str = "Rating:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkupError {
    #[error("unclosed tag {tag} at bytes {span:?}")]
    UnclosedTag { tag: &'static str, span: Range<usize> },
    #[error("unknown label at bytes {span:?}")]
    UnknownLabel { span: Range<usize> },
    #[error("missing final answer at bytes {span:?}")]
    MissingFinalAnswer { span: Range<usize> },
    #[error("empty answer at bytes {span:?}")]
    EmptyAnswer { span: Range<usize> },
    #[error("expected {expected} at bytes {span:?}")]
    Unexpected {
        expected: &'static str,
        span: Range<usize>,
    },
    #[error("outcome score {value} outside 1..=5 at bytes {span:?}")]
    OutcomeOutOfRange { value: u32, span: Range<usize> },
}

/// One recognized element of the surface language, with its byte span.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkupEvent {
    pub kind: EventKind,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Preamble(String),
    HeaderNonAtomic,
    HeaderAtomic,
    SubQuestionOpen,
    SubQuestionText(String),
    SubQuestionClose,
    ParagraphOpen,
    DocumentText(String),
    ParagraphClose,
    RetrievalQuality(RetrievalLabel),
    ReasoningText(String),
    ReasoningQuality(SupportLabel),
    RemainingQuestion(String),
    FinalAnswer(String),
    OverallQuality(OutcomeScore),
}

/// What a partial parse of a generation prefix is waiting for.
#[derive(Debug, Clone, PartialEq)]
pub enum Needs {
    /// The prefix ends at a bare `<paragraph>`: the backend is waiting for a
    /// document for this query.
    Retrieval(String),
    MoreText,
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialParse {
    pub events: Vec<MarkupEvent>,
    pub needs: Needs,
}

/// Neutralize delimiter collisions inside paragraph interiors. Inverted by
/// [`unescape_doc`]; documents are engine-injected, so this runs during
/// prompt assembly only.
pub fn escape_doc(text: &str) -> String {
    text.replace('\\', "\\\\")
        .replace("@@", "@\\@")
        .replace(PARA_CLOSE, "<\\/paragraph>")
}

pub fn unescape_doc(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('\\') => out.push('\\'),
                Some('@') => out.push('@'),
                Some('/') => out.push('/'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scanner
// ---------------------------------------------------------------------------

enum MarkerMatch {
    Yes,
    /// Remaining input is a proper prefix of the marker (partial-parse case).
    Truncated,
    No,
}

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
    events: Vec<MarkupEvent>,
    /// Partial mode: EOF mid-structure is "more text", not an error.
    partial: bool,
}

/// Raised internally when a partial parse runs out of input.
struct NeedMore;

enum ScanOutcome {
    Done,
    More,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str, partial: bool) -> Self {
        Scanner {
            src,
            pos: 0,
            events: Vec::new(),
            partial,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn peek_marker(&self, marker: &str) -> MarkerMatch {
        let rest = self.rest();
        if rest.starts_with(marker) {
            MarkerMatch::Yes
        } else if !rest.is_empty() && rest.len() < marker.len() && marker.starts_with(rest) {
            MarkerMatch::Truncated
        } else {
            MarkerMatch::No
        }
    }

    /// Consume `marker` after optional whitespace, emitting `kind`.
    fn expect_marker(
        &mut self,
        marker: &'static str,
        kind: EventKind,
    ) -> Result<Result<(), NeedMore>, MarkupError> {
        self.skip_ws();
        match self.peek_marker(marker) {
            MarkerMatch::Yes => {
                let start = self.pos;
                self.pos += marker.len();
                self.events.push(MarkupEvent {
                    kind,
                    span: start..self.pos,
                });
                Ok(Ok(()))
            }
            MarkerMatch::Truncated if self.partial => Ok(Err(NeedMore)),
            _ if self.eof() && self.partial => Ok(Err(NeedMore)),
            _ => Err(MarkupError::Unexpected {
                expected: marker,
                span: self.pos..self.src.len().min(self.pos + marker.len()),
            }),
        }
    }

    /// Try to consume `marker` after optional whitespace without erroring.
    fn try_marker(&mut self, marker: &'static str, kind: EventKind) -> Option<()> {
        let save = self.pos;
        self.skip_ws();
        if let MarkerMatch::Yes = self.peek_marker(marker) {
            let start = self.pos;
            self.pos += marker.len();
            self.events.push(MarkupEvent {
                kind,
                span: start..self.pos,
            });
            Some(())
        } else {
            self.pos = save;
            None
        }
    }

    fn at_marker(&mut self, marker: &str) -> bool {
        let save = self.pos;
        self.skip_ws();
        let hit = matches!(self.peek_marker(marker), MarkerMatch::Yes);
        self.pos = save;
        hit
    }

    /// True when the remaining input could still grow into `marker`.
    fn at_truncated_marker(&mut self, marker: &str) -> bool {
        let save = self.pos;
        self.skip_ws();
        let hit = matches!(self.peek_marker(marker), MarkerMatch::Truncated);
        self.pos = save;
        hit
    }

    /// Consume free text up to (not including) the nearest of `stops`.
    /// Returns (raw span, trimmed text, hit_stop).
    fn take_until(&mut self, stops: &[&str]) -> (Range<usize>, String, bool) {
        let start = self.pos;
        let rest = self.rest();
        let mut end = rest.len();
        let mut hit = false;
        for stop in stops {
            if let Some(i) = rest.find(stop) {
                if i < end {
                    end = i;
                    hit = true;
                } else if i == end {
                    hit = true;
                }
            }
        }
        self.pos = start + end;
        let raw = start..self.pos;
        (raw.clone(), rest[..end].trim().to_string(), hit)
    }

    /// Parse a bracketed label `[...]` after optional whitespace.
    fn take_bracketed(&mut self) -> Result<Result<(Range<usize>, String), NeedMore>, MarkupError> {
        self.skip_ws();
        let start = self.pos;
        let rest = self.rest();
        if !rest.starts_with('[') {
            if self.partial && rest.is_empty() {
                return Ok(Err(NeedMore));
            }
            return Err(MarkupError::UnknownLabel {
                span: start..self.src.len().min(start + 24),
            });
        }
        match rest.find(']') {
            Some(i) => {
                self.pos = start + i + 1;
                Ok(Ok((start..self.pos, rest[..=i].to_string())))
            }
            None if self.partial => Ok(Err(NeedMore)),
            None => Err(MarkupError::UnknownLabel {
                span: start..self.src.len(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------

/// All marker strings that can begin the segment after a reasoning text.
const AFTER_REASONING_STOPS: &[&str] = &[
    SUBQ_CLOSE,
    REAS_QUALITY,
    REMAINING,
    HDR_NON_ATOMIC,
    HDR_ATOMIC,
    FINAL_ANSWER,
];

fn scan(s: &mut Scanner) -> Result<ScanOutcome, MarkupError> {
    // Optional question preamble.
    if s.at_marker(QUESTION_PREAMBLE) {
        s.skip_ws();
        let start = s.pos;
        s.pos += QUESTION_PREAMBLE.len();
        let (_, q, _) = s.take_until(&[HDR_NON_ATOMIC, HDR_ATOMIC, FINAL_ANSWER]);
        s.events.push(MarkupEvent {
            kind: EventKind::Preamble(q),
            span: start..s.pos,
        });
    } else if s.partial && s.at_truncated_marker(QUESTION_PREAMBLE) {
        return Ok(ScanOutcome::More);
    }

    loop {
        s.skip_ws();
        if s.eof() {
            if s.partial {
                return Ok(ScanOutcome::More);
            }
            return Err(MarkupError::MissingFinalAnswer {
                span: s.src.len()..s.src.len(),
            });
        }
        if s.try_marker(HDR_NON_ATOMIC, EventKind::HeaderNonAtomic).is_some() {
            match scan_iteration(s, StepKind::NonAtomic)? {
                Ok(()) => {}
                Err(NeedMore) => return Ok(ScanOutcome::More),
            }
        } else if s.try_marker(HDR_ATOMIC, EventKind::HeaderAtomic).is_some() {
            match scan_iteration(s, StepKind::Atomic)? {
                Ok(()) => {}
                Err(NeedMore) => return Ok(ScanOutcome::More),
            }
        } else if s.at_marker(FINAL_ANSWER) {
            return match scan_final(s)? {
                Ok(()) => Ok(ScanOutcome::Done),
                Err(NeedMore) => Ok(ScanOutcome::More),
            };
        } else if s.partial
            && (s.at_truncated_marker(HDR_NON_ATOMIC)
                || s.at_truncated_marker(HDR_ATOMIC)
                || s.at_truncated_marker(FINAL_ANSWER))
        {
            return Ok(ScanOutcome::More);
        } else {
            return Err(MarkupError::Unexpected {
                expected: "iteration header or [Final Answer]",
                span: s.pos..s.src.len().min(s.pos + 24),
            });
        }
    }
}

fn scan_iteration(s: &mut Scanner, kind: StepKind) -> Result<Result<(), NeedMore>, MarkupError> {
    if kind == StepKind::NonAtomic {
        if let Err(NeedMore) = s.expect_marker(SUBQ_OPEN, EventKind::SubQuestionOpen)? {
            return Ok(Err(NeedMore));
        }
        let (span, text, hit) = s.take_until(&[PARA_OPEN]);
        if !hit && !s.partial {
            return Err(MarkupError::Unexpected {
                expected: PARA_OPEN,
                span: span.end..span.end,
            });
        }
        s.events.push(MarkupEvent {
            kind: EventKind::SubQuestionText(text),
            span,
        });
        if !hit {
            return Ok(Err(NeedMore));
        }
    }

    if let Err(NeedMore) = s.expect_marker(PARA_OPEN, EventKind::ParagraphOpen)? {
        return Ok(Err(NeedMore));
    }
    // A bare open paragraph at end of input is the retrieval trigger.
    if s.partial && s.rest().trim().is_empty() {
        return Ok(Err(NeedMore));
    }
    let para_open_end = s.pos;
    let (span, _, hit) = s.take_until(&[PARA_CLOSE]);
    if !hit {
        if s.partial {
            return Ok(Err(NeedMore));
        }
        return Err(MarkupError::UnclosedTag {
            tag: PARA_OPEN,
            span: para_open_end - PARA_OPEN.len()..s.src.len(),
        });
    }
    // Document interior is raw (untrimmed) and unescaped.
    let doc = unescape_doc(&s.src[span.clone()]);
    s.events.push(MarkupEvent {
        kind: EventKind::DocumentText(doc),
        span,
    });
    if s.expect_marker(PARA_CLOSE, EventKind::ParagraphClose)?.is_err() {
        return Ok(Err(NeedMore));
    }

    // Optional retrieval critique.
    if s.at_marker(RETR_QUALITY) {
        s.skip_ws();
        let start = s.pos;
        s.pos += RETR_QUALITY.len();
        let (span, raw) = match s.take_bracketed()? {
            Ok(v) => v,
            Err(NeedMore) => return Ok(Err(NeedMore)),
        };
        let label = RetrievalLabel::parse_surface(&raw)
            .ok_or(MarkupError::UnknownLabel { span: span.clone() })?;
        s.events.push(MarkupEvent {
            kind: EventKind::RetrievalQuality(label),
            span: start..span.end,
        });
    } else if s.partial && s.at_truncated_marker(RETR_QUALITY) {
        return Ok(Err(NeedMore));
    }

    if let Err(NeedMore) = s.expect_marker(REASONING, EventKind::ReasoningText(String::new()))? {
        return Ok(Err(NeedMore));
    }
    // Backfill the reasoning text into the event we just pushed.
    let (span, text, hit) = s.take_until(AFTER_REASONING_STOPS);
    let idx = s.events.len() - 1;
    let start = s.events[idx].span.start;
    s.events[idx] = MarkupEvent {
        kind: EventKind::ReasoningText(text),
        span: start..span.end,
    };
    if !hit && s.partial {
        return Ok(Err(NeedMore));
    }

    if kind == StepKind::NonAtomic {
        // The figure closes the sub-question after the reasoning text.
        s.try_marker(SUBQ_CLOSE, EventKind::SubQuestionClose);
    }

    if s.at_marker(REAS_QUALITY) {
        s.skip_ws();
        let start = s.pos;
        s.pos += REAS_QUALITY.len();
        let (span, raw) = match s.take_bracketed()? {
            Ok(v) => v,
            Err(NeedMore) => return Ok(Err(NeedMore)),
        };
        let label = SupportLabel::parse_surface(&raw)
            .ok_or(MarkupError::UnknownLabel { span: span.clone() })?;
        s.events.push(MarkupEvent {
            kind: EventKind::ReasoningQuality(label),
            span: start..span.end,
        });
    } else if s.partial && s.at_truncated_marker(REAS_QUALITY) {
        return Ok(Err(NeedMore));
    }

    if kind == StepKind::NonAtomic {
        if s.try_marker(REMAINING, EventKind::RemainingQuestion(String::new())).is_some() {
            let (span, text, hit) = s.take_until(&[HDR_NON_ATOMIC, HDR_ATOMIC, FINAL_ANSWER]);
            let idx = s.events.len() - 1;
            let start = s.events[idx].span.start;
            s.events[idx] = MarkupEvent {
                kind: EventKind::RemainingQuestion(text),
                span: start..span.end,
            };
            if !hit && s.partial {
                return Ok(Err(NeedMore));
            }
        } else if s.partial && s.at_truncated_marker(REMAINING) {
            return Ok(Err(NeedMore));
        }
    }
    Ok(Ok(()))
}

fn scan_final(s: &mut Scanner) -> Result<Result<(), NeedMore>, MarkupError> {
    s.skip_ws();
    let final_start = s.pos;
    s.pos += FINAL_ANSWER.len();
    let rest = s.rest();
    let open = match rest.find(ANSWER_DELIM) {
        Some(i) => i,
        None if s.partial => return Ok(Err(NeedMore)),
        None => {
            return Err(MarkupError::MissingFinalAnswer {
                span: final_start..s.src.len(),
            })
        }
    };
    let after_open = &rest[open + ANSWER_DELIM.len()..];
    let close = match after_open.find(ANSWER_DELIM) {
        Some(i) => i,
        None if s.partial => return Ok(Err(NeedMore)),
        None => {
            return Err(MarkupError::MissingFinalAnswer {
                span: final_start..s.src.len(),
            })
        }
    };
    let raw_answer = &after_open[..close];
    let answer = strip_style(raw_answer);
    let answer_span = final_start..s.pos + open + ANSWER_DELIM.len() + close + ANSWER_DELIM.len();
    if answer.is_empty() {
        return Err(MarkupError::EmptyAnswer {
            span: answer_span,
        });
    }
    s.pos = answer_span.end;
    s.events.push(MarkupEvent {
        kind: EventKind::FinalAnswer(answer),
        span: answer_span,
    });

    // Optional overall-quality trailer.
    if s.at_marker(OVERALL) {
        s.skip_ws();
        let start = s.pos;
        s.pos += OVERALL.len();
        let (span, raw) = match s.take_bracketed()? {
            Ok(v) => v,
            Err(NeedMore) => return Ok(Err(NeedMore)),
        };
        let digits = raw.trim_start_matches('[').trim_end_matches(']').trim();
        let value: u32 = digits
            .parse()
            .map_err(|_| MarkupError::UnknownLabel { span: span.clone() })?;
        let score = OutcomeScore::new(u8::try_from(value).unwrap_or(0)).map_err(|_| MarkupError::OutcomeOutOfRange {
            value,
            span: span.clone(),
        })?;
        s.events.push(MarkupEvent {
            kind: EventKind::OverallQuality(score),
            span: start..span.end,
        });
    } else if s.partial && (s.at_truncated_marker(OVERALL) || s.rest().trim().is_empty()) {
        // Answer parsed but the trailer may still arrive.
        return Ok(Ok(()));
    }
    Ok(Ok(()))
}

/// Strip bold/emphasis wrappers and surrounding whitespace from an answer.
fn strip_style(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c| c == '*' || c == '_')
        .trim()
        .to_string()
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// Parse a complete trajectory text. Scalar rewards are populated from the
/// labels via `cfg`; the cumulative reward is the fold of the step rewards.
pub fn parse_trajectory(text: &str, cfg: &RewardConfig) -> Result<Trajectory, MarkupError> {
    let mut s = Scanner::new(text, false);
    scan(&mut s)?;
    let traj = events_to_trajectory(&s.events, cfg);
    if traj.answer.is_none() {
        return Err(MarkupError::MissingFinalAnswer {
            span: text.len()..text.len(),
        });
    }
    Ok(traj)
}

/// Tokenize a prefix of a trajectory and report what the engine should do
/// next: inject a retrieved document, keep generating, or stop.
pub fn parse_partial(prefix: &str) -> Result<PartialParse, MarkupError> {
    let mut s = Scanner::new(prefix, true);
    let outcome = scan(&mut s)?;
    let events = s.events;
    let needs = match outcome {
        ScanOutcome::Done => {
            if events
                .iter()
                .any(|e| matches!(e.kind, EventKind::OverallQuality(_)))
            {
                Needs::Complete
            } else {
                Needs::MoreText
            }
        }
        ScanOutcome::More => {
            // Retrieval exactly when the last event is a bare ParagraphOpen.
            let bare_open = matches!(
                events.last(),
                Some(MarkupEvent {
                    kind: EventKind::ParagraphOpen,
                    span,
                }) if prefix[span.end..].trim().is_empty()
            );
            if bare_open {
                Needs::Retrieval(pending_query(&events))
            } else {
                Needs::MoreText
            }
        }
    };
    Ok(PartialParse { events, needs })
}

/// The query a bare `<paragraph>` is waiting on: the current iteration's
/// sub-question, or for atomic iterations the latest remaining question,
/// falling back to the original question.
fn pending_query(events: &[MarkupEvent]) -> String {
    let mut original = String::new();
    let mut remaining = None;
    let mut subq = None;
    for e in events {
        match &e.kind {
            EventKind::Preamble(q) => original = q.clone(),
            EventKind::RemainingQuestion(q) => remaining = Some(q.clone()),
            EventKind::SubQuestionText(q) => subq = Some(q.clone()),
            EventKind::HeaderAtomic => subq = None,
            _ => {}
        }
    }
    subq.or(remaining).unwrap_or(original)
}

/// Build a trajectory from a parsed event stream. Tolerates prefixes: a
/// stream without a final answer yields an Active trajectory, so the search
/// engine can reuse this on `parse_partial` output.
pub fn events_to_trajectory(events: &[MarkupEvent], cfg: &RewardConfig) -> Trajectory {
    let mut traj = Trajectory::new("", 0);
    let mut step: Option<ReasoningStep> = None;
    let mut r_c = 0.0;
    let mut any_label = false;
    for e in events {
        match &e.kind {
            EventKind::Preamble(q) => traj.question = q.clone(),
            EventKind::HeaderNonAtomic | EventKind::HeaderAtomic => {
                if let Some(mut done) = step.take() {
                    done.apply_rewards(cfg);
                    r_c += done.r_retr.unwrap_or(0.0) + done.r_reas.unwrap_or(0.0);
                    traj.steps.push(done);
                }
                step = Some(ReasoningStep {
                    index: traj.steps.len(),
                    kind: if matches!(e.kind, EventKind::HeaderAtomic) {
                        StepKind::Atomic
                    } else {
                        StepKind::NonAtomic
                    },
                    sub_question: None,
                    doc: StepDoc {
                        doc_id: String::new(),
                        text: String::new(),
                    },
                    candidates: Vec::new(),
                    retrieval_label: None,
                    r_retr: None,
                    reasoning: String::new(),
                    support_label: None,
                    r_reas: None,
                    remaining_question: None,
                });
            }
            EventKind::SubQuestionText(q) => {
                if let Some(st) = step.as_mut() {
                    st.sub_question = Some(q.clone());
                }
            }
            EventKind::DocumentText(d) => {
                if let Some(st) = step.as_mut() {
                    st.doc.text = d.clone();
                }
            }
            EventKind::RetrievalQuality(l) => {
                any_label = true;
                if let Some(st) = step.as_mut() {
                    st.retrieval_label = Some(*l);
                }
            }
            EventKind::ReasoningText(t) => {
                if let Some(st) = step.as_mut() {
                    st.reasoning = t.clone();
                }
            }
            EventKind::ReasoningQuality(l) => {
                any_label = true;
                if let Some(st) = step.as_mut() {
                    st.support_label = Some(*l);
                }
            }
            EventKind::RemainingQuestion(q) => {
                if let Some(st) = step.as_mut() {
                    st.remaining_question = Some(q.clone());
                }
            }
            EventKind::FinalAnswer(a) => {
                traj.answer = Some(a.clone());
            }
            EventKind::OverallQuality(score) => traj.outcome = Some(*score),
            _ => {}
        }
    }
    if let Some(mut done) = step.take() {
        done.apply_rewards(cfg);
        r_c += done.r_retr.unwrap_or(0.0) + done.r_reas.unwrap_or(0.0);
        traj.steps.push(done);
    }
    traj.status = if traj.answer.is_some() {
        TrajectoryStatus::Finished
    } else {
        TrajectoryStatus::Active
    };
    traj.r_c = if any_label || !traj.steps.is_empty() {
        Some(r_c)
    } else {
        Some(0.0)
    };
    traj
}

/// Where to stop rendering a trajectory prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderUpto {
    /// Render the first `n` steps only, no final segment.
    Steps(usize),
    /// Render everything, including the final answer and overall quality.
    End,
}

/// Serialize a trajectory back to canonical surface text. Parsing the output
/// of `render_prefix(t, End)` reconstructs `t`'s surface-expressible fields.
pub fn render_prefix(traj: &Trajectory, upto: RenderUpto) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", QUESTION_PREAMBLE, traj.question);
    let limit = match upto {
        RenderUpto::Steps(n) => n.min(traj.steps.len()),
        RenderUpto::End => traj.steps.len(),
    };
    for step in &traj.steps[..limit] {
        render_step(&mut out, step);
    }
    if upto == RenderUpto::End {
        if let Some(answer) = &traj.answer {
            let _ = writeln!(out, "{FINAL_ANSWER} {ANSWER_DELIM}{answer}{ANSWER_DELIM}");
            if let Some(score) = traj.outcome {
                let _ = writeln!(out, "{OVERALL} [{}]", score.value());
            }
        }
    }
    out
}

fn render_step(out: &mut String, step: &ReasoningStep) {
    match step.kind {
        StepKind::NonAtomic => {
            let _ = writeln!(out, "{HDR_NON_ATOMIC}");
            let _ = writeln!(
                out,
                "{SUBQ_OPEN} {}",
                step.sub_question.as_deref().unwrap_or("")
            );
            let _ = writeln!(out, "{PARA_OPEN}{}{PARA_CLOSE}", escape_doc(&step.doc.text));
            if let Some(l) = step.retrieval_label {
                let _ = writeln!(out, "{RETR_QUALITY} {}", l.surface());
            }
            let _ = writeln!(out, "{REASONING} {}", step.reasoning);
            match step.support_label {
                Some(l) => {
                    let _ = writeln!(out, "{SUBQ_CLOSE} {REAS_QUALITY} {}", l.surface());
                }
                None => {
                    let _ = writeln!(out, "{SUBQ_CLOSE}");
                }
            }
            if let Some(r) = &step.remaining_question {
                let _ = writeln!(out, "{REMAINING} {r}");
            }
        }
        StepKind::Atomic => {
            let _ = writeln!(out, "{HDR_ATOMIC}");
            let _ = writeln!(out, "{PARA_OPEN}{}{PARA_CLOSE}", escape_doc(&step.doc.text));
            if let Some(l) = step.retrieval_label {
                let _ = writeln!(out, "{RETR_QUALITY} {}", l.surface());
            }
            let _ = writeln!(out, "{REASONING} {}", step.reasoning);
            if let Some(l) = step.support_label {
                let _ = writeln!(out, "{REAS_QUALITY} {}", l.surface());
            }
        }
    }
}

/// Content of the last complete `@@...@@` pair, trimmed and de-styled.
pub fn extract_answer(text: &str) -> Result<String, MarkupError> {
    let mut positions = Vec::new();
    let mut at = 0;
    while let Some(i) = text[at..].find(ANSWER_DELIM) {
        positions.push(at + i);
        at += i + ANSWER_DELIM.len();
    }
    let pairs = positions.len() / 2;
    if pairs == 0 {
        return Err(MarkupError::MissingFinalAnswer {
            span: 0..text.len(),
        });
    }
    let open = positions[2 * pairs - 2];
    let close = positions[2 * pairs - 1];
    let answer = strip_style(&text[open + ANSWER_DELIM.len()..close]);
    if answer.is_empty() {
        return Err(MarkupError::EmptyAnswer { span: open..close });
    }
    Ok(answer)
}

/// Role of a byte range within a training record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRole {
    Instruction,
    Generation,
    Document,
    Critique,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
}

/// Split a record into (instruction | generation | document | critique)
/// segments. Concatenating the segment texts reproduces the input byte for
/// byte; document segments exactly cover paragraph interiors.
pub fn strip_documents(record_text: &str) -> Result<Vec<Segment>, MarkupError> {
    let mut s = Scanner::new(record_text, false);
    scan(&mut s)?;
    let mut marks: Vec<(Range<usize>, SegmentRole)> = Vec::new();
    for e in &s.events {
        match &e.kind {
            EventKind::Preamble(_) => marks.push((e.span.clone(), SegmentRole::Instruction)),
            EventKind::DocumentText(_) => marks.push((e.span.clone(), SegmentRole::Document)),
            EventKind::RetrievalQuality(_)
            | EventKind::ReasoningQuality(_)
            | EventKind::OverallQuality(_) => marks.push((e.span.clone(), SegmentRole::Critique)),
            _ => {}
        }
    }
    marks.sort_by_key(|(r, _)| r.start);
    let mut segments = Vec::new();
    let mut cursor = 0;
    for (range, role) in marks {
        if range.start > cursor {
            push_segment(
                &mut segments,
                SegmentRole::Generation,
                &record_text[cursor..range.start],
            );
        }
        push_segment(&mut segments, role, &record_text[range.clone()]);
        cursor = range.end;
    }
    if cursor < record_text.len() {
        push_segment(
            &mut segments,
            SegmentRole::Generation,
            &record_text[cursor..],
        );
    }
    Ok(segments)
}

fn push_segment(segments: &mut Vec<Segment>, role: SegmentRole, text: &str) {
    if let Some(last) = segments.last_mut() {
        if last.role == role {
            last.text.push_str(text);
            return;
        }
    }
    segments.push(Segment {
        role,
        text: text.to_string(),
    });
}

/// Parse the last `Rating: [...]` line of a critic completion.
pub fn parse_rating_raw(text: &str) -> Option<&str> {
    let idx = text.rfind(RATING)?;
    let after = &text[idx + RATING.len()..];
    let line = after.lines().next().unwrap_or("");
    let open = line.find('[')?;
    let close = line[open..].find(']')? + open;
    Some(line[open..=close].trim())
}

/// The three-iteration worked example, in canonical surface form. Test
/// fixture shared across modules.
#[cfg(test)]
pub(crate) fn figure_text() -> String {
    "\
Question: How many counties are there in the largest state in the region where the film The Family Stone was set?
[Non-Atomic Question]
<sub-question> In which region is the film \"The Family Stone\" set?
<paragraph>The Family Stone ...</paragraph>
Retrieval Quality: [Partially Relevant]
Reasoning: From Document, we know that \"The Family Stone\" is set in a small New England town. Therefore, the region is New England.
</sub-question> Reasoning Quality: [Fully supported]
[Remaining Question] How many counties are there in the largest state in New England?
[Non-Atomic Question]
<sub-question> Which state is the largest in New England?
<paragraph>New England ...</paragraph>
Retrieval Quality: [Partially Relevant]
Reasoning: From Document, we know that Maine is the largest state in New England, constituting nearly one-half of the total area of New England.
</sub-question> Reasoning Quality: [Fully supported]
[Remaining Question] How many counties are there in Maine?
[Atomic Question]
<paragraph>List of counties in Maine ...</paragraph>
Retrieval Quality: [Partially Relevant]
Reasoning: From Document, we know that there are sixteen counties in Maine.
Reasoning Quality: [Fully supported]
[Final Answer] @@sixteen@@
Overall Reasoning Quality: [4]
"
    .to_string()
}
