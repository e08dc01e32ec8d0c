//! Dataset ingestion, token-level F1 scoring, and batch benchmarking with
//! instance-level parallelism.

use crate::accounting::{ledger_merge, MergeShape};
use crate::backend::GenBackend;
use crate::retrieval::Retrieve;
use crate::search::{Engine, SearchConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::str::FromStr;
use thiserror::Error;

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    /// Dataset-specific hop/category tag (e.g. "bridge", "comparison",
    /// "2hop").
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hop_type: Option<String>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown dataset format: {0}")]
    UnknownFormat(String),
    #[error("malformed dataset record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Supported dataset schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Line-delimited `{"id","question","answer","type"?}`.
    Normalized,
    Hotpotqa,
    Twowiki,
    Musique,
}

impl FromStr for DatasetFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "normalized" => Ok(DatasetFormat::Normalized),
            "hotpotqa" => Ok(DatasetFormat::Hotpotqa),
            "twowiki" | "2wiki" => Ok(DatasetFormat::Twowiki),
            "musique" => Ok(DatasetFormat::Musique),
            other => Err(EvalError::UnknownFormat(other.to_string())),
        }
    }
}

/// Normalize an answer for token-level comparison: lowercase, strip
/// punctuation, drop the articles {a, an, the} as whole tokens, collapse
/// whitespace.
pub fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    stripped
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token-level F1 over normalized whitespace tokens with multiset overlap.
/// Both sides normalizing to empty scores 1.0; exactly one empty scores 0.0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize_text(prediction);
    let g = normalize_text(gold);
    let pred: Vec<&str> = p.split_whitespace().collect();
    let gold: Vec<&str> = g.split_whitespace().collect();
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        (false, false) => {}
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &gold {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0i64;
    for t in &pred {
        let c = counts.entry(t).or_insert(0);
        if *c > 0 {
            *c -= 1;
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Read a dataset file. Accepts line-delimited records, or a single JSON
/// array (the distribution format of some public dev sets).
pub fn load_dataset<R: BufRead>(
    reader: R,
    format: DatasetFormat,
) -> Result<Vec<EvalInstance>, EvalError> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let records: Vec<(usize, serde_json::Value)> = if text.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| EvalError::MalformedRecord {
                line: 1,
                reason: e.to_string(),
            })?;
        values.into_iter().map(|v| (1, v)).collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v = serde_json::from_str(line).map_err(|e| EvalError::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
            out.push((i + 1, v));
        }
        out
    };
    records
        .into_iter()
        .map(|(line, v)| adapt_record(&v, format, line))
        .collect()
}

fn field<'v>(
    v: &'v serde_json::Value,
    key: &str,
    line: usize,
) -> Result<&'v str, EvalError> {
    v.get(key)
        .and_then(|x| x.as_str())
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| EvalError::MalformedRecord {
            line,
            reason: format!("missing or empty field {key:?}"),
        })
}

fn adapt_record(
    v: &serde_json::Value,
    format: DatasetFormat,
    line: usize,
) -> Result<EvalInstance, EvalError> {
    let opt = |key: &str| {
        v.get(key)
            .and_then(|x| x.as_str())
            .map(|s| s.to_string())
            .filter(|s| !s.is_empty())
    };
    let instance = match format {
        DatasetFormat::Normalized => EvalInstance {
            id: field(v, "id", line)?.to_string(),
            question: field(v, "question", line)?.to_string(),
            gold_answer: field(v, "answer", line)?.to_string(),
            hop_type: opt("type"),
        },
        DatasetFormat::Hotpotqa | DatasetFormat::Twowiki => EvalInstance {
            id: field(v, "_id", line)?.to_string(),
            question: field(v, "question", line)?.to_string(),
            gold_answer: field(v, "answer", line)?.to_string(),
            hop_type: opt("type"),
        },
        DatasetFormat::Musique => {
            let id = field(v, "id", line)?.to_string();
            // Musique ids look like "2hop__123_456"; the prefix is the hop
            // count tag.
            let hop = id.split("__").next().map(|s| s.to_string());
            EvalInstance {
                question: field(v, "question", line)?.to_string(),
                gold_answer: field(v, "answer", line)?.to_string(),
                hop_type: hop,
                id,
            }
        }
    };
    Ok(instance)
}

/// One benchmark row. Failed instances keep their error tag and score 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hop_type: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted: Option<String>,
    pub f1: f64,
    pub iterations: u64,
    pub retrieval_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Attributed wall time (zero under scripted backends, so scripted
    /// reports are byte-identical regardless of parallelism).
    pub wall_time_us: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub instances: usize,
    pub errors: usize,
    pub mean_f1: f64,
    /// Mean F1 per hop-type tag, ordered by tag.
    pub per_type_f1: BTreeMap<String, f64>,
    pub mean_iterations: f64,
    pub mean_prompt_tokens: f64,
    pub mean_completion_tokens: f64,
    /// Total attributed wall time across instances (sequential merge).
    pub wall_time_us: u64,
    /// Instances per attributed second; zero when no time was attributed.
    pub throughput_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<InstanceRow>,
    pub summary: EvalSummary,
}

impl EvalReport {
    /// Recompute every aggregate from the rows; the invariant checked by
    /// tests is `report.summary == EvalReport::from_rows(rows).summary`.
    pub fn from_rows(rows: Vec<InstanceRow>) -> Self {
        let n = rows.len();
        let mean = |f: &dyn Fn(&InstanceRow) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        let mut per_type: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &rows {
            if let Some(t) = &r.hop_type {
                let e = per_type.entry(t.clone()).or_insert((0.0, 0));
                e.0 += r.f1;
                e.1 += 1;
            }
        }
        let ledgers: Vec<_> = rows
            .iter()
            .map(|r| crate::accounting::EfficiencyRecord {
                iterations: r.iterations,
                retrieval_calls: r.retrieval_calls,
                prompt_tokens: r.prompt_tokens,
                completion_tokens: r.completion_tokens,
                wall_time_us: r.wall_time_us,
            })
            .collect();
        let total = ledger_merge(&ledgers, MergeShape::Sequential);
        let throughput = if total.wall_time_us == 0 {
            0.0
        } else {
            n as f64 / (total.wall_time_us as f64 / 1e6)
        };
        let summary = EvalSummary {
            instances: n,
            errors: rows.iter().filter(|r| r.error.is_some()).count(),
            mean_f1: mean(&|r| r.f1),
            per_type_f1: per_type
                .into_iter()
                .map(|(k, (sum, c))| (k, sum / c as f64))
                .collect(),
            mean_iterations: mean(&|r| r.iterations as f64),
            mean_prompt_tokens: mean(&|r| r.prompt_tokens as f64),
            mean_completion_tokens: mean(&|r| r.completion_tokens as f64),
            wall_time_us: total.wall_time_us,
            throughput_per_s: throughput,
        };
        EvalReport { rows, summary }
    }
}

/// Run the configured search over every instance with up to `parallelism`
/// concurrent instances. Per-instance failures become rows with f1 = 0 and
/// an error tag; row order always follows dataset order.
pub fn run_benchmark(
    dataset: &[EvalInstance],
    cfg: &SearchConfig,
    generator: &dyn GenBackend,
    critic: Option<&dyn GenBackend>,
    retriever: &dyn Retrieve,
    parallelism: usize,
) -> EvalReport {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool construction cannot fail for positive sizes");
    let rows: Vec<InstanceRow> = pool.install(|| {
        dataset
            .par_iter()
            .map(|inst| run_instance(inst, cfg, generator, critic, retriever))
            .collect()
    });
    EvalReport::from_rows(rows)
}

fn run_instance(
    inst: &EvalInstance,
    cfg: &SearchConfig,
    generator: &dyn GenBackend,
    critic: Option<&dyn GenBackend>,
    retriever: &dyn Retrieve,
) -> InstanceRow {
    let engine = Engine {
        cfg: cfg.clone(),
        generator,
        critic,
        retriever,
    };
    match engine.run(&inst.question) {
        Ok(out) => {
            let predicted = out.chosen.answer.clone().unwrap_or_default();
            InstanceRow {
                id: inst.id.clone(),
                hop_type: inst.hop_type.clone(),
                f1: token_f1(&predicted, &inst.gold_answer),
                predicted: Some(predicted),
                iterations: out.accounting.iterations,
                retrieval_calls: out.accounting.retrieval_calls,
                prompt_tokens: out.accounting.prompt_tokens,
                completion_tokens: out.accounting.completion_tokens,
                wall_time_us: out.accounting.wall_time_us,
                error: None,
            }
        }
        Err(e) => InstanceRow {
            id: inst.id.clone(),
            hop_type: inst.hop_type.clone(),
            predicted: None,
            f1: 0.0,
            iterations: 0,
            retrieval_calls: 0,
            prompt_tokens: 0,
            completion_tokens: 0,
            wall_time_us: 0,
            error: Some(e.to_string()),
        },
    }
}
