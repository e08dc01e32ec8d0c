//! Command implementations. Every output file is written atomically
//! (write to a sibling temp file, then rename), so reruns with the same
//! `--out` are idempotent.

use clap::ValueEnum;
use iterbeam_core::backend::{
    BackendError, GenBackend, HttpBackend, HttpBackendConfig, ScriptBundle, ScriptedBackend,
};
use iterbeam_core::config::{
    load_config, BackendConfig, BackendKind, EngineConfig, RetrieverMode as CfgRetrieverMode,
};
use iterbeam_core::eval::{load_dataset, run_benchmark, EvalError, EvalReport};
use iterbeam_core::markup::{parse_trajectory, render_prefix, RenderUpto};
use iterbeam_core::retrieval::{
    build_index, Corpus, DenseClient, DenseClientConfig, RetrievalError, Retriever, RetrieverMode,
};
use iterbeam_core::search::{Engine, SearchError, SearchMode, SearchOutcome};
use iterbeam_core::synthesis::{
    annotate_self_critique, filter_self_improvement, synthesize_rationale, SynthInstance,
    SynthesisError, TrainingRecord,
};
use iterbeam_core::trajectory::{OutcomeScore, RewardConfig, Trajectory};
use serde::Deserialize;
use std::fs;
use std::io::BufReader;
use std::path::Path;

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> Self {
        CliError {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<iterbeam_core::config::ConfigError> for CliError {
    fn from(e: iterbeam_core::config::ConfigError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Transport(_) | RetrievalError::MalformedResponse(_) => {
                CliError::backend(e.to_string())
            }
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::backend(e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Unanswered { .. } => CliError {
                code: 3,
                message: e.to_string(),
            },
            SearchError::Backend(_) | SearchError::Retrieval(_) => {
                CliError::backend(e.to_string())
            }
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::input(e.to_string())
    }
}

/// Write-then-rename so a crash never leaves a half-written artifact and
/// reruns are idempotent.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(tmp, path)
        .map_err(|e| CliError::input(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open corpus {}: {e}", path.display())))?;
    Ok(Corpus::from_reader(BufReader::new(file))?)
}

/// An owned generation backend of either configured kind.
pub enum AnyBackend {
    Scripted(ScriptedBackend),
    Http(HttpBackend),
}

impl AnyBackend {
    fn as_dyn(&self) -> &dyn GenBackend {
        match self {
            AnyBackend::Scripted(b) => b,
            AnyBackend::Http(b) => b,
        }
    }
}

fn build_backend(cfg: &BackendConfig, role: &str) -> Result<AnyBackend, CliError> {
    match cfg.kind {
        BackendKind::Scripted => {
            let path = cfg
                .script
                .as_ref()
                .ok_or_else(|| CliError::input(format!("{role}: scripted backend needs a script")))?;
            let file = fs::File::open(path).map_err(|e| {
                CliError::input(format!("cannot open script {}: {e}", path.display()))
            })?;
            let bundle = ScriptBundle::from_reader(BufReader::new(file))
                .map_err(|e| CliError::input(format!("{role} script: {e}")))?;
            Ok(AnyBackend::Scripted(ScriptedBackend::new(bundle)))
        }
        BackendKind::Http => {
            let endpoint = cfg
                .endpoint
                .clone()
                .ok_or_else(|| CliError::input(format!("{role}: http backend needs an endpoint")))?;
            let http = HttpBackend::new(HttpBackendConfig {
                endpoint,
                model: cfg.model.clone().unwrap_or_else(|| "default".into()),
                timeout_ms: 120_000,
                log_path: None,
            })?;
            Ok(AnyBackend::Http(http))
        }
    }
}

fn build_retriever(cfg: &EngineConfig) -> Result<Retriever, CliError> {
    let corpus = read_corpus(&cfg.retriever.corpus)?;
    let mode = match cfg.retriever.mode {
        CfgRetrieverMode::Sparse => RetrieverMode::Sparse,
        CfgRetrieverMode::Dense => RetrieverMode::Dense,
        CfgRetrieverMode::Hybrid => RetrieverMode::Hybrid,
    };
    let index = match mode {
        RetrieverMode::Dense => None,
        _ => Some(build_index(&corpus)?),
    };
    let dense = match mode {
        RetrieverMode::Sparse => None,
        _ => {
            let endpoint = cfg
                .retriever
                .dense_endpoint
                .clone()
                .ok_or_else(|| CliError::input("retriever: dense mode needs an endpoint"))?;
            Some(DenseClient::new(&DenseClientConfig {
                endpoint,
                timeout_ms: 10_000,
            })?)
        }
    };
    Ok(Retriever {
        mode,
        corpus,
        index,
        dense,
    })
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

pub fn cmd_index(corpus_path: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(corpus_path)?;
    let index = build_index(&corpus)?;
    let mut buf = Vec::new();
    index
        .write_to(&mut buf)
        .map_err(|e| CliError::input(e.to_string()))?;
    write_atomic(out, &buf)?;
    println!(
        "{} documents indexed (average length {:.1} tokens) -> {}",
        index.num_docs(),
        index.avg_len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// ask
// ---------------------------------------------------------------------------

fn step_summary(traj: &Trajectory) -> String {
    traj.steps
        .iter()
        .map(|s| {
            let q = s
                .sub_question
                .as_deref()
                .unwrap_or("(atomic)")
                .to_string();
            let labels = match (s.retrieval_label, s.support_label) {
                (Some(r), Some(x)) => format!("{} {}", r.surface(), x.surface()),
                _ => "(unlabeled)".to_string(),
            };
            format!("  step {}: {q} {labels}", s.index + 1)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn cmd_ask(
    config_path: &Path,
    question: &str,
    out: Option<&Path>,
    audit: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path)?;
    if let Some(seed) = seed {
        cfg.search.seed = seed;
    }
    let generator = build_backend(&cfg.generator, "generator")?;
    let critic = cfg
        .critic
        .as_ref()
        .map(|c| build_backend(c, "critic"))
        .transpose()?;
    let retriever = build_retriever(&cfg)?;
    let engine = Engine {
        cfg: cfg.search.clone(),
        generator: generator.as_dyn(),
        critic: critic.as_ref().map(|c| c.as_dyn()),
        retriever: &retriever,
    };
    let outcome: SearchOutcome = engine.run(question)?;
    let chosen = &outcome.chosen;
    println!("answer: {}", chosen.answer.as_deref().unwrap_or(""));
    if let Some(r_c) = chosen.r_c {
        println!("cumulative reward: {r_c}");
    }
    if let Some(score) = chosen.outcome {
        println!("outcome score: {}", score.value());
    }
    println!("steps:\n{}", step_summary(chosen));
    println!(
        "iterations {} retrieval_calls {} prompt_tokens {} completion_tokens {}",
        outcome.accounting.iterations,
        outcome.accounting.retrieval_calls,
        outcome.accounting.prompt_tokens,
        outcome.accounting.completion_tokens
    );
    if let Some(out) = out {
        let record = serde_json::to_vec_pretty(&outcome).expect("serializable outcome");
        write_atomic(out, &record)?;
        println!("run record -> {}", out.display());
    }
    if let Some(audit_path) = audit {
        let mut lines = Vec::new();
        for t in outcome.finished.iter().chain(outcome.failed.iter()) {
            lines.extend_from_slice(&serde_json::to_vec(t).expect("serializable trajectory"));
            lines.push(b'\n');
        }
        write_atomic(audit_path, &lines)?;
        println!(
            "audit ({} branches) -> {}",
            outcome.finished.len() + outcome.failed.len(),
            audit_path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    PlainGreedy,
    GuidedGreedy,
    Beam,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> SearchMode {
        match m {
            ModeArg::PlainGreedy => SearchMode::PlainGreedy,
            ModeArg::GuidedGreedy => SearchMode::GuidedGreedy,
            ModeArg::Beam => SearchMode::Beam,
        }
    }
}

pub fn cmd_bench(
    config_path: &Path,
    dataset: Option<&Path>,
    mode: Option<ModeArg>,
    parallelism: Option<usize>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path)?;
    if let Some(mode) = mode {
        cfg.search.mode = mode.into();
    }
    if let Some(seed) = seed {
        cfg.search.seed = seed;
    }
    let parallelism = parallelism.unwrap_or(cfg.eval.parallelism);
    let dataset_path = dataset
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.eval.dataset.clone())
        .ok_or_else(|| CliError::input("no dataset given (flag --dataset or eval.dataset)"))?;
    let format = cfg
        .eval
        .format
        .parse()
        .map_err(|e: EvalError| CliError::input(e.to_string()))?;
    let file = fs::File::open(&dataset_path)
        .map_err(|e| CliError::input(format!("cannot open dataset {}: {e}", dataset_path.display())))?;
    let instances = load_dataset(BufReader::new(file), format)?;

    let generator = build_backend(&cfg.generator, "generator")?;
    let critic = cfg
        .critic
        .as_ref()
        .map(|c| build_backend(c, "critic"))
        .transpose()?;
    let retriever = build_retriever(&cfg)?;
    let report: EvalReport = run_benchmark(
        &instances,
        &cfg.search,
        generator.as_dyn(),
        critic.as_ref().map(|c| c.as_dyn()),
        &retriever,
        parallelism,
    );

    let s = &report.summary;
    println!("instances {}  errors {}", s.instances, s.errors);
    println!("mean F1 {:.4}", s.mean_f1);
    for (hop_type, f1) in &s.per_type_f1 {
        println!("  {hop_type}: F1 {f1:.4}");
    }
    println!("mean iterations {:.2}", s.mean_iterations);
    println!(
        "mean tokens: prompt {:.1} completion {:.1}",
        s.mean_prompt_tokens, s.mean_completion_tokens
    );
    println!("throughput {:.2} instances/s", s.throughput_per_s);
    println!("config fingerprint {}", cfg.fingerprint());

    if let Some(prefix) = out {
        let mut rows = Vec::new();
        for row in &report.rows {
            rows.extend_from_slice(&serde_json::to_vec(row).expect("serializable row"));
            rows.push(b'\n');
        }
        let rows_path = prefix.with_extension("rows.jsonl");
        let summary_path = prefix.with_extension("summary.json");
        write_atomic(&rows_path, &rows)?;
        write_atomic(
            &summary_path,
            &serde_json::to_vec_pretty(&report.summary).expect("serializable summary"),
        )?;
        println!(
            "report -> {} and {}",
            rows_path.display(),
            summary_path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth / annotate / filter
// ---------------------------------------------------------------------------

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::input(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_records(path: &Path, records: &[TrainingRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for r in records {
        buf.extend_from_slice(&serde_json::to_vec(r).expect("serializable record"));
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Corpus-assignment gate: when the config names synthesis corpora, every
/// processed instance must sit in `allowed` and outside `forbidden`.
fn check_corpus(
    id: &str,
    allowed: &[String],
    forbidden: &[String],
    role: &str,
) -> Result<(), CliError> {
    if forbidden.iter().any(|x| x == id) {
        return Err(CliError::input(format!(
            "instance {id} belongs to the other corpus and cannot be used for {role}"
        )));
    }
    if !allowed.is_empty() && !allowed.iter().any(|x| x == id) {
        return Err(CliError::input(format!(
            "instance {id} is not assigned to the {role} corpus"
        )));
    }
    Ok(())
}

fn synthesis_fatal(e: SynthesisError) -> CliError {
    match e {
        SynthesisError::Backend(b) => CliError::backend(b.to_string()),
        SynthesisError::Critic(c) => CliError::backend(c.to_string()),
        other => CliError::input(other.to_string()),
    }
}

pub fn cmd_synth(config_path: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let synthesis = cfg.synthesis.clone().unwrap_or_default();
    let generator = build_backend(&cfg.generator, "generator")?;
    let instances: Vec<SynthInstance> = read_jsonl(input)?;
    let mut kept = Vec::new();
    let mut dropped = 0u64;
    for inst in &instances {
        check_corpus(&inst.id, &synthesis.generator_ids, &synthesis.critic_ids, "generator")?;
        let mut session = generator.as_dyn().session(&inst.id)?;
        match synthesize_rationale(inst, &mut *session) {
            Ok(record) => kept.push(record),
            Err(SynthesisError::ParseFailure(reason)) => {
                eprintln!("dropped {}: {reason}", inst.id);
                dropped += 1;
            }
            Err(e @ SynthesisError::AnswerMismatch { .. }) => {
                eprintln!("dropped {}: {e}", inst.id);
                dropped += 1;
            }
            Err(e) => return Err(synthesis_fatal(e)),
        }
    }
    write_records(out, &kept)?;
    println!("kept {} dropped {} -> {}", kept.len(), dropped, out.display());
    Ok(())
}

#[derive(Deserialize)]
struct AnnotateInput {
    id: String,
    text: String,
}

pub fn cmd_annotate(config_path: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let synthesis = cfg.synthesis.clone().unwrap_or_default();
    let critic_cfg = cfg
        .critic
        .as_ref()
        .ok_or_else(|| CliError::input("annotate needs a [critic] backend in the config"))?;
    let critic = build_backend(critic_cfg, "critic")?;
    let inputs: Vec<AnnotateInput> = read_jsonl(input)?;
    let mut kept = Vec::new();
    let mut dropped = 0u64;
    for item in &inputs {
        check_corpus(&item.id, &synthesis.critic_ids, &synthesis.generator_ids, "critic")?;
        let mut session = critic.as_dyn().session(&item.id)?;
        match annotate_self_critique(&item.text, &item.id, &mut *session) {
            Ok(record) => kept.push(record),
            Err(SynthesisError::Markup(e)) => {
                eprintln!("dropped {}: {e}", item.id);
                dropped += 1;
            }
            Err(SynthesisError::InvalidInput(reason)) => {
                eprintln!("dropped {}: {reason}", item.id);
                dropped += 1;
            }
            Err(e) => return Err(synthesis_fatal(e)),
        }
    }
    write_records(out, &kept)?;
    println!("kept {} dropped {} -> {}", kept.len(), dropped, out.display());
    Ok(())
}

pub fn cmd_filter(
    config_path: &Path,
    input: &Path,
    out: &Path,
    threshold: Option<u8>,
) -> Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let tau_value = threshold.unwrap_or_else(|| {
        cfg.synthesis
            .as_ref()
            .map(|s| s.tau)
            .unwrap_or(4)
    });
    let tau = OutcomeScore::new(tau_value)
        .map_err(|e| CliError::input(format!("bad threshold {tau_value}: {e}")))?;
    let records: Vec<TrainingRecord> = read_jsonl(input)?;
    let report = filter_self_improvement(records, tau);
    write_records(out, &report.kept)?;
    println!(
        "kept {} dropped {} -> {}",
        report.kept.len(),
        report.dropped_below_threshold + report.dropped_missing_outcome,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

pub fn cmd_inspect(input: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", input.display())))?;
    let traj = parse_trajectory(&text, &RewardConfig::fine())
        .map_err(|e| CliError::input(format!("parse error: {e}")))?;
    println!("question: {}", traj.question);
    println!("steps: {}", traj.steps.len());
    println!("{}", step_summary(&traj));
    if let Some(r_c) = traj.r_c {
        println!("cumulative reward: {r_c}");
    }
    println!("answer: {}", traj.answer.as_deref().unwrap_or(""));
    if let Some(score) = traj.outcome {
        println!("outcome score: {}", score.value());
    }
    let rendered = render_prefix(&traj, RenderUpto::End);
    println!(
        "canonical form: {}",
        if rendered == text { "identical" } else { "normalized" }
    );
    Ok(())
}
