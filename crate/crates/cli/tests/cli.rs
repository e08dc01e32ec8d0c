//! End-to-end tests of the `iterbeam` binary: exit-code contract, printed
//! surfaces, and artifact files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iterbeam"))
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exits normally")
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().expect("tempdir"),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, contents).expect("fixture write");
        p
    }

    fn corpus(&self) -> PathBuf {
        self.write(
            "corpus.jsonl",
            concat!(
                r#"{"id": "d1", "title": "Maine", "text": "Maine has sixteen counties."}"#,
                "\n",
                r#"{"id": "d2", "title": "New England", "text": "Maine is the largest state in New England."}"#,
                "\n",
                r#"{"id": "d3", "title": "The Family Stone", "text": "The film is set in a New England town."}"#,
                "\n",
            ),
        )
    }

    /// A config with a scripted generator (and optionally critic) backend.
    fn config(&self, name: &str, script: &Path, extra: &str) -> PathBuf {
        self.write(
            name,
            &format!(
                "[retriever]\ncorpus = {:?}\n\n[generator]\nkind = \"scripted\"\nscript = {:?}\n\n{extra}",
                self.corpus().to_str().unwrap(),
                script.to_str().unwrap(),
            ),
        )
    }
}

fn answer_script() -> String {
    serde_json::json!({
        "default": [
            "[Atomic Question]\n<paragraph>",
            "Retrieval Quality: [Relevant]\nReasoning: From Document, we know that there are sixteen counties in Maine.\nReasoning Quality: [Fully supported]\n[Final Answer] @@sixteen@@\nOverall Reasoning Quality: [4]\n"
        ],
        "runs": {}
    })
    .to_string()
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

#[test]
fn index_reports_doc_count_and_is_deterministic() {
    let fx = Fixture::new();
    let corpus = fx.corpus();
    let out1 = fx.path("a.idx");
    let out2 = fx.path("b.idx");
    let run1 = bin()
        .args(["index", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&out1)
        .output()
        .unwrap();
    assert_eq!(code(&run1), 0, "{}", stderr(&run1));
    assert!(stdout(&run1).contains("3 documents indexed"));
    let run2 = bin()
        .args(["index", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert_eq!(code(&run2), 0);
    assert_eq!(
        fs::read(&out1).unwrap(),
        fs::read(&out2).unwrap(),
        "rebuild over the same corpus must be byte-identical"
    );
}

#[test]
fn index_rejects_empty_corpus() {
    let fx = Fixture::new();
    let empty = fx.write("empty.jsonl", "");
    let out = bin()
        .args(["index", "--corpus"])
        .arg(&empty)
        .arg("--out")
        .arg(fx.path("x.idx"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("empty corpus"));
}

// ---------------------------------------------------------------------------
// ask
// ---------------------------------------------------------------------------

#[test]
fn ask_prints_the_answer_and_writes_artifacts() {
    let fx = Fixture::new();
    let script = fx.write("script.json", &answer_script());
    let config = fx.config("config.toml", &script, "[search]\nmode = \"guided_greedy\"\n");
    let record = fx.path("run.json");
    let audit = fx.path("audit.jsonl");
    let out = bin()
        .args(["ask", "--config"])
        .arg(&config)
        .args(["--question", "How many counties are there in Maine?"])
        .arg("--out")
        .arg(&record)
        .arg("--audit")
        .arg(&audit)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("answer: sixteen"), "{text}");
    assert!(text.contains("outcome score: 4"), "{text}");
    let record_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&record).unwrap()).unwrap();
    assert_eq!(record_json["chosen"]["answer"], "sixteen");
    let audit_lines = fs::read_to_string(&audit).unwrap().lines().count();
    assert!(audit_lines >= 1, "audit covers every branch");
}

#[test]
fn ask_exits_3_when_the_budget_runs_out_unanswered() {
    let fx = Fixture::new();
    let script = fx.write(
        "script.json",
        &serde_json::json!({
            "default": [
                "[Non-Atomic Question]\n<sub-question> what first?\n<paragraph>",
                "Retrieval Quality: [Relevant]\nReasoning: progress.\n</sub-question> Reasoning Quality: [Fully supported]\n[Remaining Question] what next?\n"
            ],
            "runs": {}
        })
        .to_string(),
    );
    let config = fx.config(
        "config.toml",
        &script,
        "[search]\nmode = \"guided_greedy\"\nmax_iterations = 1\n",
    );
    let out = bin()
        .args(["ask", "--config"])
        .arg(&config)
        .args(["--question", "unanswerable?"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn ask_exits_4_on_unreachable_backend() {
    let fx = Fixture::new();
    let config = fx.write(
        "config.toml",
        &format!(
            "[retriever]\ncorpus = {:?}\n\n[generator]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:1/v1/completions\"\nmodel = \"m\"\n",
            fx.corpus().to_str().unwrap(),
        ),
    );
    let out = bin()
        .args(["ask", "--config"])
        .arg(&config)
        .args(["--question", "anything?"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[test]
fn bench_reports_mean_f1_over_scripted_instances() {
    let fx = Fixture::new();
    let mut runs = serde_json::Map::new();
    for i in 0..3 {
        runs.insert(
            format!("Maine question {i}?"),
            serde_json::json!([
                "[Atomic Question]\n<paragraph>",
                format!("Retrieval Quality: [Relevant]\nReasoning: direct.\nReasoning Quality: [Fully supported]\n[Final Answer] @@answer {i}@@\nOverall Reasoning Quality: [5]\n")
            ]),
        );
    }
    let script = fx.write(
        "script.json",
        &serde_json::json!({"default": [], "runs": runs}).to_string(),
    );
    let dataset = fx.write(
        "dev.jsonl",
        &(0..3)
            .map(|i| {
                format!(
                    r#"{{"id": "i{i}", "question": "Maine question {i}?", "answer": "answer {i}"}}"#
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
    );
    let config = fx.config("config.toml", &script, "[search]\nmode = \"guided_greedy\"\n");
    let report = fx.path("report");
    let out = bin()
        .args(["bench", "--config"])
        .arg(&config)
        .arg("--dataset")
        .arg(&dataset)
        .args(["--parallelism", "2"])
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mean F1 1.0000"), "{text}");
    assert!(text.contains("instances 3  errors 0"), "{text}");
    let rows = fs::read_to_string(fx.path("report.rows.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(fx.path("report.summary.json").exists());
}

#[test]
fn bench_exits_2_naming_the_malformed_dataset_line() {
    let fx = Fixture::new();
    let script = fx.write("script.json", &answer_script());
    let dataset = fx.write(
        "bad.jsonl",
        "{\"id\": \"a\", \"question\": \"q?\", \"answer\": \"x\"}\n{oops\n",
    );
    let config = fx.config("config.toml", &script, "");
    let out = bin()
        .args(["bench", "--config"])
        .arg(&config)
        .arg("--dataset")
        .arg(&dataset)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

// ---------------------------------------------------------------------------
// synth / annotate / filter
// ---------------------------------------------------------------------------

#[test]
fn synth_emits_one_record_for_the_two_hop_exemplar() {
    let fx = Fixture::new();
    let rationale = "### Decompose the multi-hop question into sub-questions\n\
1. Who directed the film?\n2. What is that director's nationality?\n\n\
### Sub-question: Who directed the film Cuidado Con Las Imitaciones?\n\
From Document #1, we know that the film was directed by Luis Bayon Herrera.\n\n\
### Remaining Question: What is the nationality of Luis Bayon Herrera?\n\
From Document #2, we know that Luis Bayon Herrera was a Spanish film director.\n\n\
### Final Answer\n@@Spanish@@\n";
    let script = fx.write(
        "gen.json",
        &serde_json::json!({"default": [], "runs": {"x1": [rationale]}}).to_string(),
    );
    let input = fx.write(
        "seed.jsonl",
        &serde_json::json!({
            "id": "x1",
            "question": "What nationality is the director of film Cuidado Con Las Imitaciones?",
            "answer": "Spanish",
            "documents": [
                "Cuidado con las imitaciones\nA 1948 Argentine film directed by Luis Bayon Herrera.",
                "Luis Bayon Herrera\nA Spanish film director who worked in Argentine film."
            ]
        })
        .to_string(),
    );
    let config = fx.config(
        "config.toml",
        &script,
        "[synthesis]\ngenerator_ids = [\"x1\"]\ncritic_ids = [\"c1\"]\n",
    );
    let out_path = fx.path("records.jsonl");
    let out = bin()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 1 dropped 0"));
    let line = fs::read_to_string(&out_path).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(record["instance_id"], "x1");
    let text: String = record["segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["text"].as_str().unwrap())
        .collect();
    assert!(text.contains("@@Spanish@@"));
}

#[test]
fn synth_exits_2_on_corpus_violation() {
    let fx = Fixture::new();
    let script = fx.write("gen.json", &answer_script());
    let input = fx.write(
        "seed.jsonl",
        r#"{"id": "c1", "question": "q?", "answer": "a", "documents": ["T\nb"]}"#,
    );
    let config = fx.config(
        "config.toml",
        &script,
        "[synthesis]\ngenerator_ids = [\"x1\"]\ncritic_ids = [\"c1\"]\n",
    );
    let out = bin()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(fx.path("r.jsonl"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("c1"), "{}", stderr(&out));
}

#[test]
fn annotate_then_filter_round_trip() {
    let fx = Fixture::new();
    let unlabeled = "Question: who made it?\n\
[Atomic Question]\n\
<paragraph>Maker\nThe maker made it.</paragraph>\n\
Reasoning: From Document, the maker made it.\n\
[Final Answer] @@the maker@@\n";
    let input = fx.write(
        "unlabeled.jsonl",
        &serde_json::json!({"id": "c1", "text": unlabeled}).to_string(),
    );
    let critic_script = fx.write(
        "critic.json",
        &serde_json::json!({
            "default": [
                "Rating: [Relevant]\nExplanation: on point.",
                "Rating: [Fully supported]\nExplanation: direct.",
                "Rating: [5]\nExplanation: clean."
            ],
            "runs": {}
        })
        .to_string(),
    );
    let gen_script = fx.write("gen.json", &answer_script());
    let config = fx.config(
        "config.toml",
        &gen_script,
        &format!(
            "[critic]\nkind = \"scripted\"\nscript = {:?}\n\n[synthesis]\ngenerator_ids = [\"x1\"]\ncritic_ids = [\"c1\"]\n",
            critic_script.to_str().unwrap()
        ),
    );
    let annotated = fx.path("annotated.jsonl");
    let out = bin()
        .args(["annotate", "--config"])
        .arg(&config)
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(&annotated)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 1 dropped 0"));

    // The annotated record re-parses and carries the critic's labels.
    let record: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&annotated).unwrap().lines().next().unwrap())
            .unwrap();
    let text: String = record["segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["text"].as_str().unwrap())
        .collect();
    assert!(text.contains("Retrieval Quality: [Relevant]"), "{text}");
    assert!(text.contains("Overall Reasoning Quality: [5]"), "{text}");

    // Filter a 4-record fixture at the default threshold: keeps 2, drops 2.
    let mut records = String::new();
    for (i, outcome) in [Some(5u8), Some(4), Some(3), None].iter().enumerate() {
        let mut v = serde_json::json!({
            "instance_id": format!("r{i}"),
            "segments": [{"role": "generation", "text": "g"}],
            "provenance": "phase3",
        });
        if let Some(o) = outcome {
            v["outcome"] = serde_json::json!(o);
        }
        records.push_str(&v.to_string());
        records.push('\n');
    }
    let filter_in = fx.write("records.jsonl", &records);
    let filtered = fx.path("filtered.jsonl");
    let out = bin()
        .args(["filter", "--config"])
        .arg(&config)
        .arg("--in")
        .arg(&filter_in)
        .arg("--out")
        .arg(&filtered)
        .args(["--threshold", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 2 dropped 2"), "{}", stdout(&out));
    assert_eq!(fs::read_to_string(&filtered).unwrap().lines().count(), 2);
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

#[test]
fn inspect_prints_structure_and_rejects_garbage() {
    let fx = Fixture::new();
    let good = fx.write(
        "traj.txt",
        "Question: how many?\n\
[Atomic Question]\n\
<paragraph>Counts\nThere are sixteen.</paragraph>\n\
Retrieval Quality: [Relevant]\n\
Reasoning: From Document, there are sixteen.\n\
Reasoning Quality: [Fully supported]\n\
[Final Answer] @@sixteen@@\n\
Overall Reasoning Quality: [4]\n",
    );
    let out = bin().args(["inspect", "--in"]).arg(&good).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("answer: sixteen"), "{text}");
    assert!(text.contains("canonical form: identical"), "{text}");

    let bad = fx.write("bad.txt", "not a trajectory at all");
    let out = bin().args(["inspect", "--in"]).arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn version_names_the_fingerprint_schema() {
    let out = bin().arg("--version").output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("config fingerprint schema 1"));
}
