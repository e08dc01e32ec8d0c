//! Deterministic fixtures shared by the criterion benchmarks.

use iterbeam_core::retrieval::{Corpus, CorpusDoc};

const WORDS: &[&str] = &[
    "county", "river", "film", "director", "state", "border", "novel", "capital", "mountain",
    "treaty", "senate", "festival", "harbor", "railway", "orchestra", "province", "island",
    "cathedral", "archive", "meridian", "glacier", "dynasty", "customs", "lagoon", "summit",
    "charter", "basin", "parish", "garrison", "foundry", "almanac", "viaduct",
];

/// A synthetic corpus with overlapping vocabulary, sized for retrieval
/// benchmarks. Deterministic: the same `n` always yields the same docs.
pub fn synthetic_corpus(n: usize) -> Corpus {
    let docs = (0..n)
        .map(|i| {
            let mut text = String::new();
            // Mix a few shared terms with doc-specific ones so postings
            // lists have realistic, varied lengths.
            for j in 0..24 {
                let idx = (i * 7 + j * 13 + i * j) % WORDS.len();
                text.push_str(WORDS[idx]);
                text.push(' ');
            }
            text.push_str(&format!("marker{i}"));
            CorpusDoc {
                id: format!("d{i:05}"),
                title: format!("{} {}", WORDS[i % WORDS.len()], WORDS[(i / 3) % WORDS.len()]),
                text,
            }
        })
        .collect();
    Corpus::from_docs(docs).expect("synthetic corpus is well formed")
}

/// Queries that hit common and rare terms alike.
pub fn queries() -> Vec<String> {
    (0..16)
        .map(|q| {
            format!(
                "{} {} {} marker{}",
                WORDS[q % WORDS.len()],
                WORDS[(q * 5) % WORDS.len()],
                WORDS[(q * 11) % WORDS.len()],
                q * 37
            )
        })
        .collect()
}

/// A fully labeled three-step trajectory in canonical markup, used for the
/// parse and render benchmarks.
pub fn labeled_trajectory_text() -> String {
    let mut text = String::from("Question: which charter governs the northern parish?\n");
    for step in 0..3 {
        text.push_str("[Non-Atomic Question]\n");
        text.push_str(&format!("<sub-question> what about hop {step}?\n"));
        text.push_str(&format!(
            "<paragraph>Charter {step}\nThe charter of hop {step} names the next authority in \
             the chain of custody for the parish records.</paragraph>\n"
        ));
        text.push_str("Retrieval Quality: [Relevant]\n");
        text.push_str(&format!(
            "Reasoning: From Document, hop {step} points to the next authority.\n"
        ));
        text.push_str("</sub-question> Reasoning Quality: [Fully supported]\n");
        text.push_str(&format!("[Remaining Question] what remains after hop {step}?\n"));
    }
    text.push_str("[Atomic Question]\n");
    text.push_str(
        "<paragraph>Final Charter\nThe final charter is the parish charter of 1851.</paragraph>\n",
    );
    text.push_str("Retrieval Quality: [Relevant]\n");
    text.push_str("Reasoning: From Document, the governing charter is the parish charter of 1851.\n");
    text.push_str("Reasoning Quality: [Fully supported]\n");
    text.push_str("[Final Answer] @@the parish charter of 1851@@\n");
    text.push_str("Overall Reasoning Quality: [4]\n");
    text
}
