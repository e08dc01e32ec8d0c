//! Corpus storage, a self-contained BM25 sparse retriever, a dense-retriever
//! wire client, and hybrid union fusion.

mod dense;
mod index;

pub use dense::{DenseClient, DenseClientConfig};
pub use index::{build_index, search_sparse, tokenize, InvertedIndex, BM25_B, BM25_K1};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::BufRead;
use thiserror::Error;

/// One document of the retrieval corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// Which retriever produced a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sparse,
    Dense,
}

/// Provenance entry: the producing source and its score for this document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub source: Source,
    pub score: f64,
}

/// A scored retrieval result with source provenance.
///
/// Pure sparse/dense hits carry one provenance entry; a document surfaced by
/// both retrievers after fusion carries both, with its per-source scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: String,
    /// Score of the earliest-rank producing source.
    pub score: f64,
    pub sources: Vec<SourceScore>,
}

impl RetrievalHit {
    pub fn sparse(doc_id: impl Into<String>, score: f64) -> Self {
        RetrievalHit {
            doc_id: doc_id.into(),
            score,
            sources: vec![SourceScore {
                source: Source::Sparse,
                score,
            }],
        }
    }

    pub fn dense(doc_id: impl Into<String>, score: f64) -> Self {
        RetrievalHit {
            doc_id: doc_id.into(),
            score,
            sources: vec![SourceScore {
                source: Source::Dense,
                score,
            }],
        }
    }

    pub fn has_source(&self, source: Source) -> bool {
        self.sources.iter().any(|s| s.source == source)
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate doc id: {0}")]
    DuplicateDocId(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed corpus record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("corpus record {id} has empty title or text")]
    EmptyDoc { id: String },
    #[error("transport error talking to dense retriever: {0}")]
    Transport(String),
    #[error("malformed dense retriever response: {0}")]
    MalformedResponse(String),
    #[error("dense retriever returned unknown doc id: {0}")]
    UnknownDocId(String),
    #[error("index file error: {0}")]
    IndexFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An in-memory corpus with id lookup.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<CorpusDoc>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_docs(docs: Vec<CorpusDoc>) -> Result<Self, RetrievalError> {
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.title.is_empty() && d.text.is_empty() {
                return Err(RetrievalError::EmptyDoc { id: d.id.clone() });
            }
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateDocId(d.id.clone()));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    /// Read line-delimited {"id","title","text"} records.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, RetrievalError> {
        let mut docs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: CorpusDoc =
                serde_json::from_str(&line).map_err(|e| RetrievalError::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            docs.push(doc);
        }
        Corpus::from_docs(docs)
    }

    pub fn get(&self, id: &str) -> Option<&CorpusDoc> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[CorpusDoc] {
        &self.docs
    }
}

/// Set union of sparse and dense hit lists, keyed by doc id.
///
/// Output order is a round-robin interleave of the two lists by rank, so
/// neither source dominates the per-document critique budget. A document
/// present in both lists surfaces at its earliest rank and keeps both source
/// tags and per-source scores.
pub fn hybrid_union(sparse: &[RetrievalHit], dense: &[RetrievalHit]) -> Vec<RetrievalHit> {
    let mut out: Vec<RetrievalHit> = Vec::with_capacity(sparse.len() + dense.len());
    let mut pos: HashMap<String, usize> = HashMap::new();
    let max_rank = sparse.len().max(dense.len());
    for rank in 0..max_rank {
        for hit in [sparse.get(rank), dense.get(rank)].into_iter().flatten() {
            match pos.get(&hit.doc_id) {
                Some(&i) => {
                    // Duplicate: keep the earliest rank, merge provenance.
                    out[i].sources.extend(hit.sources.iter().copied());
                }
                None => {
                    pos.insert(hit.doc_id.clone(), out.len());
                    out.push(hit.clone());
                }
            }
        }
    }
    out
}

/// The retrieval surface the search engine depends on.
pub trait Retrieve: Send + Sync {
    fn search(&self, query: &str, top_n: usize) -> Result<Vec<RetrievalHit>, RetrievalError>;
    /// Resolve a hit to its document text ("Title\nBody").
    fn doc_text(&self, doc_id: &str) -> Option<String>;
}

/// Retrieval mode for the production retriever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverMode {
    Sparse,
    Dense,
    Hybrid,
}

/// Production retriever: BM25 over a local index, a dense wire client, or
/// the union of both.
pub struct Retriever {
    pub mode: RetrieverMode,
    pub corpus: Corpus,
    pub index: Option<InvertedIndex>,
    pub dense: Option<DenseClient>,
}

impl Retriever {
    pub fn sparse(corpus: Corpus, index: InvertedIndex) -> Self {
        Retriever {
            mode: RetrieverMode::Sparse,
            corpus,
            index: Some(index),
            dense: None,
        }
    }

    fn dense_hits(&self, query: &str, top_n: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        let client = self
            .dense
            .as_ref()
            .ok_or_else(|| RetrievalError::Transport("no dense endpoint configured".into()))?;
        let hits = client.search(query, top_n)?;
        for h in &hits {
            if !self.corpus.contains(&h.doc_id) {
                return Err(RetrievalError::UnknownDocId(h.doc_id.clone()));
            }
        }
        Ok(hits)
    }
}

impl Retrieve for Retriever {
    fn search(&self, query: &str, top_n: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        match self.mode {
            RetrieverMode::Sparse => {
                let index = self
                    .index
                    .as_ref()
                    .ok_or_else(|| RetrievalError::IndexFormat("no index loaded".into()))?;
                Ok(search_sparse(index, query, top_n))
            }
            RetrieverMode::Dense => self.dense_hits(query, top_n),
            RetrieverMode::Hybrid => {
                let index = self
                    .index
                    .as_ref()
                    .ok_or_else(|| RetrievalError::IndexFormat("no index loaded".into()))?;
                let sparse = search_sparse(index, query, top_n);
                let dense = self.dense_hits(query, top_n)?;
                Ok(hybrid_union(&sparse, &dense))
            }
        }
    }

    fn doc_text(&self, doc_id: &str) -> Option<String> {
        self.corpus
            .get(doc_id)
            .map(|d| format!("{}\n{}", d.title, d.text))
    }
}
