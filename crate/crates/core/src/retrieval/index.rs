//! Inverted index construction, Okapi BM25 scoring, and the versioned
//! binary index file format.
//!
//! The index is immutable after build. Building is deterministic regardless
//! of corpus input ordering: documents are sorted by id before internal ids
//! are assigned, and postings live in ordered maps, so the serialized index
//! is bit-exact across platforms for the same corpus.

use super::{Corpus, RetrievalError, RetrievalHit};
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

const MAGIC: &[u8; 4] = b"IBIX";
const FORMAT_VERSION: u8 = 1;

/// Lowercase, split on non-alphanumeric, drop empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Term -> postings inverted index with per-document lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// Term -> (internal doc id, term frequency), postings sorted by doc id.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    /// Internal id -> external doc id, sorted lexicographically.
    doc_ids: Vec<String>,
    /// Internal id -> token count.
    doc_len: Vec<u32>,
    avg_len: f64,
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_id(&self, internal: u32) -> &str {
        &self.doc_ids[internal as usize]
    }

    pub fn postings(&self, term: &str) -> Option<&[(u32, u32)]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    /// Serialize to the versioned binary format (little-endian throughout).
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[FORMAT_VERSION])?;
        w.write_all(&(self.doc_ids.len() as u32).to_le_bytes())?;
        w.write_all(&self.avg_len.to_le_bytes())?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_len) {
            write_str(w, id)?;
            w.write_all(&len.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u32).to_le_bytes())?;
        for (term, list) in &self.postings {
            write_str(w, term)?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for (doc, tf) in list {
                w.write_all(&doc.to_le_bytes())?;
                w.write_all(&tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, RetrievalError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(RetrievalError::IndexFormat("bad magic".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != FORMAT_VERSION {
            return Err(RetrievalError::IndexFormat(format!(
                "unsupported format version {}",
                version[0]
            )));
        }
        let n = read_u32(r)? as usize;
        let avg_len = f64::from_le_bytes(read_array(r)?);
        let mut doc_ids = Vec::with_capacity(n);
        let mut doc_len = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(read_str(r)?);
            doc_len.push(read_u32(r)?);
        }
        let terms = read_u32(r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let term = read_str(r)?;
            let len = read_u32(r)? as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let doc = read_u32(r)?;
                let tf = read_u32(r)?;
                if doc as usize >= n {
                    return Err(RetrievalError::IndexFormat("posting doc out of range".into()));
                }
                list.push((doc, tf));
            }
            postings.insert(term, list);
        }
        Ok(InvertedIndex {
            postings,
            doc_ids,
            doc_len,
            avg_len,
        })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, RetrievalError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], RetrievalError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, RetrievalError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| RetrievalError::IndexFormat(e.to_string()))
}

/// Build the index over a corpus. Documents are indexed over "title text".
pub fn build_index(corpus: &Corpus) -> Result<InvertedIndex, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut ordered: Vec<_> = corpus.docs().iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut doc_ids = Vec::with_capacity(ordered.len());
    let mut doc_len = Vec::with_capacity(ordered.len());
    for (internal, doc) in ordered.iter().enumerate() {
        let tokens = tokenize(&format!("{} {}", doc.title, doc.text));
        doc_len.push(tokens.len() as u32);
        doc_ids.push(doc.id.clone());
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, count) in tf {
            postings
                .entry(term.to_string())
                .or_default()
                .push((internal as u32, count));
        }
    }
    let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
    let avg_len = total as f64 / doc_len.len() as f64;
    Ok(InvertedIndex {
        postings,
        doc_ids,
        doc_len,
        avg_len,
    })
}

/// Okapi BM25 search. Documents sharing no query term are excluded; hits are
/// sorted by score descending, ties by doc id ascending, truncated to
/// `top_n`. An empty query yields an empty result.
pub fn search_sparse(index: &InvertedIndex, query: &str, top_n: usize) -> Vec<RetrievalHit> {
    let terms = tokenize(query);
    if terms.is_empty() || top_n == 0 {
        return Vec::new();
    }
    let n = index.num_docs() as f64;
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for term in &terms {
        let Some(list) = index.postings.get(term) else {
            continue;
        };
        let df = list.len() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        for &(doc, tf) in list {
            let dl = f64::from(index.doc_len[doc as usize]);
            let tf = f64::from(tf);
            let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * dl / index.avg_len);
            let contrib = idf * tf * (BM25_K1 + 1.0) / (tf + norm);
            *scores.entry(doc).or_default() += contrib;
        }
    }
    let mut hits: Vec<(u32, f64)> = scores.into_iter().collect();
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| index.doc_id(a.0).cmp(index.doc_id(b.0)))
    });
    hits.truncate(top_n);
    hits.into_iter()
        .map(|(doc, score)| RetrievalHit::sparse(index.doc_id(doc), score))
        .collect()
}
