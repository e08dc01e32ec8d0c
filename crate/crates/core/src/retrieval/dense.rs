//! Wire client for an out-of-process dense retriever.
//!
//! Request: POST `{"query": string, "top_n": integer}`.
//! Response: `{"hits": [{"doc_id": string, "score": number}]}`.
//! Embedding computation never happens in-process.

use super::{RetrievalError, RetrievalHit};
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseClientConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Serialize)]
struct DenseRequest<'a> {
    query: &'a str,
    top_n: usize,
}

#[derive(Deserialize)]
struct DenseResponse {
    hits: Vec<DenseHit>,
}

#[derive(Deserialize)]
struct DenseHit {
    doc_id: String,
    score: f64,
}

pub struct DenseClient {
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl DenseClient {
    pub fn new(cfg: &DenseClientConfig) -> Result<Self, RetrievalError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        Ok(DenseClient {
            endpoint: cfg.endpoint.clone(),
            http,
        })
    }

    /// One request per query; hits come back ranked and tagged Dense.
    pub fn search(&self, query: &str, top_n: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        let resp = self
            .http
            .post(&self.endpoint)
            .json(&DenseRequest { query, top_n })
            .send()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(RetrievalError::Transport(format!(
                "dense endpoint returned status {}",
                resp.status()
            )));
        }
        let body: DenseResponse = resp
            .json()
            .map_err(|e| RetrievalError::MalformedResponse(e.to_string()))?;
        for h in &body.hits {
            if !h.score.is_finite() {
                return Err(RetrievalError::MalformedResponse(format!(
                    "non-finite score for {}",
                    h.doc_id
                )));
            }
        }
        Ok(body
            .hits
            .into_iter()
            .map(|h| RetrievalHit::dense(h.doc_id, h.score))
            .collect())
    }
}
