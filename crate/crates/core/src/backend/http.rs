//! Wire client for OpenAI-compatible text-completion servers.
//!
//! Request: POST `{endpoint}` with `{"model", "prompt", "stop",
//! "temperature", "max_tokens", "seed"}`; reply carries `choices[0].text`,
//! `choices[0].finish_reason`, and `usage`. The API key comes from the
//! environment, never from the config file.

use super::{
    BackendError, FinishReason, GenBackend, GenRequest, GenResponse, GenSession, Usage,
};
use serde::{Deserialize, Serialize};
use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub const API_KEY_ENV: &str = "ITERBEAM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Full completions URL, e.g. `http://host:8000/v1/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Line-delimited request/response audit file, when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_path: Option<String>,
}

fn default_timeout_ms() -> u64 {
    120_000
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    stop: Vec<String>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub struct HttpBackend {
    cfg: HttpBackendConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    log: Option<Mutex<std::fs::File>>,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let log = match &cfg.log_path {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| BackendError::Transport(e.to_string()))?,
            )),
            None => None,
        };
        Ok(HttpBackend {
            api_key: std::env::var(API_KEY_ENV).ok(),
            cfg,
            http,
            log,
        })
    }

    fn call_once(&self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        let body = WireRequest {
            model: &self.cfg.model,
            prompt: &req.prefix,
            stop: req.stops.clone(),
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            seed: req.seed,
        };
        let started = Instant::now();
        let mut builder = self.http.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::ServerError(status.as_u16()));
        }
        let wire: WireResponse = resp
            .json()
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let elapsed_us = started.elapsed().as_micros() as u64;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse("no choices".into()))?;
        let finish = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            // The wire protocol does not report which stop matched; attribute
            // the first configured stop found adjacent in a fuller text is
            // not recoverable either, so fall back to the first stop.
            Some("stop") if !req.stops.is_empty() => FinishReason::Stop(req.stops[0].clone()),
            _ => FinishReason::End,
        };
        let usage = wire.usage.unwrap_or_default();
        let out = GenResponse {
            text: choice.text,
            finish,
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
            elapsed_us,
        };
        self.log_exchange(req, &out);
        Ok(out)
    }

    fn log_exchange(&self, req: &GenRequest, resp: &GenResponse) {
        if let Some(log) = &self.log {
            let line = serde_json::json!({ "request": req, "response": resp });
            if let Ok(mut f) = log.lock() {
                let _ = writeln!(f, "{line}");
            }
        }
    }
}

impl GenBackend for HttpBackend {
    fn session(&self, _run_key: &str) -> Result<Box<dyn GenSession + '_>, BackendError> {
        Ok(Box::new(HttpSession { backend: self }))
    }
}

struct HttpSession<'a> {
    backend: &'a HttpBackend,
}

impl GenSession for HttpSession<'_> {
    fn complete(&mut self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        req.validate()?;
        // One retry on transport errors, then the branch fails.
        match self.backend.call_once(req) {
            Err(BackendError::Transport(_)) => self.backend.call_once(req),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP responder for wire-contract tests.
    fn serve_once(status: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                let mut content_len = 0usize;
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim();
                    if let Some(v) = l.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_len = v.trim().parse().unwrap();
                    }
                    if l.is_empty() {
                        break;
                    }
                }
                let mut buf = vec![0u8; content_len];
                reader.read_exact(&mut buf).unwrap();
                let resp = format!(
                    "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}/v1/completions")
    }

    fn backend_for(endpoint: String) -> HttpBackend {
        HttpBackend::new(HttpBackendConfig {
            endpoint,
            model: "test-model".into(),
            timeout_ms: 5_000,
            log_path: None,
        })
        .unwrap()
    }

    #[test]
    fn parses_completion_reply() {
        let endpoint = serve_once(
            "200 OK",
            r#"{"choices":[{"text":"hello there","finish_reason":"stop"}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#,
        );
        let backend = backend_for(endpoint);
        let mut s = backend.session("q").unwrap();
        let resp = s
            .complete(&GenRequest::new("hi").with_stops(&["</s>"]))
            .unwrap();
        assert_eq!(resp.text, "hello there");
        assert_eq!(resp.finish, FinishReason::Stop("</s>".into()));
        assert_eq!(resp.usage.prompt_tokens, 7);
        assert_eq!(resp.usage.completion_tokens, 2);
    }

    #[test]
    fn server_error_status_surfaces() {
        let endpoint = serve_once("500 Internal Server Error", "{}");
        let backend = backend_for(endpoint);
        let mut s = backend.session("q").unwrap();
        assert!(matches!(
            s.complete(&GenRequest::new("hi")).unwrap_err(),
            BackendError::ServerError(500)
        ));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // Reserved port with no listener.
        let backend = backend_for("http://127.0.0.1:9/v1/completions".into());
        let mut s = backend.session("q").unwrap();
        assert!(matches!(
            s.complete(&GenRequest::new("hi")).unwrap_err(),
            BackendError::Transport(_)
        ));
    }

    #[test]
    fn malformed_body_is_malformed_response() {
        let endpoint = serve_once("200 OK", "not json");
        let backend = backend_for(endpoint);
        let mut s = backend.session("q").unwrap();
        assert!(matches!(
            s.complete(&GenRequest::new("hi")).unwrap_err(),
            BackendError::MalformedResponse(_)
        ));
    }
}
