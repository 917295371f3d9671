//! Completion-style HTTP backend with retries and a content-addressed replay cache.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, GenerationRequest};
use crate::corpus::OPTION_CLOSE;
use crate::seeds::sha256_hex;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub url: String,
    /// Name of the environment variable holding a bearer token, if any.
    pub auth_env: Option<String>,
    pub timeout_ms: u64,
    pub attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub cache_dir: Option<PathBuf>,
    /// Serve only from the cache; never touch the network.
    pub replay_only: bool,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000/v1/completions".into(),
            auth_env: None,
            timeout_ms: 60_000,
            attempts: 3,
            backoff_base_ms: 500,
            backoff_cap_ms: 8_000,
            cache_dir: None,
            replay_only: false,
        }
    }
}

/// Raw responses keyed by the SHA-256 of the request body.
#[derive(Debug, Clone)]
pub struct ReplayCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: Value,
    response: String,
}

impl ReplayCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let text = std::fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str::<CacheEntry>(&text).ok().map(|e| e.response)
    }

    pub fn put(&self, key: &str, request: &Value, response: &str) -> Result<(), BackendError> {
        let entry = CacheEntry {
            request: request.clone(),
            response: response.to_string(),
        };
        let text = serde_json::to_string(&entry).map_err(|e| BackendError::Cache(e.to_string()))?;
        // write-then-rename so concurrent workers never see a partial entry
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, self.path(key)))
            .map_err(|e| BackendError::Cache(e.to_string()))
    }
}

pub struct HttpCompletion {
    config: HttpConfig,
    agent: ureq::Agent,
    cache: Option<ReplayCache>,
}

impl std::fmt::Debug for HttpCompletion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpCompletion").field("config", &self.config).finish()
    }
}

impl HttpCompletion {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.attempts == 0 {
            return Err(BackendError::InvalidRequest("attempts must be >= 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let cache = config.cache_dir.as_ref().map(ReplayCache::new).transpose()?;
        if config.replay_only && cache.is_none() {
            return Err(BackendError::InvalidRequest("replay_only needs cache_dir".into()));
        }
        Ok(Self { config, agent, cache })
    }

    pub fn request_body(request: &GenerationRequest) -> Value {
        json!({
            "prompt": format!("{}{}", request.prompt_text, request.prefix),
            "max_tokens": request.max_new_tokens,
            "temperature": request.temperature,
            "stop": [OPTION_CLOSE],
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.backoff_cap_ms);
        Duration::from_millis(ms)
    }

    fn post_once(&self, body: &str) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(var) = &self.config.auth_env {
            if let Ok(token) = std::env::var(var) {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
        }
        let mut resp = req
            .send(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(BackendError::http(status, &text))
        }
    }

    fn is_transient(err: &BackendError) -> bool {
        match err {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }

    fn post(&self, body: &str) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body) {
                Ok(text) => return Ok(text),
                Err(e) if Self::is_transient(&e) && attempt + 1 < self.config.attempts => {
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Completion text from an OpenAI-style or bare `{"text": ...}` response.
pub(crate) fn parse_completion(raw: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(raw).map_err(|e| BackendError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/text")
        .or_else(|| v.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("no choices[0].text or text field".into()))
}

impl Backend for HttpCompletion {
    fn name(&self) -> String {
        format!("http:{}", self.config.url)
    }

    fn generate(&self, request: &GenerationRequest, _seed: u64) -> Result<String, BackendError> {
        request.validate()?;
        let body = Self::request_body(request);
        let body_text = body.to_string();
        let key = sha256_hex(format!("{}\n{}", self.config.url, body_text).as_bytes());
        if let Some(cache) = &self.cache {
            if let Some(raw) = cache.get(&key) {
                return parse_completion(&raw);
            }
            if self.config.replay_only {
                return Err(BackendError::NotCached(key));
            }
        }
        let raw = self.post(&body_text)?;
        let text = parse_completion(&raw)?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &body, &raw)?;
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `responses` in order, one per connection, and counts requests.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((stream, _)) = listener.accept() else { return };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, hits)
    }

    fn config(url: String) -> HttpConfig {
        HttpConfig {
            url,
            timeout_ms: 5_000,
            backoff_base_ms: 1,
            backoff_cap_ms: 4,
            ..HttpConfig::default()
        }
    }

    fn request() -> GenerationRequest {
        GenerationRequest::predict("prompt text\n".into(), None)
    }

    #[test]
    fn retries_transient_failures() {
        let (url, hits) = serve(vec![
            (503, "busy"),
            (500, "oops"),
            (200, r#"{"choices":[{"text":" a caption "}]}"#),
        ]);
        let backend = HttpCompletion::new(config(url)).unwrap();
        assert_eq!(backend.generate(&request(), 0).unwrap(), " a caption ");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (url, hits) = serve(vec![(503, "a"), (503, "b"), (503, "still down"), (200, "{}")]);
        let backend = HttpCompletion::new(config(url)).unwrap();
        match backend.generate(&request(), 0) {
            Err(BackendError::Http { status, body }) => {
                assert_eq!(status, 503);
                assert_eq!(body, "still down");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits) = serve(vec![(400, "bad"), (200, r#"{"text":"x"}"#)]);
        let backend = HttpCompletion::new(config(url)).unwrap();
        assert!(matches!(backend.generate(&request(), 0), Err(BackendError::Http { status: 400, .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_cache_serves_offline() {
        let dir = tempfile::tempdir().unwrap();
        let (url, hits) = serve(vec![(200, r#"{"text":" cached </option>"}"#)]);
        let mut cfg = config(url);
        cfg.cache_dir = Some(dir.path().to_path_buf());
        let online = HttpCompletion::new(cfg.clone()).unwrap();
        assert_eq!(online.generate(&request(), 0).unwrap(), " cached </option>");
        cfg.replay_only = true;
        let offline = HttpCompletion::new(cfg).unwrap();
        assert_eq!(offline.generate(&request(), 9).unwrap(), " cached </option>");
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        let mut other = request();
        other.prompt_text.push('!');
        assert!(matches!(offline.generate(&other, 0), Err(BackendError::NotCached(_))));
    }

    #[test]
    fn body_shape() {
        let body = HttpCompletion::request_body(&request());
        assert_eq!(body["prompt"], "prompt text\nPrediction: <option>");
        assert_eq!(body["stop"][0], "</option>");
        assert_eq!(body["max_tokens"], GenerationRequest::DEFAULT_MAX_NEW_TOKENS);
    }

    #[test]
    fn parses_both_response_shapes() {
        assert_eq!(parse_completion(r#"{"choices":[{"text":"a"}]}"#).unwrap(), "a");
        assert_eq!(parse_completion(r#"{"text":"b"}"#).unwrap(), "b");
        assert!(parse_completion(r#"{"nope":1}"#).is_err());
    }
}
