//! Chat-completion backends: an OpenAI-compatible HTTP client, the offline gloss mock, and a
//! disk cache that wraps either.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{strip_trace, TraceMarker};

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_PARALLELISM: usize = 4;
pub const MOCK_MODEL: &str = "gloss-baseline";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts: {message}")]
    RateLimit { attempts: u32, message: String },
    #[error("timed out after {attempts} attempts: {message}")]
    Timeout { attempts: u32, message: String },
    #[error("backend error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Parse(String),
    #[error("mock backend: {0}")]
    Mock(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model: model.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default)]
    pub retries: u32,
    #[serde(default)]
    pub cached: bool,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Word-by-word substitution using the trace marker embedded by `build_prompt`: the first
/// gloss of each covered token, uncovered tokens copied through. A query with no covered
/// token comes back verbatim.
pub fn mock_gloss_translate(prompt: &str) -> Result<String, LlmError> {
    let marker = TraceMarker::parse(prompt)
        .ok_or_else(|| LlmError::Mock("prompt carries no parseable gloss trace".into()))?;
    if marker.tokens.iter().all(|(_, g)| g.is_none()) {
        return Ok(marker.sentence);
    }
    let words: Vec<&str> = marker
        .tokens
        .iter()
        .map(|(surface, gloss)| gloss.as_deref().unwrap_or(surface))
        .collect();
    Ok(words.join(&marker.joiner))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn name(&self) -> String {
        "mock".into()
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        req.validate()?;
        Ok(LlmResponse {
            text: mock_gloss_translate(&req.prompt)?,
            latency_ms: 0,
            backend: self.name(),
            usage: None,
            retries: 0,
            cached: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based), with up to 25% random jitter.
    pub fn delay(&self, retry: u32) -> Duration {
        let d = self.base.as_secs_f64() * self.factor.powi(retry as i32);
        let j = if self.jitter { 1.0 + rand::random::<f64>() * 0.25 } else { 1.0 };
        Duration::from_secs_f64(d * j)
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ChatReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(LlmResponse),
    Retry(LlmError),
    Fail(LlmError),
}

/// OpenAI-compatible `chat/completions` client.
pub struct HttpBackend {
    endpoint: url::Url,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpBackend {
    /// `endpoint` is the API base (e.g. `https://api.openai.com/v1`) or a full
    /// `.../chat/completions` URL.
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, LlmError> {
        let mut url = url::Url::parse(endpoint)
            .map_err(|e| LlmError::Config(format!("invalid endpoint `{endpoint}`: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
            return Err(LlmError::Config(format!("invalid endpoint `{endpoint}`: need an http(s) URL")));
        }
        if !url.path().ends_with("/chat/completions") {
            let path = format!("{}/chat/completions", url.path().trim_end_matches('/'));
            url.set_path(&path);
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint: url,
            api_key,
            agent,
            retry: RetryPolicy::default(),
        })
    }

    /// Reads the credential from the environment variable `key_env`.
    pub fn from_env(endpoint: &str, key_env: &str, timeout: Duration) -> Result<Self, LlmError> {
        let key = std::env::var(key_env)
            .map_err(|_| LlmError::Config(format!("environment variable {key_env} is not set")))?;
        Self::new(endpoint, Some(key), timeout)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        self.endpoint.as_str()
    }

    fn attempt(&self, req: &LlmRequest) -> Attempt {
        let body = ChatBody {
            model: &req.model,
            messages: [ChatMessage {
                role: "user",
                content: &strip_trace(&req.prompt),
            }],
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            stop: &req.stop,
        };
        let mut call = self.agent.post(self.endpoint.as_str());
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let mut resp = match call.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => {
                return Attempt::Retry(LlmError::Timeout {
                    attempts: 0,
                    message: t.to_string(),
                })
            }
            Err(e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound)) => {
                return Attempt::Retry(LlmError::Api {
                    status: 0,
                    message: e.to_string(),
                })
            }
            Err(e) => return Attempt::Fail(LlmError::Api {
                status: 0,
                message: e.to_string(),
            }),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => {
                let reply: ChatReply = match serde_json::from_str(&text) {
                    Ok(r) => r,
                    Err(e) => return Attempt::Fail(LlmError::Parse(e.to_string())),
                };
                match reply.choices.into_iter().next().and_then(|c| c.message.content) {
                    Some(content) => Attempt::Done(LlmResponse {
                        text: content,
                        latency_ms,
                        backend: format!("http:{}", req.model),
                        usage: reply.usage,
                        retries: 0,
                        cached: false,
                    }),
                    None => Attempt::Fail(LlmError::Parse("response has no completion text".into())),
                }
            }
            401 | 403 => Attempt::Fail(LlmError::Auth(text)),
            429 => Attempt::Retry(LlmError::RateLimit {
                attempts: 0,
                message: text,
            }),
            408 | 500..=599 => Attempt::Retry(LlmError::Api { status, message: text }),
            _ => Attempt::Fail(LlmError::Api { status, message: text }),
        }
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        req.validate()?;
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(req) {
                Attempt::Done(mut r) => {
                    r.retries = attempt - 1;
                    return Ok(r);
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= max => {
                    return Err(match e {
                        LlmError::RateLimit { message, .. } => LlmError::RateLimit { attempts: attempt, message },
                        LlmError::Timeout { message, .. } => LlmError::Timeout { attempts: attempt, message },
                        other => other,
                    })
                }
                Attempt::Retry(e) => {
                    log::warn!("attempt {attempt} failed ({e}); retrying");
                    std::thread::sleep(self.retry.delay(attempt - 1));
                }
            }
        }
    }
}

/// Cache key: sha256 over model id and prompt.
pub fn cache_key(model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

/// Stores one JSON response per `(model, prompt)` hash under `dir`.
pub struct CachedBackend {
    inner: Arc<dyn Backend>,
    dir: PathBuf,
    write_lock: Mutex<()>,
    calls: AtomicUsize,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn Backend>, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| LlmError::Config(format!("cache directory {}: {e}", dir.display())))?;
        Ok(Self {
            inner,
            dir,
            write_lock: Mutex::new(()),
            calls: AtomicUsize::new(0),
        })
    }

    /// Requests forwarded to the wrapped backend since construction.
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, req: &LlmRequest) -> PathBuf {
        self.dir.join(format!("{}.json", cache_key(&req.model, &req.prompt)))
    }
}

impl Backend for CachedBackend {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let path = self.path(req);
        if let Ok(text) = fs::read_to_string(&path) {
            match serde_json::from_str::<LlmResponse>(&text) {
                Ok(mut r) => {
                    r.cached = true;
                    return Ok(r);
                }
                Err(e) => log::warn!("ignoring corrupt cache entry {}: {e}", path.display()),
            }
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let resp = self.inner.complete(req)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = path.with_extension("tmp");
        let json = serde_json::to_string_pretty(&resp).map_err(|e| LlmError::Parse(e.to_string()))?;
        if let Err(e) = fs::write(&tmp, json).and_then(|_| fs::rename(&tmp, &path)) {
            log::warn!("could not write cache entry {}: {e}", path.display());
        }
        Ok(resp)
    }
}

/// Runs every request with at most `parallelism` in flight; results keep request order.
pub fn complete_all(
    backend: &dyn Backend,
    requests: &[LlmRequest],
    parallelism: usize,
) -> Vec<Result<LlmResponse, LlmError>> {
    let workers = parallelism.max(1).min(requests.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<LlmResponse, LlmError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= requests.len() {
                    break;
                }
                let r = backend.complete(&requests[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub parallelism: usize,
    pub timeout_secs: u64,
    /// Response cache directory; relative paths resolve against the run's output directory.
    pub cache_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model: MOCK_MODEL.into(),
            endpoint: None,
            api_key_env: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
            parallelism: DEFAULT_PARALLELISM,
            timeout_secs: 120,
            cache_dir: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.parallelism == 0 {
            return Err(LlmError::Config("parallelism must be at least 1".into()));
        }
        self.request("").validate()?;
        if self.kind == BackendKind::Http {
            let endpoint = self
                .endpoint
                .as_deref()
                .ok_or_else(|| LlmError::Config("http backend needs an endpoint".into()))?;
            HttpBackend::new(endpoint, None, Duration::from_secs(self.timeout_secs))?;
        }
        Ok(())
    }

    pub fn request(&self, prompt: impl Into<String>) -> LlmRequest {
        LlmRequest {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            ..LlmRequest::new(prompt, self.model.clone())
        }
    }

    /// Builds the backend without the cache layer.
    pub fn build(&self) -> Result<Arc<dyn Backend>, LlmError> {
        self.validate()?;
        match self.kind {
            BackendKind::Mock => Ok(Arc::new(MockBackend)),
            BackendKind::Http => {
                let endpoint = self.endpoint.as_deref().unwrap_or_default();
                let timeout = Duration::from_secs(self.timeout_secs);
                let b = match &self.api_key_env {
                    Some(var) => HttpBackend::from_env(endpoint, var, timeout)?,
                    None => HttpBackend::new(endpoint, None, timeout)?,
                };
                Ok(Arc::new(b))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::TraceMarker;

    fn marker(joiner: &str, tokens: &[(&str, Option<&str>)]) -> String {
        TraceMarker {
            sentence: tokens.iter().map(|t| t.0).collect::<Vec<_>>().join(" "),
            joiner: joiner.into(),
            tokens: tokens
                .iter()
                .map(|(s, g)| (s.to_string(), g.map(str::to_string)))
                .collect(),
        }
        .render()
            + "\nrest of prompt"
    }

    #[test]
    fn mock_substitutes_glosses() {
        let p = marker("", &[("Mbanj", Some("村")), ("dou", Some("我们"))]);
        assert_eq!(mock_gloss_translate(&p).unwrap(), "村我们");
        let p = marker(" ", &[("我们", Some("dou")), ("猫", None), ("村", Some("mbanj"))]);
        assert_eq!(mock_gloss_translate(&p).unwrap(), "dou 猫 mbanj");
    }

    #[test]
    fn mock_zero_coverage_is_verbatim() {
        let p = marker(" ", &[("猫", None), ("狗", None)]);
        assert_eq!(mock_gloss_translate(&p).unwrap(), "猫 狗");
    }

    #[test]
    fn mock_rejects_plain_prompt() {
        assert!(matches!(mock_gloss_translate("translate this"), Err(LlmError::Mock(_))));
    }

    #[test]
    fn malformed_endpoint_is_config_error() {
        for bad in ["not a url", "ftp://example.com/v1", "http://"] {
            assert!(
                matches!(HttpBackend::new(bad, None, Duration::from_secs(1)), Err(LlmError::Config(_))),
                "{bad}"
            );
        }
        let b = HttpBackend::new("https://api.example.com/v1/", None, Duration::from_secs(1)).unwrap();
        assert_eq!(b.endpoint(), "https://api.example.com/v1/chat/completions");
    }

    #[test]
    fn request_validation() {
        let mut r = LlmRequest::new("x", "m");
        assert!(r.validate().is_ok());
        r.max_tokens = 0;
        assert!(r.validate().is_err());
        r.max_tokens = 1;
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn cache_serves_repeat_requests() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedBackend::new(Arc::new(MockBackend), dir.path()).unwrap();
        let req = LlmRequest::new(marker(" ", &[("村", Some("mbanj"))]), MOCK_MODEL);
        let a = cached.complete(&req).unwrap();
        let b = cached.complete(&req).unwrap();
        assert_eq!(a.text, b.text);
        assert!(!a.cached && b.cached);
        assert_eq!(cached.backend_calls(), 1);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn complete_all_keeps_order() {
        let reqs: Vec<_> = (0..23)
            .map(|i| LlmRequest::new(marker(" ", &[(&format!("w{i}"), Some(&format!("g{i}")))]), MOCK_MODEL))
            .collect();
        let out = complete_all(&MockBackend, &reqs, 4);
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().text, format!("g{i}"));
        }
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            jitter: false,
            ..RetryPolicy::default()
        };
        assert_eq!(p.delay(0), Duration::from_secs(1));
        assert_eq!(p.delay(3), Duration::from_secs(8));
    }
}
