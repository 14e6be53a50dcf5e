//! Chat-completion client with a content-addressed response cache.
//!
//! Every request is keyed by a SHA-256 digest of the model id, sampling
//! parameters, and full prompt text. In `record` mode responses are written
//! to one file per key (filename = hex digest, content = raw response text);
//! in `replay` mode the cache is the only source and no network transport is
//! even constructed, so replay runs are offline by construction.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ENV_LLM_URL: &str = "STATEPIPE_LLM_URL";
pub const ENV_LLM_KEY: &str = "STATEPIPE_LLM_KEY";
pub const ENV_VLM_URL: &str = "STATEPIPE_VLM_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Live,
    Replay,
    Record,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Mode::Live),
            "replay" => Ok(Mode::Replay),
            "record" => Ok(Mode::Record),
            other => Err(Error::Config(format!(
                "unknown mode {other}; expected live, replay, or record"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completion wire request. `image_b64` carries an optional frame
/// attachment for vision backends and is omitted from the JSON when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

/// Anything that can answer a chat request with assistant text.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String>;
}

/// Transport backed by a closure; used for scripted tests.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> std::result::Result<String, String> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        (self.0)(request)
    }
}

/// Transport answering from a fixed prompt -> response table.
pub struct LookupTransport {
    pub responses: HashMap<String, String>,
}

impl Transport for LookupTransport {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let prompt = prompt_text(request);
        self.responses
            .get(&prompt)
            .cloned()
            .ok_or_else(|| "no scripted response for prompt".to_string())
    }
}

/// HTTP transport speaking the chat-completion protocol.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(url: String, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpTransport {
            url,
            api_key,
            client,
        })
    }

    pub fn from_env(url_var: &str) -> Result<Self> {
        let url = std::env::var(url_var)
            .map_err(|_| Error::Config(format!("{url_var} is not set but live mode needs it")))?;
        let api_key = std::env::var(ENV_LLM_KEY).ok();
        HttpTransport::new(url, api_key, Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let mut call = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("http status {status}"));
        }
        let body: ChatResponse = response.json().map_err(|e| e.to_string())?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "response had no choices".to_string())
    }
}

/// Concatenated message contents; the prompt text that gets hashed.
pub fn prompt_text(request: &ChatRequest) -> String {
    request
        .messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Content-address of one request: SHA-256 over model id, sampling
/// parameters, and prompt text, as lowercase hex.
pub fn cache_key(model: &str, temperature: f32, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"model=");
    hasher.update(model.as_bytes());
    hasher.update(b"\ntemperature=");
    hasher.update(format!("{temperature}").as_bytes());
    hasher.update(b"\nprompt=");
    hasher.update(prompt.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Write one scripted cache entry; used by the recorder and by fixture
/// generators. The write goes through a temp file and rename so concurrent
/// writers of the same key are safe (last writer wins, both write the same
/// content anyway).
pub fn write_cache_entry(cache_dir: &Path, key: &str, text: &str) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let final_path = cache_dir.join(key);
    let tmp_path = cache_dir.join(format!(
        ".{key}.tmp.{}.{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp_path, text).map_err(|e| Error::io(&tmp_path, e))?;
    std::fs::rename(&tmp_path, &final_path).map_err(|e| Error::io(&final_path, e))
}

pub struct LabelerClient {
    model: String,
    temperature: f32,
    mode: Mode,
    cache_dir: Option<PathBuf>,
    transport: Option<Box<dyn Transport>>,
    retries: u32,
    backoff_base: Duration,
}

impl LabelerClient {
    /// Live client: network only, no cache.
    pub fn live(transport: Box<dyn Transport>, model: impl Into<String>) -> Self {
        LabelerClient {
            model: model.into(),
            temperature: 0.0,
            mode: Mode::Live,
            cache_dir: None,
            transport: Some(transport),
            retries: 3,
            backoff_base: Duration::from_millis(200),
        }
    }

    /// Replay client: cache only. No transport exists, so no request can
    /// ever leave the process.
    pub fn replay(cache_dir: impl Into<PathBuf>, model: impl Into<String>) -> Self {
        LabelerClient {
            model: model.into(),
            temperature: 0.0,
            mode: Mode::Replay,
            cache_dir: Some(cache_dir.into()),
            transport: None,
            retries: 0,
            backoff_base: Duration::ZERO,
        }
    }

    /// Record client: answer from the cache when possible, otherwise call
    /// the transport and persist the response.
    pub fn record(
        transport: Box<dyn Transport>,
        cache_dir: impl Into<PathBuf>,
        model: impl Into<String>,
    ) -> Self {
        LabelerClient {
            model: model.into(),
            temperature: 0.0,
            mode: Mode::Record,
            cache_dir: Some(cache_dir.into()),
            transport: Some(transport),
            retries: 3,
            backoff_base: Duration::from_millis(200),
        }
    }

    /// Build a client for `mode` with the HTTP transport configured from
    /// `url_var` (replay mode needs no transport and reads no env).
    pub fn from_env(
        mode: Mode,
        cache_dir: Option<PathBuf>,
        model: impl Into<String>,
        url_var: &str,
    ) -> Result<Self> {
        let model = model.into();
        match mode {
            Mode::Replay => {
                let dir = cache_dir.ok_or_else(|| {
                    Error::Config("replay mode requires a cache directory".into())
                })?;
                Ok(LabelerClient::replay(dir, model))
            }
            Mode::Record => {
                let dir = cache_dir.ok_or_else(|| {
                    Error::Config("record mode requires a cache directory".into())
                })?;
                Ok(LabelerClient::record(
                    Box::new(HttpTransport::from_env(url_var)?),
                    dir,
                    model,
                ))
            }
            Mode::Live => Ok(LabelerClient::live(
                Box::new(HttpTransport::from_env(url_var)?),
                model,
            )),
        }
    }

    /// Shorten the retry backoff; test hook.
    pub fn with_backoff(mut self, retries: u32, base: Duration) -> Self {
        self.retries = retries;
        self.backoff_base = base;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn key_for(&self, prompt: &str) -> String {
        cache_key(&self.model, self.temperature, prompt)
    }

    /// Issue one single-message request. `stage` tags errors with the
    /// pipeline step that made the call.
    pub fn complete(&self, stage: &str, prompt: &str) -> Result<String> {
        self.complete_request(
            stage,
            &ChatRequest {
                model: self.model.clone(),
                messages: vec![ChatMessage {
                    role: "user".into(),
                    content: prompt.to_string(),
                }],
                temperature: self.temperature,
                image_b64: None,
            },
        )
    }

    pub fn complete_request(&self, stage: &str, request: &ChatRequest) -> Result<String> {
        let prompt = prompt_text(request);
        let key = cache_key(&self.model, self.temperature, &prompt);

        if let Some(dir) = &self.cache_dir {
            let path = dir.join(&key);
            match std::fs::read_to_string(&path) {
                Ok(text) => return Ok(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    if self.mode == Mode::Replay {
                        return Err(Error::endpoint(
                            stage,
                            format!("replay cache miss for key {key}"),
                        ));
                    }
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }

        let transport = self.transport.as_ref().ok_or_else(|| {
            Error::endpoint(stage, "client has no transport and the cache missed")
        })?;

        let mut last_err = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * (1 << (attempt - 1)));
            }
            match transport.complete(request) {
                Ok(text) => {
                    if self.mode == Mode::Record {
                        if let Some(dir) = &self.cache_dir {
                            write_cache_entry(dir, &key, &text)?;
                        }
                    }
                    return Ok(text);
                }
                Err(e) => last_err = e,
            }
        }
        Err(Error::endpoint(
            stage,
            format!("request failed after {} attempts: {last_err}", self.retries + 1),
        ))
    }
}
