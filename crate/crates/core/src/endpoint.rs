//! Inference endpoints reached over an OpenAI-compatible HTTP contract,
//! plus deterministic in-process stubs for offline runs.
//!
//! Chat: `POST {base_url}/chat/completions` with `{model, messages, temperature}`;
//! the reply text is `choices[0].message.content`. Embeddings:
//! `POST {base_url}/embeddings` with `{model, input}`; the vector is
//! `data[0].embedding`.

use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::EndpointError;

pub const API_KEY_ENV: &str = "UTD_API_KEY";
pub const BASE_URL_ENV: &str = "UTD_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "http://localhost:8000/v1";

/// Connection settings for one endpoint (vision-language, text LLM, or embedding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Read from `UTD_API_KEY`; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_s: u64,
    /// Total attempts per request, including the first.
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
}

impl EndpointConfig {
    pub fn new(model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_owned()),
            api_key: std::env::var(API_KEY_ENV).ok(),
            model: model.into(),
            timeout_s: 120,
            max_retries: 5,
            max_in_flight: 8,
            temperature: 0.0,
            backoff_ms: 500,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.max_retries == 0 {
            return Err("max_retries must be at least 1".into());
        }
        if self.temperature != 0.0 {
            return Err(format!("temperature must be 0, got {}", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentPart {
    Text(String),
    Image { mime: String, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        ChatMessage { role, content: vec![ContentPart::Text(text.into())] }
    }

    pub fn to_wire(&self) -> Value {
        let content = match self.content.as_slice() {
            [ContentPart::Text(t)] => Value::String(t.clone()),
            parts => Value::Array(
                parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text(t) => json!({"type": "text", "text": t}),
                        ContentPart::Image { mime, data } => {
                            let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                            json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{b64}")}})
                        }
                    })
                    .collect(),
            ),
        };
        json!({"role": self.role, "content": content})
    }
}

pub trait ChatEndpoint: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EndpointError>;
}

pub trait EmbeddingEndpoint: Send + Sync {
    fn model_id(&self) -> &str;
    /// Embeds the fully rendered input string (instruction template already applied).
    fn embed(&self, input: &str) -> Result<Vec<f32>, EndpointError>;
}

/// Runs `op` up to `attempts` times with exponential backoff on retryable errors.
pub fn with_retries<T>(
    attempts: u32,
    backoff: Duration,
    mut op: impl FnMut() -> Result<T, EndpointError>,
) -> Result<T, EndpointError> {
    let mut delay = backoff;
    let mut attempt = 1;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if !e.is_retryable() => return Err(e),
            Err(e) if attempt >= attempts => {
                return Err(EndpointError::Exhausted { attempts: attempt, last: Box::new(e) })
            }
            Err(e) => {
                log::warn!("attempt {attempt}/{attempts} failed: {e}; retrying in {delay:?}");
                thread::sleep(delay);
                delay = (delay * 2).min(Duration::from_secs(30));
                attempt += 1;
            }
        }
    }
}

struct HttpClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpClient {
    fn new(cfg: EndpointConfig) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .http_status_as_error(false)
            .build();
        HttpClient { agent: ureq::Agent::new_with_config(config), cfg }
    }

    fn post(&self, route: &str, body: &Value) -> Result<Value, EndpointError> {
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), route);
        with_retries(self.cfg.max_retries, Duration::from_millis(self.cfg.backoff_ms), || {
            let mut request = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.cfg.api_key {
                request = request.header("Authorization", format!("Bearer {key}"));
            }
            let mut response = request.send_json(body).map_err(|e| EndpointError::Transport(e.to_string()))?;
            let status = response.status().as_u16();
            let text = response.body_mut().read_to_string().map_err(|e| EndpointError::Transport(e.to_string()))?;
            if !(200..300).contains(&status) {
                return Err(EndpointError::Status { status, body: text });
            }
            serde_json::from_str(&text).map_err(|e| EndpointError::Malformed(e.to_string()))
        })
    }
}

/// Chat-completions client for the vision-language and text LLM endpoints.
pub struct OpenAiChat(HttpClient);

impl OpenAiChat {
    pub fn new(cfg: EndpointConfig) -> Self {
        OpenAiChat(HttpClient::new(cfg))
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.0.cfg
    }
}

impl ChatEndpoint for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.0.cfg.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EndpointError> {
        let body = json!({
            "model": self.0.cfg.model,
            "temperature": self.0.cfg.temperature,
            "messages": messages.iter().map(ChatMessage::to_wire).collect::<Vec<_>>(),
        });
        let reply = self.0.post("chat/completions", &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| EndpointError::Malformed("no choices[0].message.content".into()))
    }
}

pub struct OpenAiEmbeddings(HttpClient);

impl OpenAiEmbeddings {
    pub fn new(cfg: EndpointConfig) -> Self {
        OpenAiEmbeddings(HttpClient::new(cfg))
    }
}

impl EmbeddingEndpoint for OpenAiEmbeddings {
    fn model_id(&self) -> &str {
        &self.0.cfg.model
    }

    fn embed(&self, input: &str) -> Result<Vec<f32>, EndpointError> {
        let reply = self.0.post("embeddings", &json!({"model": self.0.cfg.model, "input": input}))?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EndpointError::Malformed("no data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| v.as_f64().map(|x| x as f32).ok_or_else(|| EndpointError::Malformed("non-numeric entry".into())))
            .collect()
    }
}

/// Chat stub: replies with the final message's content.
///
/// Text parts are echoed verbatim; image parts become `[image <16 hex digits>]`
/// from the SHA-256 of the image bytes.
#[derive(Debug, Clone)]
pub struct EchoChat {
    model: String,
}

impl EchoChat {
    pub fn new(model: impl Into<String>) -> Self {
        EchoChat { model: model.into() }
    }
}

impl ChatEndpoint for EchoChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EndpointError> {
        let last = messages.last().ok_or_else(|| EndpointError::Malformed("no messages".into()))?;
        let parts: Vec<String> = last
            .content
            .iter()
            .map(|p| match p {
                ContentPart::Text(t) => t.clone(),
                ContentPart::Image { data, .. } => {
                    format!("[image {}]", &hex::encode(Sha256::digest(data))[..16])
                }
            })
            .collect();
        Ok(parts.join(" "))
    }
}

/// Chat stub returning a fixed reply.
#[derive(Debug, Clone)]
pub struct FixedChat {
    pub model: String,
    pub reply: String,
}

impl ChatEndpoint for FixedChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, EndpointError> {
        Ok(self.reply.clone())
    }
}

/// Hashed bag-of-words embedding stub.
///
/// Only the text after `\nQuery: ` carries full weight; instruction tokens
/// contribute with weight [`HashEmbedder::INSTRUCTION_WEIGHT`] so different
/// instructions give slightly different vectors. Each lower-cased
/// alphanumeric token adds a signed unit to one bucket chosen by SHA-256.
/// The output is not normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    model: String,
    dim: usize,
}

impl HashEmbedder {
    pub const INSTRUCTION_WEIGHT: f32 = 0.1;
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        HashEmbedder { model: format!("stub-bow-{dim}"), dim }
    }

    fn add_tokens(&self, text: &str, weight: f32, out: &mut [f32]) {
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let digest = Sha256::digest(token.to_lowercase().as_bytes());
            let mut head = [0u8; 8];
            head.copy_from_slice(&digest[..8]);
            let h = u64::from_le_bytes(head);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
            out[bucket] += sign * weight;
        }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingEndpoint for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, input: &str) -> Result<Vec<f32>, EndpointError> {
        let mut out = vec![0.0f32; self.dim];
        let (instruction, query) = match input.split_once("\nQuery: ") {
            Some((head, tail)) => (head.strip_prefix("Instruct: ").unwrap_or(head), tail),
            None => ("", input),
        };
        self.add_tokens(query, 1.0, &mut out);
        self.add_tokens(instruction, Self::INSTRUCTION_WEIGHT, &mut out);
        if out.iter().all(|x| *x == 0.0) {
            // Keep every embedding normalizable.
            out[0] = 1.0;
        }
        Ok(out)
    }
}
