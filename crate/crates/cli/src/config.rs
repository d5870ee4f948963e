use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use utd_core::endpoint::{
    ChatEndpoint, EchoChat, EmbeddingEndpoint, EndpointConfig, HashEmbedder, OpenAiChat, OpenAiEmbeddings,
};
use utd_core::trainlin::TrainConfig;

pub const DEFAULT_VLM: &str = "llava-hf/llava-v1.6-mistral-7b-hf";
pub const DEFAULT_LLM: &str = "mistralai/Mistral-7B-Instruct-v0.2";
pub const DEFAULT_EMBED: &str = "Salesforce/SFR-Embedding-Mistral";
pub const STUB_CHAT_MODEL: &str = "stub-echo";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    #[default]
    Http,
    Stub,
}

/// One `[endpoints.*]` table; unset fields keep their defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointSection {
    kind: Option<Kind>,
    base_url: Option<String>,
    model: Option<String>,
    timeout_s: Option<u64>,
    max_retries: Option<u32>,
    max_in_flight: Option<usize>,
    backoff_ms: Option<u64>,
    /// Vector length of the stub embedder.
    dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Endpoints {
    vlm: Option<EndpointSection>,
    llm: Option<EndpointSection>,
    embed: Option<EndpointSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    lambda: Option<f64>,
    max_iter: Option<u32>,
    tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    endpoints: Endpoints,
    #[serde(default)]
    train: TrainSection,
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Endpoint {
    pub kind: Kind,
    pub config: EndpointConfig,
    /// Stub embedder length; unused otherwise.
    pub dim: usize,
}

impl Endpoint {
    fn resolve(section: Option<EndpointSection>, default_model: &str, force_stub: bool) -> Result<Self> {
        let s = section.unwrap_or_default();
        let kind = if force_stub { Kind::Stub } else { s.kind.unwrap_or_default() };
        let mut config = EndpointConfig::new(s.model.unwrap_or_else(|| default_model.to_owned()));
        if let Some(url) = s.base_url {
            config.base_url = url;
        }
        if let Some(v) = s.timeout_s {
            config.timeout_s = v;
        }
        if let Some(v) = s.max_retries {
            config.max_retries = v;
        }
        if let Some(v) = s.max_in_flight {
            config.max_in_flight = v;
        }
        if let Some(v) = s.backoff_ms {
            config.backoff_ms = v;
        }
        config.validate().map_err(anyhow::Error::msg)?;
        let dim = s.dim.unwrap_or(HashEmbedder::DEFAULT_DIM);
        if dim == 0 {
            bail!("stub embedding dim must be positive");
        }
        if kind == Kind::Stub {
            // Stubs run in-process; the network settings are irrelevant.
            config = EndpointConfig { base_url: String::new(), api_key: None, ..config };
        }
        Ok(Endpoint { kind, config, dim })
    }

    pub fn chat(&self) -> Box<dyn ChatEndpoint> {
        match self.kind {
            Kind::Http => Box::new(OpenAiChat::new(self.config.clone())),
            Kind::Stub => Box::new(EchoChat::new(STUB_CHAT_MODEL)),
        }
    }

    pub fn embedding(&self) -> Box<dyn EmbeddingEndpoint> {
        match self.kind {
            Kind::Http => Box::new(OpenAiEmbeddings::new(self.config.clone())),
            Kind::Stub => Box::new(HashEmbedder::new(self.dim)),
        }
    }

    pub fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }
}

/// Resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub vlm: Endpoint,
    pub llm: Endpoint,
    pub embed: Endpoint,
    pub train: TrainConfig,
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    /// Reads the optional TOML file; `stub` replaces every endpoint with its stub.
    pub fn load(path: Option<&Path>, stub: bool) -> Result<Self> {
        let file: ConfigFile = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            lambda: file.train.lambda.unwrap_or(defaults.lambda),
            max_iter: file.train.max_iter.unwrap_or(defaults.max_iter),
            tol: file.train.tol.unwrap_or(defaults.tol),
            seed: defaults.seed,
        };
        train.validate()?;
        Ok(RunConfig {
            vlm: Endpoint::resolve(file.endpoints.vlm, DEFAULT_VLM, stub).context("[endpoints.vlm]")?,
            llm: Endpoint::resolve(file.endpoints.llm, DEFAULT_LLM, stub).context("[endpoints.llm]")?,
            embed: Endpoint::resolve(file.endpoints.embed, DEFAULT_EMBED, stub).context("[endpoints.embed]")?,
            train,
            seeds: file.seeds,
        })
    }
}
