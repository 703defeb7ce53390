//! The run configuration file: one flat TOML table holding the pipeline
//! settings and the backend settings side by side.
//!
//! ```toml
//! pass_threshold = 5
//! review_mode = "auto"
//! base_url = "https://api.example.com/v1"
//! model = "some-model"
//! retry_attempts = 3
//! ```

use std::path::Path;
use std::time::Duration;

use proofloop_core::PipelineConfig;
use proofloop_gateway::{HttpConfig, RateLimit, RetryPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub base_url: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub thinking_budget_field: Option<String>,
    pub timeout_secs: u64,
    pub retry_attempts: u32,
    pub retry_initial_backoff_ms: u64,
    pub retry_max_backoff_ms: u64,
    pub max_in_flight: usize,
    pub min_interval_ms: u64,
    pub max_queue: Option<usize>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let http = HttpConfig::default();
        let retry = RetryPolicy::default();
        Self {
            base_url: http.base_url,
            model: http.model,
            api_key_env: http.api_key_env,
            thinking_budget_field: http.thinking_budget_field,
            timeout_secs: http.timeout_secs,
            retry_attempts: retry.attempts,
            retry_initial_backoff_ms: retry.initial_backoff.as_millis() as u64,
            retry_max_backoff_ms: retry.max_backoff.as_millis() as u64,
            max_in_flight: 4,
            min_interval_ms: 0,
            max_queue: None,
        }
    }
}

impl BackendSettings {
    pub fn http(&self) -> HttpConfig {
        HttpConfig {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            thinking_budget_field: self.thinking_budget_field.clone(),
            timeout_secs: self.timeout_secs,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retry_attempts.max(1),
            initial_backoff: Duration::from_millis(self.retry_initial_backoff_ms),
            max_backoff: Duration::from_millis(self.retry_max_backoff_ms),
            ..RetryPolicy::default()
        }
    }

    pub fn rate_limit(&self) -> Result<RateLimit, ConfigError> {
        let limit = RateLimit::new(self.max_in_flight, Duration::from_millis(self.min_interval_ms))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(match self.max_queue {
            Some(depth) => limit.with_max_queue(depth),
            None => limit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub backend: BackendSettings,
}

const BACKEND_KEYS: [&str; 11] = [
    "base_url",
    "model",
    "api_key_env",
    "thinking_budget_field",
    "timeout_secs",
    "retry_attempts",
    "retry_initial_backoff_ms",
    "retry_max_backoff_ms",
    "max_in_flight",
    "min_interval_ms",
    "max_queue",
];

impl RunConfig {
    /// Parse the flat table. Keys that neither half knows are errors.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let (backend, pipeline): (toml::Table, toml::Table) =
            table.into_iter().partition(|(k, _)| BACKEND_KEYS.contains(&k.as_str()));
        let pipeline: PipelineConfig = pipeline
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let backend: BackendSettings = backend
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        pipeline.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        backend.rate_limit()?;
        Ok(Self { pipeline, backend })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}
