//! One completion interface over a real chat endpoint and a scripted mock.
//!
//! Backends implement [`Gateway`]. Cross-cutting behaviour is layered on as
//! decorators: [`Retrying`] for transient failures, [`RateLimited`] for
//! concurrency and pacing, [`Metered`] for usage totals. Calls are plain
//! single-turn completions; no tool or function-calling fields are ever sent.

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use proofloop_core::{PipelineConfig, RenderedPrompt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod http;
mod meter;
mod mock;
mod rate_limit;
mod retry;

pub use http::{decode_response, wire_body, DecodedResponse, HttpConfig, HttpGateway};
pub use meter::{Metered, UsageTotals};
pub use mock::{BackendScript, CallRecord, Exhaustion, FaultInjector, ScriptError, ScriptedGateway};
pub use rate_limit::{RateLimit, RateLimited};
pub use retry::{RetryPolicy, Retrying};

/// Which pipeline step a call serves. The mock keys its scripts on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Solve,
    SelfImprove,
    Verify,
    Correct,
    Review,
}

impl StepKind {
    pub const ALL: [StepKind; 5] = [
        StepKind::Solve,
        StepKind::SelfImprove,
        StepKind::Verify,
        StepKind::Correct,
        StepKind::Review,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Solve => "solve",
            StepKind::SelfImprove => "self_improve",
            StepKind::Verify => "verify",
            StepKind::Correct => "correct",
            StepKind::Review => "review",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StepKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown step kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: RenderedPrompt,
    pub temperature: f64,
    pub thinking_budget: u32,
    pub max_output_tokens: u32,
    /// Unique per attempt; retries append an attempt suffix.
    pub request_id: String,
    pub run_id: String,
    pub step: StepKind,
    /// Calls of this step kind the run made before this one.
    pub ordinal: u32,
}

impl CompletionRequest {
    /// Sampling parameters come from the pipeline config.
    pub fn new(
        prompt: RenderedPrompt,
        config: &PipelineConfig,
        run_id: impl Into<String>,
        step: StepKind,
        ordinal: u32,
    ) -> Self {
        let run_id = run_id.into();
        Self {
            prompt,
            temperature: config.temperature,
            thinking_budget: config.thinking_budget,
            max_output_tokens: config.max_output_tokens,
            request_id: format!("{run_id}/{step}/{ordinal}"),
            run_id,
            step,
            ordinal,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub thinking_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub backend: BackendKind,
    /// The model stopped at its output limit.
    pub truncated: bool,
    /// Failed attempts before this response.
    pub retry_count: u32,
    /// Id of the attempt that produced the response.
    pub request_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientKind {
    Timeout,
    RateLimited,
    Server,
    Connection,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transient {kind:?} failure: {message}")]
    Transient { kind: TransientKind, message: String },
    #[error("credentials rejected: {0}")]
    Credential(String),
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("request queue is full ({depth} waiting)")]
    BackPressure { depth: usize },
    #[error("mock script for {step} has no response {ordinal}")]
    ScriptExhausted { step: StepKind, ordinal: u32 },
    #[error("unusable response: {0}")]
    InvalidResponse(String),
    #[error("gateway configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn transient(kind: TransientKind, message: impl Into<String>) -> Self {
        GatewayError::Transient {
            kind,
            message: message.into(),
        }
    }

    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transient { .. })
    }
}

#[async_trait]
pub trait Gateway: Send + Sync {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError>;
}

#[async_trait]
impl<G: Gateway + ?Sized> Gateway for Arc<G> {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request).await
    }
}

#[async_trait]
impl<G: Gateway + ?Sized> Gateway for Box<G> {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request).await
    }
}

/// Rough token count used where a backend reports none.
pub(crate) fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
