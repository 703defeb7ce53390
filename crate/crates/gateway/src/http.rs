//! OpenAI-compatible `/chat/completions` backend.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::time::Instant;

use crate::{
    approx_tokens, BackendKind, CompletionRequest, CompletionResponse, Gateway, GatewayError,
    TransientKind, Usage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no auth header.
    pub api_key_env: Option<String>,
    /// Request field that carries the thinking budget, dotted for nesting
    /// (e.g. `thinking.budget_tokens`). Unset means the budget is not sent.
    pub thinking_budget_field: Option<String>,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: Some("PROOFLOOP_API_KEY".into()),
            thinking_budget_field: None,
            timeout_secs: 600,
        }
    }
}

/// The JSON body sent for a request. Only model, messages, sampling and length
/// fields appear, plus the configured thinking-budget field.
pub fn wire_body(config: &HttpConfig, request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": config.model,
        "messages": [{"role": "user", "content": request.prompt.text}],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    });
    if let Some(field) = &config.thinking_budget_field {
        let mut parts: Vec<&str> = field.split('.').filter(|p| !p.is_empty()).collect();
        if let Some(leaf) = parts.pop() {
            let mut node = body.as_object_mut().expect("body is an object");
            for part in parts {
                node = node
                    .entry(part)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("thinking field path runs through objects");
            }
            node.insert(leaf.to_string(), json!(request.thinking_budget));
        }
    }
    body
}

#[derive(Debug, Clone)]
pub struct HttpGateway {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::Client,
    url: String,
}

impl HttpGateway {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let api_key = match &config.api_key_env {
            None => None,
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Credential(format!("environment variable {var} is not set"))
            })?),
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Ok(Self {
            config,
            api_key,
            client,
            url,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Option<Message>,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    completion_tokens_details: Option<CompletionDetails>,
}

#[derive(Deserialize)]
struct CompletionDetails {
    #[serde(default)]
    reasoning_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedResponse {
    pub text: String,
    pub usage: Usage,
    /// The backend stopped at its output limit.
    pub truncated: bool,
}

/// Decode a successful `/chat/completions` body. Usage missing from the body
/// is estimated from the prompt and the reply.
pub fn decode_response(body: &str, prompt: &str) -> Result<DecodedResponse, GatewayError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::InvalidResponse(format!("malformed body: {e}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::InvalidResponse("no choices in response".into()))?;
    let text = choice
        .message
        .and_then(|m| m.content)
        .ok_or_else(|| GatewayError::InvalidResponse("choice has no message content".into()))?;
    let truncated = choice.finish_reason.as_deref() == Some("length");
    let usage = match parsed.usage {
        Some(u) => Usage {
            prompt_tokens: u.prompt_tokens,
            output_tokens: u.completion_tokens,
            thinking_tokens: u.completion_tokens_details.map_or(0, |d| d.reasoning_tokens),
        },
        None => Usage {
            prompt_tokens: approx_tokens(prompt),
            output_tokens: approx_tokens(&text),
            thinking_tokens: 0,
        },
    };
    Ok(DecodedResponse { text, usage, truncated })
}

fn status_error(status: reqwest::StatusCode, body: &str) -> GatewayError {
    let message = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
    match status.as_u16() {
        401 | 403 => GatewayError::Credential(message),
        408 => GatewayError::transient(TransientKind::Timeout, message),
        429 => GatewayError::transient(TransientKind::RateLimited, message),
        500..=599 => GatewayError::transient(TransientKind::Server, message),
        _ => GatewayError::InvalidResponse(message),
    }
}

fn transport_error(e: reqwest::Error) -> GatewayError {
    if e.is_timeout() {
        GatewayError::transient(TransientKind::Timeout, e.to_string())
    } else if e.is_connect() || e.is_request() {
        GatewayError::transient(TransientKind::Connection, e.to_string())
    } else {
        GatewayError::InvalidResponse(e.to_string())
    }
}

#[async_trait]
impl Gateway for HttpGateway {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let started = Instant::now();
        let mut call = self
            .client
            .post(&self.url)
            .header("x-request-id", &request.request_id)
            .json(&wire_body(&self.config, &request));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().await.map_err(transport_error)?;
        let status = response.status();
        let body = response.text().await.map_err(transport_error)?;
        if !status.is_success() {
            return Err(status_error(status, &body));
        }
        let decoded = decode_response(&body, &request.prompt.text)?;
        if decoded.truncated {
            tracing::warn!(request = %request.request_id, "response stopped at the output limit");
        }
        Ok(CompletionResponse {
            text: decoded.text,
            usage: decoded.usage,
            latency_ms: started.elapsed().as_millis() as u64,
            backend: BackendKind::Http,
            truncated: decoded.truncated,
            retry_count: 0,
            request_id: request.request_id,
        })
    }
}
