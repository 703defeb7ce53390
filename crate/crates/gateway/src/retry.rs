use std::time::Duration;

use async_trait::async_trait;

use crate::{CompletionRequest, CompletionResponse, Gateway, GatewayError, TransientKind};

/// Exponential backoff for transient failures.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, the first one included.
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
    pub max_backoff: Duration,
    /// Deadline for a single attempt. `None` leaves it to the backend.
    pub attempt_timeout: Option<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2,
            max_backoff: Duration::from_secs(30),
            attempt_timeout: None,
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1).saturating_pow(retry.saturating_sub(1));
        self.initial_backoff
            .checked_mul(factor)
            .unwrap_or(self.max_backoff)
            .min(self.max_backoff)
    }

    /// Every wait this policy can produce, in order.
    pub fn schedule(&self) -> Vec<Duration> {
        (1..self.attempts.max(1)).map(|r| self.backoff(r)).collect()
    }
}

/// Retries transient failures; everything else is returned at once.
#[derive(Debug)]
pub struct Retrying<G> {
    inner: G,
    policy: RetryPolicy,
}

impl<G> Retrying<G> {
    pub fn new(inner: G, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }
}

#[async_trait]
impl<G: Gateway> Gateway for Retrying<G> {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let attempts = self.policy.attempts.max(1);
        let base_id = request.request_id.clone();
        let mut last = String::new();
        for attempt in 1..=attempts {
            let mut req = request.clone();
            req.request_id = format!("{base_id}#{attempt}");
            let result = match self.policy.attempt_timeout {
                Some(limit) => tokio::time::timeout(limit, self.inner.complete(req))
                    .await
                    .unwrap_or_else(|_| {
                        Err(GatewayError::transient(
                            TransientKind::Timeout,
                            format!("no response within {limit:?}"),
                        ))
                    }),
                None => self.inner.complete(req).await,
            };
            match result {
                Ok(mut response) => {
                    response.retry_count = attempt - 1;
                    return Ok(response);
                }
                Err(e) if e.is_transient() => {
                    tracing::warn!(request = %base_id, attempt, error = %e, "transient gateway failure");
                    last = e.to_string();
                    if attempt < attempts {
                        tokio::time::sleep(self.policy.backoff(attempt)).await;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::Unavailable { attempts, last })
    }
}
