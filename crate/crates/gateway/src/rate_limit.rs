use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use tokio::sync::{Mutex, Semaphore, TryAcquireError};
use tokio::time::Instant;

use crate::{CompletionRequest, CompletionResponse, Gateway, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimit {
    pub max_in_flight: usize,
    /// Minimum gap between two dispatches.
    pub min_interval: Duration,
    /// Calls allowed to wait for a slot before new ones are refused.
    pub max_queue: usize,
}

impl RateLimit {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Result<Self, GatewayError> {
        if max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be positive".into()));
        }
        Ok(Self {
            max_in_flight,
            min_interval,
            max_queue: usize::MAX,
        })
    }

    pub fn with_max_queue(mut self, max_queue: usize) -> Self {
        self.max_queue = max_queue;
        self
    }
}

/// Caps concurrent calls and paces dispatches. Waiting calls are served in
/// arrival order.
#[derive(Debug)]
pub struct RateLimited<G> {
    inner: G,
    limit: RateLimit,
    slots: Arc<Semaphore>,
    waiting: AtomicUsize,
    last_dispatch: Mutex<Option<Instant>>,
}

impl<G> RateLimited<G> {
    pub fn new(inner: G, limit: RateLimit) -> Self {
        Self {
            slots: Arc::new(Semaphore::new(limit.max_in_flight)),
            inner,
            limit,
            waiting: AtomicUsize::new(0),
            last_dispatch: Mutex::new(None),
        }
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }

    /// Calls currently queued for a slot.
    pub fn queued(&self) -> usize {
        self.waiting.load(Ordering::SeqCst)
    }
}

struct Queued<'a>(&'a AtomicUsize);

impl Drop for Queued<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl<G: Gateway> Gateway for RateLimited<G> {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let _permit = match self.slots.clone().try_acquire_owned() {
            Ok(permit) => permit,
            Err(TryAcquireError::Closed) => unreachable!("semaphore is never closed"),
            Err(TryAcquireError::NoPermits) => {
                let max = self.limit.max_queue;
                self.waiting
                    .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < max).then_some(n + 1))
                    .map_err(|depth| GatewayError::BackPressure { depth })?;
                let _queued = Queued(&self.waiting);
                self.slots
                    .clone()
                    .acquire_owned()
                    .await
                    .expect("semaphore is never closed")
            }
        };

        {
            let mut last = self.last_dispatch.lock().await;
            if let Some(previous) = *last {
                let ready = previous + self.limit.min_interval;
                if ready > Instant::now() {
                    tokio::time::sleep_until(ready).await;
                }
            }
            *last = Some(Instant::now());
        }
        self.inner.complete(request).await
    }
}
