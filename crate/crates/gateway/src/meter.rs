use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::{CompletionRequest, CompletionResponse, Gateway, GatewayError, StepKind, Usage};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub failures: u64,
    pub retries: u64,
    pub truncated: u64,
    pub usage: Usage,
    pub by_step: Vec<(StepKind, Usage)>,
}

impl UsageTotals {
    fn add(&mut self, step: StepKind, usage: Usage) {
        let add = |total: &mut Usage| {
            total.prompt_tokens += usage.prompt_tokens;
            total.output_tokens += usage.output_tokens;
            total.thinking_tokens += usage.thinking_tokens;
        };
        add(&mut self.usage);
        match self.by_step.iter_mut().find(|(s, _)| *s == step) {
            Some((_, total)) => add(total),
            None => {
                let mut total = Usage::default();
                add(&mut total);
                self.by_step.push((step, total));
                self.by_step.sort_by_key(|(s, _)| *s);
            }
        }
    }
}

/// Keeps running usage totals across every call that passes through.
#[derive(Debug)]
pub struct Metered<G> {
    inner: G,
    totals: Mutex<UsageTotals>,
}

impl<G> Metered<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            totals: Mutex::new(UsageTotals::default()),
        }
    }

    pub fn totals(&self) -> UsageTotals {
        self.totals.lock().expect("usage totals").clone()
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }
}

#[async_trait]
impl<G: Gateway> Gateway for Metered<G> {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let step = request.step;
        let result = self.inner.complete(request).await;
        let mut totals = self.totals.lock().expect("usage totals");
        totals.calls += 1;
        match &result {
            Ok(r) => {
                totals.retries += u64::from(r.retry_count);
                totals.truncated += u64::from(r.truncated);
                totals.add(step, r.usage);
            }
            Err(_) => totals.failures += 1,
        }
        result
    }
}
