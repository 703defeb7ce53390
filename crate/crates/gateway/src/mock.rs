//! Deterministic scripted backend and a fault injector for tests.
//!
//! A script holds canned responses per step kind. The response to a request
//! is picked by the request's ordinal, never by hidden call order, so a run
//! resumed in a fresh process gets exactly the responses it would have seen.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::time::Instant;

use crate::{
    approx_tokens, BackendKind, CompletionRequest, CompletionResponse, Gateway, GatewayError,
    StepKind, TransientKind, Usage,
};

/// What a script does once a step kind's list runs out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaustion {
    /// Start again from the first response.
    #[default]
    Repeat,
    Fail,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackendScript {
    pub responses: BTreeMap<StepKind, Vec<String>>,
    pub exhaustion: Exhaustion,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    exhaustion: Exhaustion,
    #[serde(default)]
    response: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptEntry {
    step: StepKind,
    text: Option<String>,
    /// Path relative to the script file.
    file: Option<String>,
}

impl BackendScript {
    pub fn new(exhaustion: Exhaustion) -> Self {
        Self {
            responses: BTreeMap::new(),
            exhaustion,
        }
    }

    pub fn push(mut self, step: StepKind, text: impl Into<String>) -> Self {
        self.responses.entry(step).or_default().push(text.into());
        self
    }

    pub fn extend<I, S>(mut self, step: StepKind, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.responses
            .entry(step)
            .or_default()
            .extend(texts.into_iter().map(Into::into));
        self
    }

    /// Load a TOML script: `exhaustion` plus `[[response]]` tables with a
    /// `step` and either inline `text` or a `file` next to the script.
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ScriptError::Io { path, source }
        };
        let raw = std::fs::read_to_string(path).map_err(io(path))?;
        Self::parse(&raw, path.parent().unwrap_or(Path::new(".")), path)
    }

    /// Parse script text; `file` entries are resolved against `base`.
    pub fn from_toml(raw: &str, base: &Path) -> Result<Self, ScriptError> {
        Self::parse(raw, base, &base.join("<inline>"))
    }

    fn parse(raw: &str, base: &Path, path: &Path) -> Result<Self, ScriptError> {
        let format = |message: String| ScriptError::Format {
            path: path.to_path_buf(),
            message,
        };
        let file: ScriptFile = toml::from_str(raw).map_err(|e| format(e.to_string()))?;
        let mut script = BackendScript::new(file.exhaustion);
        for (i, entry) in file.response.into_iter().enumerate() {
            let text = match (entry.text, entry.file) {
                (Some(text), None) => text,
                (None, Some(file)) => {
                    let p = base.join(file);
                    std::fs::read_to_string(&p).map_err(|source| ScriptError::Io { path: p, source })?
                }
                _ => return Err(format(format!("response {i} needs exactly one of text or file"))),
            };
            script = script.push(entry.step, text);
        }
        Ok(script)
    }

    fn pick(&self, step: StepKind, ordinal: u32) -> Option<&str> {
        let list = self.responses.get(&step).filter(|l| !l.is_empty())?;
        let i = ordinal as usize;
        match self.exhaustion {
            Exhaustion::Repeat => Some(&list[i % list.len()]),
            Exhaustion::Fail => list.get(i).map(String::as_str),
        }
    }
}

/// One call as the mock saw it.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub run_id: String,
    pub step: StepKind,
    pub ordinal: u32,
    pub request_id: String,
    pub temperature: f64,
    pub thinking_budget: u32,
    pub dispatched_at: Instant,
}

/// Scripted backend. Runs without a script of their own use the default one.
#[derive(Debug)]
pub struct ScriptedGateway {
    default: BackendScript,
    per_run: HashMap<String, BackendScript>,
    latency: Duration,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    calls: Mutex<Vec<CallRecord>>,
}

impl ScriptedGateway {
    pub fn new(default: BackendScript) -> Self {
        Self {
            default,
            per_run: HashMap::new(),
            latency: Duration::ZERO,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_run_script(mut self, run_id: impl Into<String>, script: BackendScript) -> Self {
        self.per_run.insert(run_id.into(), script);
        self
    }

    /// Simulated time each call takes.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("call log").len()
    }

    /// Highest number of calls that were in progress at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl Gateway for ScriptedGateway {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let started = Instant::now();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.in_flight);
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        self.calls.lock().expect("call log").push(CallRecord {
            run_id: request.run_id.clone(),
            step: request.step,
            ordinal: request.ordinal,
            request_id: request.request_id.clone(),
            temperature: request.temperature,
            thinking_budget: request.thinking_budget,
            dispatched_at: started,
        });
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }

        let script = self.per_run.get(&request.run_id).unwrap_or(&self.default);
        let text = script
            .pick(request.step, request.ordinal)
            .ok_or(GatewayError::ScriptExhausted {
                step: request.step,
                ordinal: request.ordinal,
            })?
            .to_string();
        Ok(CompletionResponse {
            usage: Usage {
                prompt_tokens: approx_tokens(&request.prompt.text),
                output_tokens: approx_tokens(&text),
                thinking_tokens: 0,
            },
            text,
            latency_ms: started.elapsed().as_millis() as u64,
            backend: BackendKind::Mock,
            truncated: false,
            retry_count: 0,
            request_id: request.request_id,
        })
    }
}

/// Fails the first `failures` calls, then delegates.
#[derive(Debug)]
pub struct FaultInjector<G> {
    inner: G,
    remaining: AtomicU32,
    error: GatewayError,
    attempts: AtomicU32,
}

impl<G> FaultInjector<G> {
    pub fn transient(inner: G, failures: u32) -> Self {
        Self::with_error(
            inner,
            failures,
            GatewayError::transient(TransientKind::Server, "injected fault"),
        )
    }

    pub fn with_error(inner: G, failures: u32, error: GatewayError) -> Self {
        Self {
            inner,
            remaining: AtomicU32::new(failures),
            error,
            attempts: AtomicU32::new(0),
        }
    }

    /// Calls seen so far, failed or not.
    pub fn attempts(&self) -> u32 {
        self.attempts.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl<G: Gateway> Gateway for FaultInjector<G> {
    async fn complete(&self, request: CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let fail = self
            .remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if fail {
            return Err(self.error.clone());
        }
        self.inner.complete(request).await
    }
}
