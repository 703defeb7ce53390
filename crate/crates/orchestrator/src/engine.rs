//! The driver loop. Each pass reads the projection, works out the one thing
//! to do next, and records its result in the log. Everything the loop needs
//! is in the log, so a run picks up where its log ends.

use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use proofloop_core::prompts::sha256_hex;
use proofloop_core::{
    classify_report, decide_counters, parse_bug_report, parse_review_response, parse_solver_output,
    BugReport, PipelineConfig, Problem, PromptError, PromptKit, RenderedPrompt, ReviewMode,
    SolutionDraft, Step, ValidationError, VerdictKind,
};
use proofloop_gateway::{CompletionRequest, Gateway, StepKind};
use serde::Serialize;
use thiserror::Error;
use tokio::task::JoinSet;

use crate::events::{EventPayload, LogHeader, TerminalKind};
use crate::log::{LogError, LogStore, RunLog};
use crate::projection::{call_kind, draft_origin, PendingResponse, Projection, LIVELOCK_STREAK, PARSE_FAILURE_LIMIT};
use crate::review::decisions_from_answers;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("invalid input: {0}")]
    Invalid(#[from] ValidationError),
    #[error("run {0} is already being driven")]
    Busy(String),
    #[error("run task failed: {0}")]
    Task(String),
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub terminal: TerminalKind,
    /// Latest draft; on acceptance, the accepted solution.
    pub final_draft: Option<SolutionDraft>,
    pub iterations: u32,
    pub reports: Vec<BugReport>,
    pub reason: Option<String>,
}

impl RunOutcome {
    pub fn from_projection(p: &Projection) -> Option<Self> {
        let t = p.terminal.as_ref()?;
        Some(Self {
            run_id: p.run_id().to_string(),
            terminal: t.terminal,
            final_draft: p.state.current_draft.clone(),
            iterations: t.iterations,
            reports: p.state.report_history.clone(),
            reason: t.reason.clone(),
        })
    }
}

#[derive(Debug)]
pub struct BatchOutcome {
    /// One entry per run, in run-index order.
    pub runs: Vec<Result<RunOutcome, PipelineError>>,
}

impl BatchOutcome {
    /// The batch succeeds when any run was accepted.
    pub fn accepted(&self) -> Option<&RunOutcome> {
        self.runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .find(|o| o.terminal == TerminalKind::Accepted)
    }
}

enum Plan {
    Done,
    Append(Vec<EventPayload>),
    Call {
        call: StepKind,
        ordinal: u32,
        prompt: RenderedPrompt,
        announce: bool,
    },
    AwaitHuman { remaining: Duration },
}

fn terminal_event(p: &Projection, terminal: TerminalKind, reason: Option<String>) -> Plan {
    Plan::Append(vec![EventPayload::Terminal {
        terminal,
        iterations: p.state.iteration(),
        reason,
    }])
}

fn interpret(p: &Projection, response: &PendingResponse) -> Vec<EventPayload> {
    let parse_failed = |reason: &str| {
        vec![EventPayload::ParseFailed {
            call: response.call,
            ordinal: response.ordinal,
            reason: reason.into(),
        }]
    };
    match response.call {
        StepKind::Solve | StepKind::SelfImprove | StepKind::Correct => {
            let out = parse_solver_output(&response.text);
            if out.detailed_solution.trim().is_empty() {
                return parse_failed("no detailed solution section");
            }
            let Some(origin) = draft_origin(p.state.step) else {
                return parse_failed("draft arrived outside a drafting step");
            };
            vec![EventPayload::DraftProduced {
                draft: SolutionDraft {
                    version: p.state.next_draft_version(),
                    body: out.detailed_solution,
                    summary_verdict: out.summary_verdict,
                    produced_by: origin,
                },
                truncated: response.truncated,
            }]
        }
        StepKind::Verify => {
            let report = parse_bug_report(&response.text);
            if report.verdict_kind == VerdictKind::Unparsed {
                return parse_failed("no verdict could be read from the report");
            }
            match classify_report(&report) {
                Ok(outcome) => vec![EventPayload::ReportParsed { report, outcome }],
                Err(e) => parse_failed(&e.to_string()),
            }
        }
        StepKind::Review => {
            let Some(pending) = &p.pending_review else {
                return vec![EventPayload::ReviewReleased {
                    timed_out: false,
                    fallback: Some("no report under review".into()),
                }];
            };
            let answers = parse_review_response(&response.text);
            if answers.is_empty() {
                return vec![EventPayload::ReviewReleased {
                    timed_out: false,
                    fallback: Some("auto review gave no readable answers".into()),
                }];
            }
            let mut events: Vec<EventPayload> =
                decisions_from_answers(p.run_id(), pending, &answers, Utc::now())
                    .into_iter()
                    .map(|decision| EventPayload::ReviewDecisionApplied { decision })
                    .collect();
            events.push(EventPayload::ReviewReleased {
                timed_out: false,
                fallback: None,
            });
            events
        }
    }
}

fn render(kit: &PromptKit, p: &Projection, call: StepKind) -> Result<RenderedPrompt, PromptError> {
    let problem = &p.header.problem;
    let draft = p.state.current_draft.as_ref();
    let need_draft = || {
        draft.ok_or_else(|| PromptError::from(ValidationError::new("draft", "no draft on file")))
    };
    let need_report = || {
        p.state
            .latest_report()
            .ok_or_else(|| PromptError::from(ValidationError::new("report", "no report on file")))
    };
    match call {
        StepKind::Solve => kit.render_solver(problem),
        StepKind::SelfImprove => kit.render_self_improve(problem, need_draft()?),
        StepKind::Verify => kit.render_verifier(problem, need_draft()?),
        StepKind::Correct => kit.render_correction(problem, need_draft()?, need_report()?),
        StepKind::Review => kit.render_auto_review(problem, need_draft()?, need_report()?),
    }
}

fn plan(kit: &PromptKit, p: &Projection) -> Plan {
    if p.terminal.is_some() {
        return Plan::Done;
    }
    if p.awaiting_decision {
        return Plan::Append(vec![EventPayload::DecisionMade {
            decision: decide_counters(&p.state.counters, &p.header.config),
            counters: p.state.counters,
        }]);
    }
    if let Some(terminal) = TerminalKind::of(p.state.step) {
        let reason = match terminal {
            TerminalKind::Failed => p.state.failure.clone(),
            TerminalKind::Aborted => Some(format!(
                "reached the cap of {} verifications",
                p.header.config.max_total_iterations
            )),
            _ => None,
        };
        return terminal_event(p, terminal, reason);
    }
    if let Some(response) = &p.pending_response {
        return Plan::Append(interpret(p, response));
    }
    if let Some((call, n)) = p.parse_failures {
        if n >= PARSE_FAILURE_LIMIT {
            return terminal_event(
                p,
                TerminalKind::Failed,
                Some(format!("{n} unreadable {call} responses in a row")),
            );
        }
    }
    if p.identical_corrections >= LIVELOCK_STREAK {
        return terminal_event(
            p,
            TerminalKind::Aborted,
            Some(format!(
                "{} corrections in a row left the solution unchanged against the same report",
                p.identical_corrections
            )),
        );
    }
    if let Some(reason) = &p.review_fallback {
        return Plan::Append(vec![EventPayload::ReviewReleased {
            timed_out: false,
            fallback: Some(reason.clone()),
        }]);
    }
    if !p.entered {
        return Plan::Append(vec![EventPayload::StepEntered {
            step: p.state.step,
            iteration: p.state.iteration(),
        }]);
    }
    if p.state.step == Step::Review && p.header.config.review_mode == ReviewMode::Human {
        let entered = p.entered_at.unwrap_or_else(Utc::now);
        let deadline = entered + chrono::Duration::seconds(p.header.config.review_timeout_secs as i64);
        let remaining = (deadline - Utc::now()).to_std().unwrap_or(Duration::ZERO);
        return Plan::AwaitHuman { remaining };
    }
    let Some(call) = call_kind(p.state.step) else {
        return terminal_event(p, TerminalKind::Failed, Some(format!("no call for step {:?}", p.state.step)));
    };
    let ordinal = p.ordinal(call);
    match render(kit, p, call) {
        Ok(prompt) => Plan::Call {
            call,
            ordinal,
            prompt,
            announce: p.pending_prompt.as_ref().is_none_or(|pp| pp.call != call || pp.ordinal != ordinal),
        },
        Err(e) => terminal_event(p, TerminalKind::Failed, Some(format!("cannot build the {call} prompt: {e}"))),
    }
}

/// Drive one run until its log holds a terminal event.
pub async fn drive(
    log: &Arc<RunLog>,
    gateway: &dyn Gateway,
    kit: &PromptKit,
) -> Result<RunOutcome, PipelineError> {
    let _guard = log.claim().ok_or_else(|| PipelineError::Busy(log.run_id()))?;
    loop {
        let mut seq_rx = log.watch();
        let p = log.projection();
        match plan(kit, &p) {
            Plan::Done => {
                return Ok(RunOutcome::from_projection(&p).expect("finished runs carry a terminal record"));
            }
            Plan::Append(events) => {
                log.append_if(p.last_seq, events)?;
            }
            Plan::AwaitHuman { remaining } => {
                if *seq_rx.borrow_and_update() != p.last_seq {
                    continue;
                }
                if tokio::time::timeout(remaining, seq_rx.changed()).await.is_err() {
                    tracing::info!(run = %p.run_id(), "human review timed out; forwarding the report unchanged");
                    log.append_if(
                        p.last_seq,
                        vec![EventPayload::ReviewReleased {
                            timed_out: true,
                            fallback: None,
                        }],
                    )?;
                }
            }
            Plan::Call {
                call,
                ordinal,
                prompt,
                announce,
            } => {
                let run_id = p.run_id().to_string();
                if announce {
                    let sent = EventPayload::PromptSent {
                        call,
                        ordinal,
                        request_id: format!("{run_id}/{call}/{ordinal}"),
                        template: prompt.template,
                        prompt_sha256: sha256_hex(&prompt.text),
                        prompt_chars: prompt.text.chars().count(),
                    };
                    if !log.append_if(p.last_seq, vec![sent])? {
                        continue;
                    }
                }
                let request = CompletionRequest::new(prompt, &p.header.config, run_id, call, ordinal);
                let result = gateway.complete(request).await;
                let event = match result {
                    Ok(r) => EventPayload::ResponseReceived {
                        call,
                        ordinal,
                        text: r.text,
                        usage: r.usage,
                        latency_ms: r.latency_ms,
                        backend: r.backend,
                        truncated: r.truncated,
                        retry_count: r.retry_count,
                    },
                    Err(e) => {
                        tracing::warn!(%call, ordinal, error = %e, "backend call failed");
                        EventPayload::BackendFailed {
                            call,
                            ordinal,
                            error: e.to_string(),
                        }
                    }
                };
                log.transact(|_| Ok(vec![event]))?;
            }
        }
    }
}

/// Runs share a gateway, a prompt kit and a log directory.
#[derive(Clone)]
pub struct Pipeline {
    gateway: Arc<dyn Gateway>,
    store: Arc<LogStore>,
    kit: Arc<PromptKit>,
}

impl Pipeline {
    pub fn new(gateway: Arc<dyn Gateway>, store: Arc<LogStore>) -> Self {
        Self {
            gateway,
            store,
            kit: Arc::new(PromptKit::standard().clone()),
        }
    }

    pub fn with_kit(mut self, kit: PromptKit) -> Self {
        self.kit = Arc::new(kit);
        self
    }

    pub fn store(&self) -> &Arc<LogStore> {
        &self.store
    }

    /// Start a run. Its config is written into the log header and governs the
    /// run from then on, including after a resume.
    pub fn start(&self, run_id: &str, problem: Problem, config: PipelineConfig) -> Result<Arc<RunLog>, PipelineError> {
        problem.validate()?;
        config.validate()?;
        Ok(self.store.create(LogHeader::new(run_id, problem, config))?)
    }

    pub async fn run_pipeline(
        &self,
        run_id: &str,
        problem: Problem,
        config: PipelineConfig,
    ) -> Result<RunOutcome, PipelineError> {
        let log = self.start(run_id, problem, config)?;
        drive(&log, self.gateway.as_ref(), &self.kit).await
    }

    /// Continue a run from its log. A finished run returns its outcome
    /// without any backend call.
    pub async fn resume(&self, run_id: &str) -> Result<RunOutcome, PipelineError> {
        let log = self.store.get(run_id)?;
        drive(&log, self.gateway.as_ref(), &self.kit).await
    }

    /// `config.parallel_runs` independent runs of one problem, named
    /// `{base_id}-000`, `{base_id}-001`, and so on.
    pub async fn run_many(&self, base_id: &str, problem: Problem, config: PipelineConfig) -> BatchOutcome {
        let count = config.parallel_runs.max(1) as usize;
        let mut tasks = JoinSet::new();
        for index in 0..count {
            let pipeline = self.clone();
            let run_id = format!("{base_id}-{index:03}");
            let problem = problem.clone();
            let config = config.clone();
            tasks.spawn(async move { (index, pipeline.run_pipeline(&run_id, problem, config).await) });
        }
        let mut runs: Vec<Option<Result<RunOutcome, PipelineError>>> = (0..count).map(|_| None).collect();
        while let Some(joined) = tasks.join_next().await {
            match joined {
                Ok((index, result)) => runs[index] = Some(result),
                Err(e) => tracing::error!(error = %e, "run task panicked"),
            }
        }
        BatchOutcome {
            runs: runs
                .into_iter()
                .map(|r| r.unwrap_or_else(|| Err(PipelineError::Task("run task did not finish".into()))))
                .collect(),
        }
    }
}
