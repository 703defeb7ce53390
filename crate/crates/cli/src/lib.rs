//! Pieces of the `proofloop` command that are worth testing on their own:
//! backend assembly, the run transcript and the reliability table.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use proofloop_core::reliability::{
    false_accept_closed_form, simulate_policy, PolicyReliability, ReliabilityError, SolutionTruth,
    VerifierErrorModel, MODEL_NOTE,
};
use proofloop_core::{BugReport, PipelineConfig, ReviewStatus};
use proofloop_gateway::{
    BackendScript, Gateway, GatewayError, HttpGateway, RateLimited, Retrying, ScriptError,
    ScriptedGateway,
};
use proofloop_orchestrator::{BackendSettings, ConfigError, EventPayload, Projection, RunEvent};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("the mock backend needs --mock-script")]
    MissingScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Backend {
    Mock,
    Http,
}

/// The backend wrapped in retries and the configured rate limit.
pub fn build_gateway(
    backend: Backend,
    settings: &BackendSettings,
    mock_script: Option<&Path>,
) -> Result<Arc<dyn Gateway>, CliError> {
    let limit = settings.rate_limit()?;
    Ok(match backend {
        Backend::Mock => {
            let script = BackendScript::load(mock_script.ok_or(CliError::MissingScript)?)?;
            Arc::new(RateLimited::new(ScriptedGateway::new(script), limit))
        }
        Backend::Http => {
            let http = HttpGateway::new(settings.http())?;
            Arc::new(RateLimited::new(Retrying::new(http, settings.retry()), limit))
        }
    })
}

fn first_line(text: &str, max: usize) -> String {
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    if line.chars().count() > max {
        format!("{}...", line.chars().take(max).collect::<String>())
    } else {
        line.to_string()
    }
}

fn write_report(out: &mut String, report: &BugReport) {
    let _ = writeln!(out, "    verdict ({:?}): {}", report.verdict_kind, report.verdict_sentence);
    for (i, f) in report.findings.iter().enumerate() {
        let status = match f.review_status {
            ReviewStatus::Unreviewed => String::new(),
            other => format!(" [{other:?}]"),
        };
        let _ = writeln!(
            out,
            "    {}. {} ({:?}){status}: \"{}\"",
            i + 1,
            f.classification.label(),
            f.effective_severity(),
            f.location_quote
        );
    }
}

/// Human-readable account of a run, one entry per logged event, followed by
/// the latest draft.
pub fn transcript(p: &Projection, events: &[RunEvent]) -> String {
    let mut out = String::new();
    let c = &p.header.config;
    let _ = writeln!(out, "run {}  problem {}", p.run_id(), p.header.problem.id);
    let _ = writeln!(
        out,
        "policy: accept after {} passes, reject after {} major fails, cap {}; review {:?}",
        c.pass_threshold, c.rejection_window, c.max_total_iterations, c.review_mode
    );
    let _ = writeln!(out, "sampling: temperature {}, thinking budget {}", c.temperature, c.thinking_budget);
    match &p.terminal {
        Some(t) => {
            let _ = write!(out, "outcome: {:?} after {} verifications", t.terminal, t.iterations);
            if let Some(reason) = &t.reason {
                let _ = write!(out, " ({reason})");
            }
            out.push('\n');
        }
        None => {
            let _ = writeln!(out, "outcome: still running, now in {:?}", p.state.step);
        }
    }
    out.push('\n');
    for e in events {
        let stamp = e.timestamp.format("%H:%M:%S");
        let _ = write!(out, "{:>4} {stamp} ", e.seq);
        match &e.payload {
            EventPayload::StepEntered { step, iteration } => {
                let _ = writeln!(out, "-- {step:?} (after {iteration} verifications)");
            }
            EventPayload::PromptSent { call, ordinal, template, prompt_chars, .. } => {
                let _ = writeln!(out, "   sent {call} #{ordinal} ({template}, {prompt_chars} chars)");
            }
            EventPayload::ResponseReceived { call, ordinal, usage, latency_ms, truncated, retry_count, .. } => {
                let _ = writeln!(
                    out,
                    "   got {call} #{ordinal}: {} output tokens in {latency_ms} ms{}{}",
                    usage.output_tokens,
                    if *retry_count > 0 { format!(" after {retry_count} retries") } else { String::new() },
                    if *truncated { ", truncated" } else { "" }
                );
            }
            EventPayload::BackendFailed { call, ordinal, error } => {
                let _ = writeln!(out, "   {call} #{ordinal} failed: {error}");
            }
            EventPayload::ParseFailed { call, ordinal, reason } => {
                let _ = writeln!(out, "   {call} #{ordinal} unreadable: {reason}");
            }
            EventPayload::DraftProduced { draft, truncated } => {
                let _ = writeln!(
                    out,
                    "   draft v{} ({:?}, {:?}){}: {}",
                    draft.version,
                    draft.produced_by,
                    draft.summary_verdict,
                    if *truncated { " truncated" } else { "" },
                    first_line(&draft.body, 80)
                );
            }
            EventPayload::ReportParsed { report, outcome } => {
                let _ = writeln!(out, "   report: {outcome:?}");
                write_report(&mut out, report);
            }
            EventPayload::ReviewDecisionApplied { decision } => {
                let _ = writeln!(
                    out,
                    "   review: finding {} {:?} by {:?}",
                    decision.finding_index + 1,
                    decision.action,
                    decision.reviewer
                );
            }
            EventPayload::ReviewReleased { timed_out, fallback } => {
                let how = match (timed_out, fallback) {
                    (true, _) => "timed out; report forwarded unchanged".to_string(),
                    (false, Some(reason)) => format!("skipped ({reason}); report forwarded unchanged"),
                    (false, None) => "released".to_string(),
                };
                let _ = writeln!(out, "   review {how}");
            }
            EventPayload::DecisionMade { decision, counters } => {
                let _ = writeln!(
                    out,
                    "   decision {decision:?}: {} verifications, {} passes, {} major fails in a row",
                    counters.iteration, counters.consecutive_passes, counters.consecutive_major_fails
                );
            }
            EventPayload::Terminal { terminal, iterations, reason } => {
                let _ = writeln!(out, "== {terminal:?} after {iterations} verifications{}", match reason {
                    Some(r) => format!(": {r}"),
                    None => String::new(),
                });
            }
        }
    }
    if let Some(draft) = &p.state.current_draft {
        let _ = writeln!(out, "\nlatest draft (v{}, {:?}):\n", draft.version, draft.produced_by);
        out.push_str(draft.body.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityArgs {
    pub p_miss: f64,
    pub p_false_alarm: f64,
    pub k: u32,
    pub m: u32,
    pub cap: u32,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Plain,
    Csv,
}

pub struct ReliabilityTable {
    pub closed_form: f64,
    pub rows: Vec<PolicyReliability>,
}

pub fn reliability(args: &ReliabilityArgs) -> Result<ReliabilityTable, ReliabilityError> {
    let model = VerifierErrorModel::new(args.p_miss, args.p_false_alarm)?;
    let config = PipelineConfig {
        pass_threshold: args.k,
        rejection_window: args.m,
        max_total_iterations: args.cap,
        ..PipelineConfig::default()
    };
    let closed_form = false_accept_closed_form(&model, args.k)?;
    let rows = [SolutionTruth::Flawed, SolutionTruth::Sound]
        .into_iter()
        .map(|truth| simulate_policy(&model, &config, truth, args.trials, args.seed))
        .collect::<Result<_, _>>()?;
    Ok(ReliabilityTable { closed_form, rows })
}

pub const CSV_HEADER: &str = "truth,p_miss,p_false_alarm,k,m,cap,trials,seed,p_accept,p_reject,p_abort,expected_checks,wrong_terminal,ci95_halfwidth,closed_form_false_accept";

pub fn render_table(args: &ReliabilityArgs, table: &ReliabilityTable, format: TableFormat) -> String {
    let mut out = String::new();
    let truth_name = |t: SolutionTruth| match t {
        SolutionTruth::Flawed => "flawed",
        SolutionTruth::Sound => "sound",
    };
    let wrong = |r: &PolicyReliability| match r.truth {
        SolutionTruth::Flawed => r.p_false_accept,
        SolutionTruth::Sound => r.p_false_reject,
    };
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    truth_name(r.truth),
                    args.p_miss,
                    args.p_false_alarm,
                    args.k,
                    args.m,
                    args.cap,
                    r.trials,
                    r.seed,
                    r.accept.value,
                    r.reject.value,
                    r.abort.value,
                    r.expected_checks_to_terminal,
                    wrong(r),
                    r.confidence_halfwidth,
                    table.closed_form
                );
            }
        }
        TableFormat::Plain => {
            let _ = writeln!(
                out,
                "policy: accept after {} passes, reject after {} major fails, cap {}",
                args.k, args.m, args.cap
            );
            let _ = writeln!(
                out,
                "verifier: p_miss {}, p_false_alarm {}; {} trials, seed {}",
                args.p_miss, args.p_false_alarm, args.trials, args.seed
            );
            let _ = writeln!(out, "closed form, {} straight misses: {:.6e}\n", args.k, table.closed_form);
            let _ = writeln!(
                out,
                "{:<8} {:>10} {:>10} {:>10} {:>10} {:>12} {:>10}",
                "truth", "accept", "reject", "abort", "checks", "wrong end", "ci95 +/-"
            );
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{:<8} {:>10.6} {:>10.6} {:>10.6} {:>10.3} {:>12.6} {:>10.6}",
                    truth_name(r.truth),
                    r.accept.value,
                    r.reject.value,
                    r.abort.value,
                    r.expected_checks_to_terminal,
                    wrong(r),
                    r.confidence_halfwidth
                );
            }
            let _ = writeln!(out, "\nnote: {MODEL_NOTE}");
        }
    }
    out
}
