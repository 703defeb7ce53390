mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use proofloop_core::{DraftOrigin, ReviewMode, Severity};
use proofloop_gateway::{
    BackendScript, Exhaustion, RateLimit, RateLimited, ScriptedGateway, StepKind,
};
use proofloop_orchestrator::{
    drive, EventPayload, PipelineError, ReviewAction, ReviewDecision, Reviewer, TerminalKind,
};

#[tokio::test]
async fn five_passes_accept() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock(&[PASS]);
    let out = pipeline(dir.path(), gw.clone())
        .run_pipeline("acc", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Accepted);
    assert_eq!(out.iterations, 5);
    assert_eq!(out.reports.len(), 5);
    let draft = out.final_draft.unwrap();
    assert_eq!(draft.produced_by, DraftOrigin::SelfImprovement);
    assert!(draft.body.contains("Draft improved"));
    assert!(!draft.body.contains("Summary"));
    assert_eq!(calls_for(&gw, StepKind::Solve), 1);
    assert_eq!(calls_for(&gw, StepKind::SelfImprove), 1);
    assert_eq!(calls_for(&gw, StepKind::Verify), 5);
    assert_eq!(calls_for(&gw, StepKind::Correct), 0);
    assert!(gw.calls().iter().all(|c| c.temperature == 0.1 && c.thinking_budget == 32_768));
}

#[tokio::test]
async fn ten_major_fails_reject() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock(&[CRITICAL]);
    let out = pipeline(dir.path(), gw.clone())
        .run_pipeline("rej", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Rejected);
    assert_eq!(out.iterations, 10);
    assert_eq!(calls_for(&gw, StepKind::Correct), 9);
    assert_eq!(out.final_draft.unwrap().produced_by, DraftOrigin::Correction);
}

#[tokio::test]
async fn alternating_reports_hit_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock(&[PASS, CRITICAL]);
    let out = pipeline(dir.path(), gw.clone())
        .run_pipeline("cap", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Aborted);
    assert_eq!(out.iterations, 30);
    assert!(out.reason.unwrap().contains("30"));
    assert_eq!(calls_for(&gw, StepKind::Verify), 30);
}

#[tokio::test]
async fn minor_fails_break_both_streaks() {
    let dir = tempfile::tempdir().unwrap();
    // Four passes then a minor fail, forever: never five in a row.
    let gw = mock(&[PASS, PASS, PASS, PASS, BARE_INVALID]);
    let out = pipeline(dir.path(), gw)
        .run_pipeline("minor", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Aborted);
}

#[tokio::test]
async fn auto_review_rates_a_gap_minor_and_the_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let script = script(&[UNRATED_GAP]).push(StepKind::Review, "Finding 1: KEEP MINOR\n");
    let gw = Arc::new(ScriptedGateway::new(script));
    let p = pipeline(dir.path(), gw.clone());
    let out = p.run_pipeline("auto", problem(), config(ReviewMode::Auto)).await.unwrap();
    assert_eq!(out.terminal, TerminalKind::Accepted);
    assert_eq!(out.iterations, 5);
    assert_eq!(calls_for(&gw, StepKind::Review), 5);
    assert!(out.reports.iter().all(|r| r.findings[0].severity == Severity::Minor));
    let events = p.store().get("auto").unwrap().events();
    assert_eq!(
        events.iter().filter(|e| matches!(e.payload, EventPayload::ReviewDecisionApplied { .. })).count(),
        10
    );
}

#[tokio::test]
async fn unreadable_auto_review_forwards_the_report_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let script = script(&[UNRATED_GAP]).push(StepKind::Review, "I cannot decide.");
    let gw = Arc::new(ScriptedGateway::new(script));
    let mut cfg = config(ReviewMode::Auto);
    cfg.rejection_window = 2;
    let out = pipeline(dir.path(), gw).run_pipeline("fallback", problem(), cfg).await.unwrap();
    assert_eq!(out.terminal, TerminalKind::Rejected);
    assert_eq!(out.reports[0].findings[0].severity, Severity::Unrated);
}

#[tokio::test]
async fn review_backend_failure_falls_back_to_the_original_report() {
    let dir = tempfile::tempdir().unwrap();
    // No review responses at all: every review call fails.
    let mut script = script(&[UNRATED_GAP]);
    script.exhaustion = Exhaustion::Repeat;
    let gw = Arc::new(ScriptedGateway::new(script));
    let mut cfg = config(ReviewMode::Auto);
    cfg.rejection_window = 2;
    let p = pipeline(dir.path(), gw);
    let out = p.run_pipeline("review-down", problem(), cfg).await.unwrap();
    assert_eq!(out.terminal, TerminalKind::Rejected);
    let events = p.store().get("review-down").unwrap().events();
    assert!(events.iter().any(|e| matches!(
        &e.payload,
        EventPayload::ReviewReleased { fallback: Some(_), .. }
    )));
}

#[tokio::test]
async fn human_review_deletes_and_releases() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock(&[UNRATED_GAP]);
    let p = pipeline(dir.path(), gw);
    let mut cfg = config(ReviewMode::Human);
    cfg.pass_threshold = 2;
    let log = p.start("human", problem(), cfg).unwrap();
    let driver = {
        let log = log.clone();
        let gw = mock(&[UNRATED_GAP]);
        tokio::spawn(async move { drive(&log, gw.as_ref(), proofloop_core::PromptKit::standard()).await })
    };
    let mut watch = log.watch();
    let mut released = 0;
    while released < 2 {
        let p = log.projection();
        if p.awaiting_human() {
            let pending = p.pending_review.clone().unwrap();
            log.transact(|_| {
                Ok(vec![
                    EventPayload::ReviewDecisionApplied {
                        decision: ReviewDecision {
                            run_id: "human".into(),
                            report_index: pending.report_index,
                            finding_index: 0,
                            action: ReviewAction::Delete,
                            reviewer: Reviewer::Human { id: "ana".into() },
                            timestamp: chrono::Utc::now(),
                        },
                    },
                    EventPayload::ReviewReleased { timed_out: false, fallback: None },
                ])
            })
            .unwrap();
            released += 1;
            continue;
        }
        watch.changed().await.unwrap();
    }
    let out = driver.await.unwrap().unwrap();
    assert_eq!(out.terminal, TerminalKind::Accepted);
    assert!(out.reports.iter().all(|r| r.findings[0].is_deleted()));
}

#[tokio::test(start_paused = true)]
async fn human_review_times_out_and_forwards_the_original() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock(&[UNRATED_GAP]);
    let mut cfg = config(ReviewMode::Human);
    // The last report rejects outright, so only the first two are reviewed.
    cfg.rejection_window = 3;
    cfg.review_timeout_secs = 3600;
    let p = pipeline(dir.path(), gw);
    let out = p.run_pipeline("timeout", problem(), cfg).await.unwrap();
    assert_eq!(out.terminal, TerminalKind::Rejected);
    let events = p.store().get("timeout").unwrap().events();
    let timeouts = events
        .iter()
        .filter(|e| matches!(e.payload, EventPayload::ReviewReleased { timed_out: true, .. }))
        .count();
    assert_eq!(timeouts, 2);
}

#[tokio::test]
async fn unchanged_corrections_abort_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let script = BackendScript::new(Exhaustion::Repeat)
        .push(StepKind::Solve, solver("a"))
        .push(StepKind::SelfImprove, solver("same"))
        .push(StepKind::Correct, solver("same"))
        .push(StepKind::Verify, CRITICAL);
    let out = pipeline(dir.path(), Arc::new(ScriptedGateway::new(script)))
        .run_pipeline("stuck", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Aborted);
    assert_eq!(out.iterations, 4);
    assert!(out.reason.unwrap().contains("unchanged"));
}

#[tokio::test]
async fn two_unreadable_drafts_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let script = script(&[PASS]);
    let mut bad = script.clone();
    bad.responses.insert(StepKind::Solve, vec!["I think the answer is 2.".into()]);
    let out = pipeline(dir.path(), Arc::new(ScriptedGateway::new(bad)))
        .run_pipeline("garbled", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Failed);
    assert!(out.reason.unwrap().contains("2 unreadable solve"));

    let mut once = script;
    once.responses.insert(StepKind::Solve, vec!["garbled".into(), solver("second try")]);
    let out = pipeline(dir.path(), Arc::new(ScriptedGateway::new(once)))
        .run_pipeline("garbled-once", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Accepted);
}

#[tokio::test]
async fn backend_outage_fails_the_run_with_its_reason() {
    let dir = tempfile::tempdir().unwrap();
    let mut script = script(&[PASS, PASS]);
    script.exhaustion = Exhaustion::Fail;
    let out = pipeline(dir.path(), Arc::new(ScriptedGateway::new(script)))
        .run_pipeline("outage", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    assert_eq!(out.terminal, TerminalKind::Failed);
    assert_eq!(out.iterations, 2);
    assert!(out.reason.unwrap().contains("no response 2"));
}

#[tokio::test]
async fn finished_runs_replay_without_calls() {
    let dir = tempfile::tempdir().unwrap();
    let first = pipeline(dir.path(), mock(&[PASS]))
        .run_pipeline("done", problem(), config(ReviewMode::Skip))
        .await
        .unwrap();
    let fresh = mock(&[CRITICAL]);
    let again = pipeline(dir.path(), fresh.clone()).resume("done").await.unwrap();
    assert_eq!(again, first);
    assert_eq!(fresh.call_count(), 0);
}

#[tokio::test]
async fn a_run_has_one_driver() {
    let dir = tempfile::tempdir().unwrap();
    let gw = Arc::new(ScriptedGateway::new(script(&[PASS])).with_latency(Duration::from_millis(50)));
    let p = pipeline(dir.path(), gw.clone());
    let log = p.start("solo", problem(), config(ReviewMode::Skip)).unwrap();
    let first = {
        let log = log.clone();
        let gw = gw.clone();
        tokio::spawn(async move { drive(&log, gw.as_ref(), proofloop_core::PromptKit::standard()).await })
    };
    tokio::time::sleep(Duration::from_millis(10)).await;
    assert!(matches!(p.resume("solo").await, Err(PipelineError::Busy(_))));
    assert_eq!(first.await.unwrap().unwrap().terminal, TerminalKind::Accepted);
}

#[tokio::test]
async fn duplicate_and_invalid_run_ids_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), mock(&[PASS]));
    p.run_pipeline("dup", problem(), config(ReviewMode::Skip)).await.unwrap();
    assert!(p.run_pipeline("dup", problem(), config(ReviewMode::Skip)).await.is_err());
    assert!(p.start("../escape", problem(), config(ReviewMode::Skip)).is_err());
    let mut bad = config(ReviewMode::Skip);
    bad.pass_threshold = 0;
    assert!(matches!(p.start("bad", problem(), bad), Err(PipelineError::Invalid(_))));
}

#[tokio::test]
async fn parallel_runs_are_isolated_and_rate_limited() {
    let dir = tempfile::tempdir().unwrap();
    let scripted = Arc::new(
        ScriptedGateway::new(script(&[PASS]))
            .with_run_script("batch-001", script(&[CRITICAL]))
            .with_latency(Duration::from_millis(5)),
    );
    let limited = RateLimited::new(scripted.clone(), RateLimit::new(2, Duration::ZERO).unwrap());
    let p = pipeline(dir.path(), Arc::new(limited));
    let mut cfg = config(ReviewMode::Skip);
    cfg.parallel_runs = 8;
    let batch = p.run_many("batch", problem(), cfg).await;
    let terminals: Vec<_> = batch.runs.iter().map(|r| r.as_ref().unwrap().terminal).collect();
    let mut expected = vec![TerminalKind::Accepted; 8];
    expected[1] = TerminalKind::Rejected;
    assert_eq!(terminals, expected);
    let ids: Vec<_> = batch.runs.iter().map(|r| r.as_ref().unwrap().run_id.clone()).collect();
    assert_eq!(ids, (0..8).map(|i| format!("batch-{i:03}")).collect::<Vec<_>>());
    assert_eq!(batch.accepted().unwrap().run_id, "batch-000");
    assert_eq!(scripted.peak_in_flight(), 2);
    for id in &ids {
        let mine = scripted.calls().iter().filter(|c| &c.run_id == id).count();
        let expected = if id == "batch-001" { 1 + 1 + 10 + 9 } else { 1 + 1 + 5 };
        assert_eq!(mine, expected, "{id}");
        // Each log names only its own run.
        let log = p.store().get(id).unwrap();
        assert!(log.events().iter().all(|e| &e.run_id == id));
    }
}

#[tokio::test]
async fn a_batch_of_one_matches_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), mock(&[PASS, CRITICAL, PASS]));
    let single = p.run_pipeline("one", problem(), config(ReviewMode::Skip)).await.unwrap();
    let batch = p.run_many("solo", problem(), config(ReviewMode::Skip)).await;
    let mut only = batch.runs.into_iter().next().unwrap().unwrap();
    assert_eq!(only.run_id, "solo-000");
    only.run_id = single.run_id.clone();
    assert_eq!(only, single);
}

#[tokio::test]
async fn no_acceptance_in_a_batch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), mock(&[CRITICAL]));
    let mut cfg = config(ReviewMode::Skip);
    cfg.parallel_runs = 2;
    let batch = p.run_many("none", problem(), cfg).await;
    assert!(batch.accepted().is_none());
    assert_eq!(batch.runs.len(), 2);
}
