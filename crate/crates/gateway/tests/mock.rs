mod common;

use std::sync::Arc;
use std::time::Duration;

use proofloop_gateway::{
    BackendKind, BackendScript, Exhaustion, Gateway, GatewayError, Metered, ScriptedGateway, StepKind,
};

#[tokio::test]
async fn scripted_order() {
    let gw = ScriptedGateway::new(BackendScript::new(Exhaustion::Fail).extend(StepKind::Solve, ["s1", "s2"]));
    let a = gw.complete(common::request("r", StepKind::Solve, 0)).await.unwrap();
    let b = gw.complete(common::request("r", StepKind::Solve, 1)).await.unwrap();
    assert_eq!((a.text.as_str(), b.text.as_str()), ("s1", "s2"));
    assert_eq!(a.backend, BackendKind::Mock);
    assert_eq!(
        gw.complete(common::request("r", StepKind::Solve, 2)).await,
        Err(GatewayError::ScriptExhausted { step: StepKind::Solve, ordinal: 2 })
    );
    assert_eq!(
        gw.complete(common::request("r", StepKind::Verify, 0)).await,
        Err(GatewayError::ScriptExhausted { step: StepKind::Verify, ordinal: 0 })
    );
}

#[tokio::test]
async fn default_config_carries_sampling_parameters() {
    let gw = ScriptedGateway::new(BackendScript::new(Exhaustion::Repeat).push(StepKind::Verify, "ok"));
    let req = common::request("r", StepKind::Verify, 0);
    assert_eq!((req.temperature, req.thinking_budget), (0.1, 32768));
    gw.complete(req).await.unwrap();
    let call = &gw.calls()[0];
    assert_eq!((call.temperature, call.thinking_budget), (0.1, 32768));
}

#[tokio::test]
async fn identical_scripts_give_identical_results() {
    let script = BackendScript::new(Exhaustion::Repeat)
        .extend(StepKind::Verify, ["alpha beta", "gamma"])
        .push(StepKind::Correct, "delta epsilon zeta");
    let run = |gw: ScriptedGateway| async move {
        let mut out = Vec::new();
        for (step, ordinal) in [(StepKind::Verify, 0), (StepKind::Correct, 0), (StepKind::Verify, 1), (StepKind::Verify, 2)] {
            let r = gw.complete(common::request("r", step, ordinal)).await.unwrap();
            out.push((r.text, r.usage));
        }
        out
    };
    let a = run(ScriptedGateway::new(script.clone())).await;
    let b = run(ScriptedGateway::new(script)).await;
    assert_eq!(a, b);
    assert_eq!(a[3].0, "alpha beta");
}

#[tokio::test]
async fn per_run_scripts_override_the_default() {
    let gw = ScriptedGateway::new(BackendScript::new(Exhaustion::Repeat).push(StepKind::Solve, "default"))
        .with_run_script("special", BackendScript::new(Exhaustion::Repeat).push(StepKind::Solve, "mine"));
    let a = gw.complete(common::request("special", StepKind::Solve, 0)).await.unwrap();
    let b = gw.complete(common::request("other", StepKind::Solve, 0)).await.unwrap();
    assert_eq!((a.text.as_str(), b.text.as_str()), ("mine", "default"));
}

#[tokio::test]
async fn scripts_load_from_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("draft.md"), "a draft").unwrap();
    std::fs::write(
        dir.path().join("script.toml"),
        "exhaustion = \"fail\"\n\n[[response]]\nstep = \"solve\"\nfile = \"draft.md\"\n\n[[response]]\nstep = \"verify\"\ntext = \"fine\"\n",
    )
    .unwrap();
    let script = BackendScript::load(&dir.path().join("script.toml")).unwrap();
    assert_eq!(script.exhaustion, Exhaustion::Fail);
    let gw = ScriptedGateway::new(script);
    assert_eq!(gw.complete(common::request("r", StepKind::Solve, 0)).await.unwrap().text, "a draft");
    assert!(BackendScript::load(&dir.path().join("missing.toml")).is_err());
}

#[tokio::test(start_paused = true)]
async fn concurrency_probe_sees_overlap() {
    let gw = Arc::new(
        ScriptedGateway::new(BackendScript::new(Exhaustion::Repeat).push(StepKind::Verify, "x"))
            .with_latency(Duration::from_millis(50)),
    );
    let tasks: Vec<_> = (0..4)
        .map(|i| {
            let gw = gw.clone();
            tokio::spawn(async move { gw.complete(common::request("r", StepKind::Verify, i)).await })
        })
        .collect();
    for t in tasks {
        t.await.unwrap().unwrap();
    }
    assert_eq!(gw.peak_in_flight(), 4);
}

#[tokio::test]
async fn metering_sums_usage() {
    let gw = Metered::new(ScriptedGateway::new(
        BackendScript::new(Exhaustion::Fail).extend(StepKind::Verify, ["one two", "three"]),
    ));
    for i in 0..3 {
        let _ = gw.complete(common::request("r", StepKind::Verify, i)).await;
    }
    let t = gw.totals();
    assert_eq!((t.calls, t.failures), (3, 1));
    assert_eq!(t.usage.output_tokens, 3);
    assert_eq!(t.usage.prompt_tokens, 6);
    assert_eq!(t.by_step.len(), 1);
}
