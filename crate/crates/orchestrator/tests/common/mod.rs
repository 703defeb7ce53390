#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use proofloop_core::{PipelineConfig, Problem, ReviewMode};
use proofloop_gateway::{BackendScript, Exhaustion, Gateway, ScriptedGateway, StepKind};
use proofloop_orchestrator::{LogStore, Pipeline};

pub const PASS: &str = "**Final Verdict:** The solution is correct.\n\n**List of Findings:**\n*   None.\n\n**Detailed Verification Log**\n\nEvery step checks out.\n";

pub const CRITICAL: &str = "**Final Verdict:** The solution is **invalid** because it contains a Critical Error.\n\n**List of Findings:**\n*   **Location:** \"By interchanging the limit and the integral, we get...\"\n    *   **Issue:** Justification Gap - The interchange is not justified.\n*   **Location:** \"From $A > B$ and $C > D$, it follows that $A-C > B-D$\"\n    *   **Issue:** Critical Error - Inequalities cannot be subtracted this way.\n";

/// Correct verdict, but an unrated gap: a major fail until someone rates it.
pub const UNRATED_GAP: &str = "**Final Verdict:** The solution is correct.\n\n**List of Findings:**\n*   **Location:** \"Hence $x = 2$.\"\n    *   **Issue:** Justification Gap - The case $x < 0$ is skipped.\n";

/// Invalid verdict with nothing listed: a minor fail.
pub const BARE_INVALID: &str = "**Final Verdict:** The solution is invalid.\n\n**List of Findings:**\n*   None.\n";

pub fn solver(tag: &str) -> String {
    format!(
        "**1. Summary**\n\n**a. Verdict:** I have successfully solved the problem. The answer is $2$.\n\n**b. Method Sketch:** Compare both sides.\n\n**2. Detailed Solution**\n\nDraft {tag}. Since $x^2 = 4$ and $x > 0$, we get $x = 2$.\n"
    )
}

pub fn problem() -> Problem {
    Problem::new("p-square", "Find all positive reals $x$ with $x^2 = 4$.").unwrap()
}

pub fn config(mode: ReviewMode) -> PipelineConfig {
    PipelineConfig {
        review_mode: mode,
        ..PipelineConfig::default()
    }
}

/// Drafts for every drafting step (each correction distinct) and the given
/// verifier reports, cycled.
pub fn script(verify: &[&str]) -> BackendScript {
    BackendScript::new(Exhaustion::Repeat)
        .push(StepKind::Solve, solver("initial"))
        .push(StepKind::SelfImprove, solver("improved"))
        .extend(StepKind::Correct, (0..64).map(|i| solver(&format!("corrected {i}"))))
        .extend(StepKind::Verify, verify.iter().copied())
}

pub fn pipeline(dir: &Path, gateway: Arc<dyn Gateway>) -> Pipeline {
    Pipeline::new(gateway, Arc::new(LogStore::open(dir).unwrap()))
}

pub fn mock(verify: &[&str]) -> Arc<ScriptedGateway> {
    Arc::new(ScriptedGateway::new(script(verify)))
}

pub fn calls_for(gateway: &ScriptedGateway, step: StepKind) -> usize {
    gateway.calls().iter().filter(|c| c.step == step).count()
}
