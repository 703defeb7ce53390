//! How often the acceptance policy reaches the wrong terminal when the
//! verifier itself is unreliable.
//!
//! Each verification is modelled as an independent Bernoulli trial: a flawed
//! solution slips through one check with probability `p_miss`, a sound one is
//! wrongly flagged with probability `p_false_alarm`. A flagged check counts as
//! a major fail. Corrections are not modelled, so the solution's soundness is
//! fixed for the whole run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{decide_counters, Decision, PolicyCounters, ReportOutcome};
use crate::types::PipelineConfig;

/// z-score for the reported 95% half-width.
pub const Z_95: f64 = 1.959_963_984_540_054;

pub const MODEL_NOTE: &str = "Only verification outcomes are simulated: corrections between checks \
do not change whether the solution is sound, and checks are independent.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReliabilityError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("pass threshold must be at least 1")]
    Threshold,
    #[error("trials must be at least 1")]
    Trials,
    #[error("only independent verifier errors are supported")]
    Correlated,
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierErrorModel {
    /// Probability that one check passes a flawed solution.
    pub p_miss: f64,
    /// Probability that one check fails a sound solution.
    pub p_false_alarm: f64,
    pub independent: bool,
}

impl VerifierErrorModel {
    pub fn new(p_miss: f64, p_false_alarm: f64) -> Result<Self, ReliabilityError> {
        let model = Self {
            p_miss,
            p_false_alarm,
            independent: true,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ReliabilityError> {
        for (name, value) in [("p_miss", self.p_miss), ("p_false_alarm", self.p_false_alarm)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ReliabilityError::Probability { name, value });
            }
        }
        if !self.independent {
            return Err(ReliabilityError::Correlated);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionTruth {
    Sound,
    Flawed,
}

/// Probability that `pass_threshold` consecutive independent checks all miss
/// a flaw.
pub fn false_accept_closed_form(
    model: &VerifierErrorModel,
    pass_threshold: u32,
) -> Result<f64, ReliabilityError> {
    model.validate()?;
    if pass_threshold < 1 {
        return Err(ReliabilityError::Threshold);
    }
    Ok(model.p_miss.powi(pass_threshold as i32))
}

/// An estimated probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    fn proportion(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReliability {
    pub truth: SolutionTruth,
    pub trials: u64,
    pub seed: u64,
    /// Accepted although flawed. Zero by construction for sound solutions.
    pub p_false_accept: f64,
    /// Rejected although sound. Zero by construction for flawed solutions.
    pub p_false_reject: f64,
    pub expected_checks_to_terminal: f64,
    /// 95% half-width of the wrong-terminal estimate.
    pub confidence_halfwidth: f64,
    pub accept: Estimate,
    pub reject: Estimate,
    pub abort: Estimate,
    pub checks: Estimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    accepted: u64,
    rejected: u64,
    aborted: u64,
    checks: u64,
    checks_sq: u128,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            accepted: self.accepted + other.accepted,
            rejected: self.rejected + other.rejected,
            aborted: self.aborted + other.aborted,
            checks: self.checks + other.checks,
            checks_sq: self.checks_sq + other.checks_sq,
        }
    }
}

fn run_trial(
    rng: &mut ChaCha8Rng,
    model: &VerifierErrorModel,
    config: &PipelineConfig,
    truth: SolutionTruth,
) -> (Decision, u32) {
    let mut counters = PolicyCounters::default();
    loop {
        let u: f64 = rng.random();
        let outcome = match truth {
            SolutionTruth::Flawed if u < model.p_miss => ReportOutcome::Pass,
            SolutionTruth::Flawed => ReportOutcome::MajorFail,
            SolutionTruth::Sound if u < model.p_false_alarm => ReportOutcome::MajorFail,
            SolutionTruth::Sound => ReportOutcome::Pass,
        };
        counters = counters.record(outcome);
        match decide_counters(&counters, config) {
            Decision::Continue => {}
            terminal => return (terminal, counters.iteration),
        }
    }
}

/// Monte Carlo estimate of the policy's terminal probabilities.
///
/// Trial `i` draws from its own ChaCha8 stream `i` under `seed`, so the result
/// depends only on the inputs and not on how trials are spread over threads.
pub fn simulate_policy(
    model: &VerifierErrorModel,
    config: &PipelineConfig,
    truth: SolutionTruth,
    trials: u64,
    seed: u64,
) -> Result<PolicyReliability, ReliabilityError> {
    model.validate()?;
    config
        .validate()
        .map_err(|e| ReliabilityError::Config(e.to_string()))?;
    if trials == 0 {
        return Err(ReliabilityError::Trials);
    }

    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut tally = Tally::default();
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(trials);
            for trial in start..end {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial);
                let (decision, checks) = run_trial(&mut rng, model, config, truth);
                match decision {
                    Decision::Accept => tally.accepted += 1,
                    Decision::Reject => tally.rejected += 1,
                    Decision::Abort => tally.aborted += 1,
                    Decision::Continue => unreachable!("trials run to a terminal"),
                }
                tally.checks += u64::from(checks);
                tally.checks_sq += u128::from(checks) * u128::from(checks);
            }
            tally
        })
        .reduce(Tally::default, Tally::merge);

    let n = trials as f64;
    let accept = Estimate::proportion(tally.accepted, trials);
    let reject = Estimate::proportion(tally.rejected, trials);
    let abort = Estimate::proportion(tally.aborted, trials);
    let mean_checks = tally.checks as f64 / n;
    let var_checks = (tally.checks_sq as f64 / n - mean_checks * mean_checks).max(0.0);
    let checks = Estimate {
        value: mean_checks,
        std_error: (var_checks / n).sqrt(),
    };

    let (p_false_accept, p_false_reject, wrong) = match truth {
        SolutionTruth::Flawed => (accept.value, 0.0, accept),
        SolutionTruth::Sound => (0.0, reject.value, reject),
    };

    Ok(PolicyReliability {
        truth,
        trials,
        seed,
        p_false_accept,
        p_false_reject,
        expected_checks_to_terminal: mean_checks,
        confidence_halfwidth: Z_95 * wrong.std_error,
        accept,
        reject,
        abort,
        checks,
    })
}
