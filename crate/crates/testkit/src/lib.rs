//! Test oracles that share no code with the implementation they check.
//!
//! * [`reference_policy`] applies the accept/reject/abort window rules
//!   directly to a verdict sequence.
//! * [`chain_oracle`] computes exact terminal probabilities of the policy as
//!   an absorbing Markov chain over (pass streak, major streak, iteration).
//! * [`corpus`] loads the paired solution/report fixture corpus.
//! * [`emitter`] generates decorated reports with known contents.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::Deserialize;

pub mod emitter;

/// How one verification came out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    MinorFail,
    MajorFail,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Pass, Verdict::MinorFail, Verdict::MajorFail];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Accept,
    Reject,
    Abort,
}

/// Outcome of feeding a verdict sequence to the policy: the first terminal and
/// the 1-based check at which it fired, or `None` if the run is still live
/// after the whole sequence.
pub type PolicyOutcome = Option<(Terminal, usize)>;

/// Accept at the first check whose last `k` verdicts are all passes, reject at
/// the first whose last `m` are all major fails, abort at check `cap`.
pub fn reference_policy(seq: &[Verdict], k: usize, m: usize, cap: usize) -> PolicyOutcome {
    for end in 1..=seq.len() {
        let window = |len: usize, v: Verdict| end >= len && seq[end - len..end].iter().all(|&x| x == v);
        if window(k, Verdict::Pass) {
            return Some((Terminal::Accept, end));
        }
        if window(m, Verdict::MajorFail) {
            return Some((Terminal::Reject, end));
        }
        if end >= cap {
            return Some((Terminal::Abort, end));
        }
    }
    None
}

/// Every sequence over {pass, minor, major} of exactly `len` verdicts, in
/// lexicographic order.
pub fn all_sequences(len: usize) -> impl Iterator<Item = Vec<Verdict>> {
    let total = 3usize.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut seq = vec![Verdict::Pass; len];
        for slot in seq.iter_mut().rev() {
            *slot = Verdict::ALL[code % 3];
            code /= 3;
        }
        seq
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainResult {
    pub p_accept: f64,
    pub p_reject: f64,
    pub p_abort: f64,
    pub expected_checks: f64,
    /// Variance of the number of checks to absorption.
    pub var_checks: f64,
}

/// Exact absorption probabilities when each check independently passes with
/// probability `p_pass` and otherwise is a major fail.
///
/// Transient states are (pass streak, major streak) at a given iteration; the
/// distribution is pushed forward one check at a time until the cap.
pub fn chain_oracle(p_pass: f64, k: u32, m: u32, cap: u32) -> ChainResult {
    let mut live: HashMap<(u32, u32), f64> = HashMap::from([((0, 0), 1.0)]);
    let (mut accept, mut reject, mut abort) = (0.0, 0.0, 0.0);
    let (mut e1, mut e2) = (0.0, 0.0);
    for iteration in 1..=cap {
        let mut next: HashMap<(u32, u32), f64> = HashMap::new();
        let t = f64::from(iteration);
        for (&(passes, majors), &mass) in &live {
            for (state, p) in [((passes + 1, 0), p_pass), ((0, majors + 1), 1.0 - p_pass)] {
                let w = mass * p;
                if w == 0.0 {
                    continue;
                }
                let absorbed = if state.0 >= k {
                    accept += w;
                    true
                } else if state.1 >= m {
                    reject += w;
                    true
                } else if iteration >= cap {
                    abort += w;
                    true
                } else {
                    false
                };
                if absorbed {
                    e1 += w * t;
                    e2 += w * t * t;
                } else {
                    *next.entry(state).or_default() += w;
                }
            }
        }
        live = next;
    }
    ChainResult {
        p_accept: accept,
        p_reject: reject,
        p_abort: abort,
        expected_checks: e1,
        var_checks: e2 - e1 * e1,
    }
}

pub mod corpus {
    use super::*;

    #[derive(Debug, Clone, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Fixture {
        pub id: String,
        pub problem: Option<String>,
        pub hint: Option<String>,
        pub solution: Option<String>,
        pub report: String,
        /// `correct`, `invalid` or `gaps_only`.
        pub verdict: String,
        /// One letter per finding: C = critical error, G = justification gap.
        pub classes: String,
    }

    #[derive(Deserialize)]
    struct Manifest {
        fixture: Vec<Fixture>,
    }

    pub fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus")
    }

    pub fn read(relative: &str) -> String {
        let path = dir().join(relative);
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
    }

    pub fn fixtures() -> Vec<Fixture> {
        let manifest: Manifest = toml::from_str(&read("manifest.toml")).expect("corpus manifest");
        manifest.fixture
    }

    pub fn fixture(id: &str) -> Fixture {
        fixtures()
            .into_iter()
            .find(|f| f.id == id)
            .unwrap_or_else(|| panic!("no fixture {id}"))
    }
}
