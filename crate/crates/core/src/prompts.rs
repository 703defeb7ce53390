//! Prompt templates and slot filling.
//!
//! The solver and verifier templates are reproduced verbatim and their
//! SHA-256 digests are pinned in `assets/prompts/manifest.toml`. The
//! self-improvement, correction and auto-review templates are reconstructions
//! and are labelled as such in the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{BugReport, Problem, SolutionDraft, ValidationError, VerdictKind};

const MANIFEST: &str = include_str!("../assets/prompts/manifest.toml");

const EMBEDDED: &[(&str, &str)] = &[
    ("solver.txt", include_str!("../assets/prompts/solver.txt")),
    ("verifier.txt", include_str!("../assets/prompts/verifier.txt")),
    ("self_improve.txt", include_str!("../assets/prompts/self_improve.txt")),
    ("correction.txt", include_str!("../assets/prompts/correction.txt")),
    ("auto_review.txt", include_str!("../assets/prompts/auto_review.txt")),
];

/// Separator line used between prompt sections.
pub const SECTION_RULE: &str =
    "======================================================================";

pub const VERIFIER_PROBLEM_TOKEN: &str = "[Paste the TeX for the problem statement here]";
pub const VERIFIER_SOLUTION_TOKEN: &str = "[Paste the TeX for the solution to be verified here]";

static SLOT_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*[A-Za-z_][A-Za-z0-9_]*\s*\}\}").unwrap());

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("the bug report has no surviving findings and a correct verdict; nothing to correct")]
    NothingToCorrect,
    #[error("template {name}: digest {actual} does not match manifest digest {expected}")]
    DigestMismatch {
        name: TemplateName,
        expected: String,
        actual: String,
    },
    #[error("template {name}: {reason}")]
    Placeholders { name: TemplateName, reason: String },
    #[error("prompt manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Solver,
    Verifier,
    SelfImprove,
    Correction,
    AutoReview,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::Solver,
        TemplateName::Verifier,
        TemplateName::SelfImprove,
        TemplateName::Correction,
        TemplateName::AutoReview,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Solver => "solver",
            TemplateName::Verifier => "verifier",
            TemplateName::SelfImprove => "self_improve",
            TemplateName::Correction => "correction",
            TemplateName::AutoReview => "auto_review",
        }
    }

    fn slots(self) -> &'static [(&'static str, &'static str)] {
        match self {
            TemplateName::Solver => &[],
            TemplateName::Verifier => &[
                ("problem", VERIFIER_PROBLEM_TOKEN),
                ("solution", VERIFIER_SOLUTION_TOKEN),
            ],
            TemplateName::SelfImprove => &[
                ("instructions", "{{instructions}}"),
                ("problem", "{{problem}}"),
                ("draft", "{{draft}}"),
            ],
            TemplateName::Correction => &[
                ("instructions", "{{instructions}}"),
                ("problem", "{{problem}}"),
                ("draft", "{{draft}}"),
                ("verdict", "{{verdict}}"),
                ("findings", "{{findings}}"),
            ],
            TemplateName::AutoReview => &[
                ("problem", "{{problem}}"),
                ("draft", "{{draft}}"),
                ("findings", "{{findings}}"),
            ],
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TemplateName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| PromptError::Manifest(format!("unknown template name {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Verbatim,
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    pub provenance: Provenance,
    pub sha256: String,
}

impl PromptTemplate {
    /// Placeholder tokens this template declares, in declaration order.
    pub fn placeholder_tokens(&self) -> impl Iterator<Item = &'static str> {
        self.name.slots().iter().map(|(_, token)| *token)
    }

    fn check_placeholders(&self) -> Result<(), PromptError> {
        let fail = |reason: String| PromptError::Placeholders {
            name: self.name,
            reason,
        };
        for (_, token) in self.name.slots() {
            let count = self.body.matches(token).count();
            if count != 1 {
                return Err(fail(format!("{token} appears {count} times, expected once")));
            }
        }
        for found in SLOT_TOKEN.find_iter(&self.body) {
            if !self.name.slots().iter().any(|(_, t)| *t == found.as_str()) {
                return Err(fail(format!("undeclared placeholder {}", found.as_str())));
            }
        }
        Ok(())
    }

    /// Fill every declared slot exactly once, scanning the template left to
    /// right. Slot content is inserted as-is and never rescanned.
    fn fill(&self, values: &[(&'static str, String)]) -> RenderedPrompt {
        let mut positions: Vec<(usize, &str, &str)> = self
            .name
            .slots()
            .iter()
            .map(|(slot, token)| {
                let at = self.body.find(token).expect("placeholders checked at load");
                (at, *slot, *token)
            })
            .collect();
        positions.sort_unstable_by_key(|(at, _, _)| *at);

        let lookup = |slot: &str| -> &str {
            values
                .iter()
                .find(|(name, _)| *name == slot)
                .map(|(_, v)| v.as_str())
                .expect("every declared slot is supplied")
        };

        let mut text = String::with_capacity(
            self.body.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>(),
        );
        let mut cursor = 0;
        for (at, slot, token) in &positions {
            text.push_str(&self.body[cursor..*at]);
            text.push_str(lookup(slot));
            cursor = at + token.len();
        }
        text.push_str(&self.body[cursor..]);

        let mut warnings = Vec::new();
        for (slot, value) in values {
            for token in all_placeholder_tokens() {
                if value.contains(token) {
                    warnings.push(format!(
                        "content of slot {slot} contains the placeholder {token}"
                    ));
                }
            }
        }

        RenderedPrompt {
            template: self.name,
            text,
            slots_filled: values
                .iter()
                .map(|(k, v)| ((*k).to_string(), v.clone()))
                .collect(),
            warnings,
        }
    }
}

fn all_placeholder_tokens() -> impl Iterator<Item = &'static str> {
    let mut tokens: Vec<&'static str> = TemplateName::ALL
        .iter()
        .flat_map(|n| n.slots().iter().map(|(_, t)| *t))
        .collect();
    tokens.sort_unstable();
    tokens.dedup();
    tokens.into_iter()
}

/// Final prompt text ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: TemplateName,
    pub text: String,
    pub slots_filled: BTreeMap<String, String>,
    /// Placeholder collisions found in slot content.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RenderedPrompt {
    /// Placeholder tokens still present in the text.
    pub fn unfilled_placeholders(&self) -> Vec<String> {
        let mut found: Vec<String> = SLOT_TOKEN
            .find_iter(&self.text)
            .map(|m| m.as_str().to_string())
            .collect();
        for token in [VERIFIER_PROBLEM_TOKEN, VERIFIER_SOLUTION_TOKEN] {
            if self.text.contains(token) {
                found.push(token.to_string());
            }
        }
        found
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    template: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub provenance: Provenance,
    pub sha256: String,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn normalize_line_endings(text: &str) -> String {
    text.replace("\r\n", "\n")
}

/// The loaded, digest-checked template set.
#[derive(Debug, Clone)]
pub struct PromptKit {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

static STANDARD: LazyLock<PromptKit> =
    LazyLock::new(|| PromptKit::load_embedded().expect("embedded prompt templates are consistent"));

impl PromptKit {
    /// The templates compiled into this crate.
    pub fn standard() -> &'static PromptKit {
        &STANDARD
    }

    pub fn load_embedded() -> Result<PromptKit, PromptError> {
        Self::load(MANIFEST, |file| {
            EMBEDDED
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, body)| (*body).to_string())
        })
    }

    /// Load from a manifest and a file resolver. Every template must be present
    /// and match its manifest digest.
    pub fn load(
        manifest: &str,
        mut read: impl FnMut(&str) -> Option<String>,
    ) -> Result<PromptKit, PromptError> {
        let manifest: ManifestFile =
            toml::from_str(manifest).map_err(|e| PromptError::Manifest(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for entry in manifest.template {
            let name: TemplateName = entry.name.parse()?;
            let body = read(&entry.file)
                .map(|b| normalize_line_endings(&b))
                .ok_or_else(|| PromptError::Manifest(format!("missing file {}", entry.file)))?;
            let actual = sha256_hex(&body);
            if actual != entry.sha256 {
                return Err(PromptError::DigestMismatch {
                    name,
                    expected: entry.sha256,
                    actual,
                });
            }
            let template = PromptTemplate {
                name,
                body,
                provenance: entry.provenance,
                sha256: actual,
            };
            template.check_placeholders()?;
            if templates.insert(name, template).is_some() {
                return Err(PromptError::Manifest(format!("duplicate template {name}")));
            }
        }
        for name in TemplateName::ALL {
            if !templates.contains_key(&name) {
                return Err(PromptError::Manifest(format!("template {name} not listed")));
            }
        }
        Ok(PromptKit { templates })
    }

    pub fn template(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    /// Solver instructions, the problem statement, then the hint (if any) as a
    /// separate instruction line.
    pub fn render_solver(&self, problem: &Problem) -> Result<RenderedPrompt, PromptError> {
        problem.validate()?;
        let template = self.template(TemplateName::Solver);
        let mut text = template.body.clone();
        text.push_str(SECTION_RULE);
        text.push_str("\n### Problem ###\n\n");
        text.push_str(problem.statement.trim_end());
        text.push('\n');
        let mut slots_filled = BTreeMap::from([("problem".to_string(), problem.statement.clone())]);
        if let Some(hint) = &problem.hint {
            text.push('\n');
            text.push_str(hint.trim());
            text.push('\n');
            slots_filled.insert("hint".to_string(), hint.clone());
        }
        Ok(RenderedPrompt {
            template: TemplateName::Solver,
            text,
            slots_filled,
            warnings: Vec::new(),
        })
    }

    pub fn render_verifier(
        &self,
        problem: &Problem,
        draft: &SolutionDraft,
    ) -> Result<RenderedPrompt, PromptError> {
        problem.validate()?;
        require_body(draft)?;
        Ok(self.template(TemplateName::Verifier).fill(&[
            ("problem", problem.statement.clone()),
            ("solution", draft.body.clone()),
        ]))
    }

    pub fn render_self_improve(
        &self,
        problem: &Problem,
        draft: &SolutionDraft,
    ) -> Result<RenderedPrompt, PromptError> {
        problem.validate()?;
        require_body(draft)?;
        Ok(self.template(TemplateName::SelfImprove).fill(&[
            ("instructions", self.template(TemplateName::Solver).body.clone()),
            ("problem", problem.statement.clone()),
            ("draft", draft.body.clone()),
        ]))
    }

    /// Correction prompt carrying only the findings that survived review.
    pub fn render_correction(
        &self,
        problem: &Problem,
        draft: &SolutionDraft,
        report: &BugReport,
    ) -> Result<RenderedPrompt, PromptError> {
        problem.validate()?;
        require_body(draft)?;
        if report.active_findings().next().is_none() && report.verdict_kind == VerdictKind::Correct
        {
            return Err(PromptError::NothingToCorrect);
        }
        let verdict = if report.verdict_sentence.trim().is_empty() {
            "(no verdict sentence was given)".to_string()
        } else {
            report.verdict_sentence.trim().to_string()
        };
        Ok(self.template(TemplateName::Correction).fill(&[
            ("instructions", self.template(TemplateName::Solver).body.clone()),
            ("problem", problem.statement.clone()),
            ("draft", draft.body.clone()),
            ("verdict", verdict),
            ("findings", format_findings_list(report)),
        ]))
    }

    /// Prompt asking the model to audit each surviving finding. Findings are
    /// numbered by their 1-based position in the report.
    pub fn render_auto_review(
        &self,
        problem: &Problem,
        draft: &SolutionDraft,
        report: &BugReport,
    ) -> Result<RenderedPrompt, PromptError> {
        problem.validate()?;
        require_body(draft)?;
        let mut findings = String::new();
        for (index, finding) in report.active_findings() {
            if !findings.is_empty() {
                findings.push('\n');
            }
            findings.push_str(&format!(
                "Finding {} ({})\nLocation: \"{}\"\nIssue: {}\n",
                index + 1,
                finding.classification.label(),
                finding.location_quote,
                finding.explanation
            ));
        }
        if findings.is_empty() {
            findings.push_str("(none)\n");
        }
        Ok(self.template(TemplateName::AutoReview).fill(&[
            ("problem", problem.statement.clone()),
            ("draft", draft.body.clone()),
            ("findings", findings.trim_end().to_string()),
        ]))
    }
}

fn require_body(draft: &SolutionDraft) -> Result<(), ValidationError> {
    if draft.body.trim().is_empty() {
        return Err(ValidationError::new("draft.body", "must not be empty"));
    }
    Ok(())
}

/// Render surviving findings in the verifier's own summary format.
pub fn format_findings_list(report: &BugReport) -> String {
    let mut out = String::new();
    for (_, f) in report.active_findings() {
        out.push_str(&format!(
            "*   **Location:** \"{}\"\n    *   **Issue:** {} - {}\n",
            f.location_quote,
            f.classification.label(),
            f.explanation
        ));
    }
    if out.is_empty() {
        out.push_str("*   (no individual findings were listed)\n");
    }
    out.trim_end().to_string()
}
