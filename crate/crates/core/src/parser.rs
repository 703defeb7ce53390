//! Line-oriented parsers for model output.
//!
//! Model responses mix Markdown and TeX and drift from the requested format,
//! so nothing here builds a Markdown tree. Each parser anchors on labels
//! ("Final Verdict", "Location", "Issue", section headings), tolerates bold
//! markers, bullet glyphs, numbering and spacing around them, and never fails:
//! anything it cannot make sense of comes back marked `Unparsed`.

use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::types::{BugReport, Classification, Finding, Severity, SummaryVerdict, VerdictKind};

/// Stand-in quote for an issue reported without a location.
pub const MISSING_LOCATION: &str = "[no location quoted]";

/// Sections of a solver response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverOutput {
    pub summary_verdict: SummaryVerdict,
    pub method_sketch: String,
    pub detailed_solution: String,
    pub raw: String,
}

/// Result of scanning a single finding line for its classification label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    CriticalError,
    JustificationGap,
    Unknown,
}

/// One per-finding answer from an auto-review response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewAnswer {
    /// 1-based position of the finding in the report.
    pub finding_number: usize,
    pub keep: bool,
    pub severity: Option<Severity>,
}

fn ci(pattern: &str) -> Regex {
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .build()
        .expect("static pattern")
}

// Bullets, heading hashes, bold/italic openers and list numbering ahead of a label.
const LEAD: &str = r"^\s*(?:[-*+•>#]+\s*)*(?:\*\*|__)?\s*(?:(?:\d{1,2}|[a-h])[.)]\s+)?(?:\*\*|__)?\s*";
// Closing emphasis and a separator after a label.
const TAIL: &str = r"\s*(?:\*\*|__)?\s*[:：\-–—]?\s*(?:\*\*|__)?\s*(?P<rest>.*?)\s*$";

fn label(name: &str) -> Regex {
    ci(&format!(r"{LEAD}(?:{name})\b{TAIL}"))
}

static FINAL_VERDICT: LazyLock<Regex> = LazyLock::new(|| label(r"(?:final\s+|overall\s+)?verdict"));
static LOCATION: LazyLock<Regex> = LazyLock::new(|| label(r"location"));
static ISSUE: LazyLock<Regex> = LazyLock::new(|| label(r"issue"));
static VERDICT: LazyLock<Regex> = LazyLock::new(|| label(r"verdict"));
static METHOD_SKETCH: LazyLock<Regex> = LazyLock::new(|| label(r"method\s+sketch"));

static CLASS_LABEL: LazyLock<Regex> =
    LazyLock::new(|| ci(r"critical[\s\-_]*errors?|justification[\s\-_]*gaps?"));
static LEADING_CLASS_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"^\s*(?:\*\*|__|\()?\s*(?:critical[\s\-_]*error|justification[\s\-_]*gap)s?\s*(?:\*\*|__|\))?\s*[\-–—:.,]?\s*")
});

static NEGATED_ISSUE: LazyLock<Regex> = LazyLock::new(|| {
    let issue = r"(?:any\s+)?(?:critical\s+errors?|justification\s+gaps?|gaps?|errors?|issues?|flaws?)";
    ci(&format!(
        r"\b(?:no|without|zero|free\s+of|not\s+contain)\s+{issue}(?:\s*(?:,|or|and|nor)\s*{issue})*\b"
    ))
});
static INVALID_CUE: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"\b(?:invalid|incorrect|critical\s+errors?|not\s+(?:correct|valid|rigorous|sound)|wrong|flawed|fails?|false)\b")
});
static GAPS_CUE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\b(?:justification\s+gaps?|gaps?|incomplete|lacks?\s+rigou?r)\b"));
static CORRECT_CUE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\b(?:correct|valid|rigorous|sound|complete)\b"));

static PARTIAL_CUE: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"not\s+found\s+a\s+complete\s+solution|partial\s+(?:solution|results?)|not\s+(?:been\s+able|able|managed)\s+to\s+(?:fully\s+)?solve|have\s+not\s+(?:fully\s+)?solved")
});
static COMPLETE_CUE: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"successfully\s+solved|(?:have|has)\s+(?:fully\s+)?solved\s+the\s+problem|found\s+a\s+complete\s+solution|complete\s+solution")
});

static REVIEW_ANSWER: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"finding\s*#?\s*(?P<n>\d{1,6})\s*(?:\([^)\n]*\))?\s*(?:\*\*|__)?\s*[:\-–—]?\s*(?:\*\*|__)?\s*(?P<action>keep|confirm|delete|remove|dismiss)\b(?:\s*(?:\*\*|__)?\s*[-,:(]?\s*(?P<sev>major|minor)\b)?")
});

fn strip_emphasis(text: &str) -> &str {
    let mut t = text.trim();
    for marker in ["**", "__"] {
        t = t.strip_prefix(marker).unwrap_or(t).trim_start();
        t = t.strip_suffix(marker).unwrap_or(t).trim_end();
    }
    t
}

/// A line reduced to its heading text: decoration, numbering and a trailing
/// colon removed, lowercased, inner whitespace collapsed.
fn heading_text(line: &str) -> String {
    let strip = |t: &str| -> String {
        t.trim()
            .trim_start_matches(|c: char| matches!(c, '#' | '*' | '_' | '-' | '+' | '•' | '>') || c.is_whitespace())
            .trim_end_matches(|c: char| matches!(c, '*' | '_' | ':' | '#') || c.is_whitespace())
            .to_string()
    };
    let trimmed = strip(line);
    let mut words: Vec<&str> = trimmed.split_whitespace().collect();
    if let Some(first) = words.first() {
        let is_number = first
            .strip_suffix(['.', ')'])
            .is_some_and(|n| !n.is_empty() && n.len() <= 2 && n.chars().all(|c| c.is_ascii_alphanumeric()));
        if is_number {
            words.remove(0);
        }
    }
    strip(&words.join(" ")).to_lowercase()
}

fn is_heading(line: &str, name: &str) -> bool {
    heading_text(line) == name
}

fn label_rest<'a>(re: &Regex, line: &'a str) -> Option<&'a str> {
    re.captures(line)
        .and_then(|c| c.name("rest"))
        .map(|m| m.as_str())
}

/// Remove one layer of enclosing quotes (straight, curly or backtick).
fn unquote(text: &str) -> &str {
    let t = strip_emphasis(text);
    let pairs = [('"', '"'), ('\u{201c}', '\u{201d}'), ('`', '`'), ('\'', '\'')];
    for (open, close) in pairs {
        if let Some(inner) = t.strip_prefix(open) {
            if let Some(end) = inner.rfind(close) {
                let quoted = &inner[..end];
                if !quoted.trim().is_empty() {
                    return quoted;
                }
            }
        }
    }
    t
}

fn next_content_line<'a>(lines: &[&'a str], from: usize) -> Option<(usize, &'a str)> {
    lines
        .iter()
        .enumerate()
        .skip(from)
        .find(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i, *l))
}

/// Classify a finding line by its literal label. The first label in the line
/// wins, so "Justification Gap - ... could become a critical error" stays a gap.
pub fn classify_finding_line(line: &str) -> LineClass {
    match CLASS_LABEL.find(line) {
        Some(m) if m.as_str().to_lowercase().starts_with("critical") => LineClass::CriticalError,
        Some(_) => LineClass::JustificationGap,
        None => LineClass::Unknown,
    }
}

fn verdict_from_sentence(sentence: &str) -> VerdictKind {
    let plain: String = sentence.replace(['*', '_', '`'], "");
    let plain = NEGATED_ISSUE.replace_all(&plain, " ");
    if INVALID_CUE.is_match(&plain) {
        VerdictKind::Invalid
    } else if GAPS_CUE.is_match(&plain) {
        VerdictKind::GapsOnly
    } else if CORRECT_CUE.is_match(&plain) {
        VerdictKind::Correct
    } else {
        VerdictKind::Unparsed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Findings,
    Log,
}

struct PendingFinding {
    quote: String,
    location_line: String,
    issue: Option<String>,
    in_section: bool,
}

impl PendingFinding {
    fn into_finding(self) -> Finding {
        let issue = self.issue.unwrap_or_default();
        let class = match classify_finding_line(&issue) {
            LineClass::Unknown => classify_finding_line(&self.location_line),
            c => c,
        };
        // An unlabelled issue is kept as a gap; unrated gaps already count as
        // major, so it still blocks acceptance.
        let classification = match class {
            LineClass::CriticalError => Classification::CriticalError,
            LineClass::JustificationGap | LineClass::Unknown => Classification::JustificationGap,
        };
        let explanation = match LEADING_CLASS_LABEL.find(&issue) {
            Some(m) => issue[m.end()..].trim(),
            None => issue.trim(),
        };
        let mut finding = Finding::new(self.quote, classification, strip_emphasis(explanation));
        finding.out_of_section = !self.in_section;
        finding
    }
}

/// Parse a verifier response into a bug report.
pub fn parse_bug_report(raw: &str) -> BugReport {
    let lines: Vec<&str> = raw.lines().collect();
    let mut section = Section::Preamble;
    let mut verdict_sentence: Option<String> = None;
    let mut findings: Vec<Finding> = Vec::new();
    let mut pending: Option<PendingFinding> = None;
    let mut skip_until = 0;

    let flush = |pending: &mut Option<PendingFinding>, findings: &mut Vec<Finding>| {
        if let Some(p) = pending.take() {
            findings.push(p.into_finding());
        }
    };

    for (i, line) in lines.iter().enumerate() {
        if i < skip_until {
            continue;
        }
        let heading = heading_text(line);
        match heading.as_str() {
            "list of findings" | "findings" => {
                flush(&mut pending, &mut findings);
                section = Section::Findings;
                continue;
            }
            "detailed verification log" | "verification log" => {
                flush(&mut pending, &mut findings);
                section = Section::Log;
                continue;
            }
            _ => {}
        }

        if verdict_sentence.is_none() {
            if let Some(rest) = label_rest(&FINAL_VERDICT, line) {
                let rest = rest.trim();
                if rest.is_empty() {
                    if let Some((j, next)) = next_content_line(&lines, i + 1) {
                        verdict_sentence = Some(next.trim().to_string());
                        skip_until = j + 1;
                    }
                } else {
                    verdict_sentence = Some(rest.to_string());
                }
                continue;
            }
        }

        if let Some(rest) = label_rest(&LOCATION, line) {
            flush(&mut pending, &mut findings);
            let mut quote_source = rest.trim();
            if quote_source.is_empty() {
                if let Some((j, next)) = next_content_line(&lines, i + 1) {
                    if label_rest(&ISSUE, next).is_none() {
                        quote_source = next.trim();
                        skip_until = j + 1;
                    }
                }
            }
            let quote = unquote(quote_source).trim();
            pending = Some(PendingFinding {
                quote: if quote.is_empty() { MISSING_LOCATION.to_string() } else { quote.to_string() },
                location_line: line.to_string(),
                issue: None,
                in_section: section == Section::Findings,
            });
            continue;
        }

        if let Some(rest) = label_rest(&ISSUE, line) {
            let has_slot = pending.as_ref().is_some_and(|p| p.issue.is_none());
            if !has_slot {
                flush(&mut pending, &mut findings);
                pending = Some(PendingFinding {
                    quote: MISSING_LOCATION.to_string(),
                    location_line: String::new(),
                    issue: None,
                    in_section: section == Section::Findings,
                });
            }
            if let Some(p) = pending.as_mut() {
                p.issue = Some(rest.trim().to_string());
            }
        }
    }
    flush(&mut pending, &mut findings);

    // Drop out-of-section repeats of findings already listed in the summary.
    let listed: Vec<(String, Classification)> = findings
        .iter()
        .filter(|f| !f.out_of_section)
        .map(|f| (f.location_quote.clone(), f.classification))
        .collect();
    findings.retain(|f| {
        !f.out_of_section || !listed.contains(&(f.location_quote.clone(), f.classification))
    });

    // The verdict reflects the sentence only; findings feed the pass predicate
    // separately, so a review that deletes every finding can still pass.
    let verdict_kind = verdict_sentence
        .as_deref()
        .map_or(VerdictKind::Unparsed, verdict_from_sentence);

    BugReport {
        verdict_sentence: verdict_sentence.unwrap_or_default(),
        verdict_kind,
        findings,
        raw: raw.to_string(),
    }
}

fn join_lines(lines: &[&str]) -> String {
    lines.join("\n").trim().to_string()
}

/// Split a solver response into verdict, method sketch and detailed solution.
pub fn parse_solver_output(raw: &str) -> SolverOutput {
    let lines: Vec<&str> = raw.lines().collect();
    let summary_at = lines.iter().position(|l| is_heading(l, "summary"));
    let search_from = summary_at.map_or(0, |s| s + 1);
    let detailed_at = lines
        .iter()
        .enumerate()
        .skip(search_from)
        .find(|(_, l)| is_heading(l, "detailed solution"))
        .map(|(i, _)| i);
    let summary_end = detailed_at.unwrap_or(lines.len());

    let summary_lines = &lines[search_from..summary_end];
    let verdict_at = summary_lines.iter().position(|l| VERDICT.is_match(l));
    let sketch_at = summary_lines.iter().position(|l| METHOD_SKETCH.is_match(l));

    let method_sketch = match sketch_at {
        Some(s) => {
            let mut parts = vec![label_rest(&METHOD_SKETCH, summary_lines[s]).unwrap_or("")];
            parts.extend_from_slice(&summary_lines[s + 1..]);
            join_lines(&parts)
        }
        None => String::new(),
    };

    let verdict_text = match verdict_at {
        Some(v) => {
            let end = sketch_at.filter(|&s| s > v).unwrap_or(summary_lines.len());
            let mut parts = vec![label_rest(&VERDICT, summary_lines[v]).unwrap_or("")];
            parts.extend_from_slice(&summary_lines[v + 1..end]);
            parts.join(" ")
        }
        None => {
            let end = sketch_at.unwrap_or(summary_lines.len());
            summary_lines[..end].join(" ")
        }
    };

    let detailed_solution = match detailed_at {
        Some(d) => join_lines(&lines[d + 1..]),
        None => String::new(),
    };

    let plain = verdict_text.replace(['*', '_'], "");
    let summary_verdict = if detailed_solution.is_empty() {
        SummaryVerdict::Unparsed
    } else if PARTIAL_CUE.is_match(&plain) {
        SummaryVerdict::Partial
    } else if COMPLETE_CUE.is_match(&plain) {
        SummaryVerdict::Complete
    } else {
        SummaryVerdict::Unparsed
    };

    SolverOutput {
        summary_verdict,
        method_sketch,
        detailed_solution,
        raw: raw.to_string(),
    }
}

/// Read per-finding answers from an auto-review response. The first answer
/// for a given finding number wins; unreadable lines are ignored.
pub fn parse_review_response(raw: &str) -> Vec<ReviewAnswer> {
    let mut answers: Vec<ReviewAnswer> = Vec::new();
    for caps in REVIEW_ANSWER.captures_iter(raw) {
        let Some(number) = caps.name("n").and_then(|m| m.as_str().parse::<usize>().ok()) else {
            continue;
        };
        if number == 0 || answers.iter().any(|a| a.finding_number == number) {
            continue;
        }
        let action = caps["action"].to_lowercase();
        let keep = matches!(action.as_str(), "keep" | "confirm");
        let severity = caps.name("sev").map(|m| {
            if m.as_str().eq_ignore_ascii_case("minor") {
                Severity::Minor
            } else {
                Severity::Major
            }
        });
        answers.push(ReviewAnswer {
            finding_number: number,
            keep,
            severity: if keep { severity } else { None },
        });
    }
    answers
}
