//! Generates verifier reports in the requested summary format with randomized
//! markdown decoration, together with what a parser should recover from them.

use proptest::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedVerdict {
    Correct,
    Invalid,
    GapsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedClass {
    Critical,
    Gap,
}

#[derive(Debug, Clone)]
pub struct ExpectedFinding {
    pub class: ExpectedClass,
    pub quote: String,
}

#[derive(Debug, Clone)]
pub struct EmittedReport {
    pub text: String,
    pub verdict: ExpectedVerdict,
    pub findings: Vec<ExpectedFinding>,
}

const CORRECT: &[&str] = &[
    "The solution is correct.",
    "The solution is **correct**.",
    "The proof is complete and rigorous.",
    "The solution is correct and contains no critical errors or justification gaps.",
    "Correct. Every step is justified.",
];
const INVALID: &[&str] = &[
    "The solution is **invalid** because it contains a Critical Error.",
    "The solution is invalid.",
    "The argument is not correct.",
    "The proof is flawed: a key inequality is wrong.",
];
const GAPS: &[&str] = &[
    "The solution's approach is viable but contains several Justification Gaps.",
    "The solution is mostly sound but has gaps.",
    "The argument lacks rigor in two places.",
    "The solution is incomplete.",
];

const QUOTE_WORDS: &[&str] = &[
    "Hence", "$f(x) = x^2$", "for all", "$n \\ge 1$", "we obtain", "$a_{n+1} < a_n$", "the limit",
    "is attained", "By symmetry,", "$\\angle ABC = 90^\\circ$", "so", "$k$", "divides", "$p^2 - 1$",
    "and therefore", "$\\sum_{i=1}^n i$", "equals", "the circumcircle",
];
const EXPLANATION_WORDS: &[&str] = &[
    "The", "step", "assumes", "continuity", "without", "proof", "and", "the", "bound", "is",
    "used", "before", "it", "has", "been", "established", "which", "leaves", "a", "case", "open",
];

/// Decoration choices shared by every label line in one report.
#[derive(Debug, Clone)]
struct Style {
    bold: &'static str,
    bullet: &'static str,
    indent: usize,
    after_colon: &'static str,
    verdict_on_next_line: bool,
    label_case: u8,
    separator: &'static str,
    quote_open: &'static str,
    quote_close: &'static str,
    numbered_sections: bool,
    crlf: bool,
    trailing_log: u8,
}

fn style() -> impl Strategy<Value = Style> {
    (
        (
            prop::sample::select(vec!["**", "", "__"]),
            prop::sample::select(vec!["*   ", "* ", "- ", "+ ", "• ", "", "1. "]),
            0usize..7,
            prop::sample::select(vec![" ", "", "   "]),
            any::<bool>(),
            0u8..4,
        ),
        (
            prop::sample::select(vec![" - ", ": ", " – ", ". ", " -- "]),
            prop::sample::select(vec![("\"", "\""), ("\u{201c}", "\u{201d}"), ("`", "`")]),
            any::<bool>(),
            prop::bool::weighted(0.2),
            0u8..3,
        ),
    )
        .prop_map(
            |(
                (bold, bullet, indent, after_colon, verdict_on_next_line, label_case),
                (separator, (quote_open, quote_close), numbered_sections, crlf, trailing_log),
            )| Style {
                bold,
                bullet,
                indent,
                after_colon,
                verdict_on_next_line,
                label_case,
                separator,
                quote_open,
                quote_close,
                numbered_sections,
                crlf,
                trailing_log,
            },
        )
}

fn finding() -> impl Strategy<Value = (ExpectedClass, String, String)> {
    (
        prop_oneof![Just(ExpectedClass::Critical), Just(ExpectedClass::Gap)],
        prop::collection::vec(prop::sample::select(QUOTE_WORDS), 1..7),
        prop::collection::vec(prop::sample::select(EXPLANATION_WORDS), 3..14),
    )
        .prop_map(|(class, q, e)| (class, q.join(" "), e.join(" ") + "."))
}

/// Reports with 0 to 6 findings under randomized decoration.
pub fn emitted_report() -> impl Strategy<Value = EmittedReport> {
    let verdict = prop_oneof![
        Just(ExpectedVerdict::Correct),
        Just(ExpectedVerdict::Invalid),
        Just(ExpectedVerdict::GapsOnly)
    ];
    (verdict, any::<prop::sample::Index>(), prop::collection::vec(finding(), 0..7), style())
        .prop_map(|(verdict, pick, findings, style)| render(verdict, pick, &findings, &style))
}

fn label_text(style: &Style, label: &str) -> String {
    match style.label_case {
        0 => label.to_string(),
        1 => label.to_uppercase(),
        2 => label.to_lowercase(),
        _ => label.split(' ').map(|w| w.to_string()).collect::<Vec<_>>().join("  "),
    }
}

fn class_label(style: &Style, class: ExpectedClass) -> String {
    let base = match class {
        ExpectedClass::Critical => "Critical Error",
        ExpectedClass::Gap => "Justification Gap",
    };
    match style.label_case {
        0 => base.to_string(),
        1 => format!("**{base}**"),
        2 => base.to_lowercase(),
        _ => format!("({base})"),
    }
}

fn render(
    verdict: ExpectedVerdict,
    pick: prop::sample::Index,
    findings: &[(ExpectedClass, String, String)],
    style: &Style,
) -> EmittedReport {
    let pool = match verdict {
        ExpectedVerdict::Correct => CORRECT,
        ExpectedVerdict::Invalid => INVALID,
        ExpectedVerdict::GapsOnly => GAPS,
    };
    let sentence = pool[pick.index(pool.len())];
    let b = style.bold;
    let pad = " ".repeat(style.indent);
    let labelled = |indent: &str, label: &str| {
        format!("{indent}{}{b}{}:{b}{}", style.bullet, label_text(style, label), style.after_colon)
    };

    let mut lines = Vec::new();
    let (summary, log) = if style.numbered_sections {
        ("**1. Summary**", "**2. Detailed Verification Log**")
    } else {
        ("### Summary ###", "### Detailed Verification Log ###")
    };
    lines.push(summary.to_string());
    lines.push(String::new());
    if style.verdict_on_next_line {
        lines.push(labelled("", "Final Verdict").trim_end().to_string());
        lines.push(sentence.to_string());
    } else {
        lines.push(format!("{}{sentence}", labelled("", "Final Verdict")));
    }
    lines.push(String::new());
    lines.push(labelled("", "List of Findings").trim_end().to_string());
    for (class, quote, explanation) in findings {
        lines.push(format!(
            "{}{}{quote}{}",
            labelled(&pad, "Location"),
            style.quote_open,
            style.quote_close
        ));
        lines.push(format!(
            "{}{}{}{explanation}",
            labelled(&format!("{pad}    "), "Issue"),
            class_label(style, *class),
            style.separator
        ));
    }
    lines.push(String::new());
    lines.push(log.to_string());
    lines.push(String::new());
    match style.trailing_log {
        0 => {}
        1 => lines.push("Each step was checked line by line.".to_string()),
        _ => {
            // Repeat the findings in the log, as verifiers often do.
            for (class, quote, explanation) in findings {
                lines.push(format!("* Location: \"{quote}\""));
                lines.push(format!("  * Issue: {} - {explanation}", class_label(style, *class)));
            }
        }
    }
    let eol = if style.crlf { "\r\n" } else { "\n" };
    let mut text = lines.join(eol);
    text.push_str(eol);

    EmittedReport {
        text,
        verdict,
        findings: findings
            .iter()
            .map(|(class, quote, _)| ExpectedFinding {
                class: *class,
                quote: quote.clone(),
            })
            .collect(),
    }
}
