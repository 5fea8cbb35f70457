use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionRule {
    Fenced,
    Indented,
    WholeText,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCandidate {
    pub raw: String,
    pub code: String,
    pub extraction_rule: ExtractionRule,
}

impl ExtractedCandidate {
    pub fn is_extractable(&self) -> bool {
        !self.code.trim().is_empty()
    }
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)(?:```|\z)").expect("valid regex"));

static CODE_START: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"^(?:(?:def|class|import|from|return|if|elif|else|for|while|try|except|finally|with|",
        r"async|await|assert|raise|yield|lambda|pass|break|continue|global|nonlocal|del|print)\b",
        r"|@|#|[)\]}]",
        r"|[A-Za-z_][\w.]*(?:\[[^\]]*\])?\s*(?:,\s*[A-Za-z_][\w.]*\s*)*(?:=|\+=|-=|\*=|/=|//=|%=|\|=|&=)",
        r"|[A-Za-z_][\w.]*\()"
    ))
    .expect("valid regex")
});

fn is_code_line(line: &str) -> bool {
    line.starts_with(' ') || line.starts_with('\t') || CODE_START.is_match(line)
}

/// Largest run of code-shaped lines (blank lines may sit inside a run), as line indices.
fn code_block(lines: &[&str]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None; // start, end (exclusive), code lines
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() || !is_code_line(lines[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        let mut count = 0;
        while i < lines.len() {
            if lines[i].trim().is_empty() {
                i += 1;
                continue;
            }
            if !is_code_line(lines[i]) {
                break;
            }
            count += 1;
            i += 1;
            end = i;
        }
        if best.is_none_or(|(_, _, c)| count > c) {
            best = Some((start, end, count));
        }
    }
    best.map(|(s, e, _)| (s, e))
}

/// Pulls a program out of a model answer. Rules in priority order: the first fenced block,
/// the largest code-shaped block when prose surrounds it, the whole text.
pub fn extract_code(completion: &str) -> ExtractedCandidate {
    let raw = completion.to_string();
    if let Some(c) = FENCE.captures(completion) {
        return ExtractedCandidate {
            code: c[1].to_string(),
            raw,
            extraction_rule: ExtractionRule::Fenced,
        };
    }
    let lines: Vec<&str> = completion.lines().collect();
    let non_blank = lines.iter().filter(|l| !l.trim().is_empty()).count();
    if let Some((start, end)) = code_block(&lines) {
        let code_lines = lines[start..end]
            .iter()
            .filter(|l| !l.trim().is_empty())
            .count();
        if code_lines < non_blank {
            let mut code = lines[start..end].join("\n");
            code.push('\n');
            return ExtractedCandidate {
                code,
                raw,
                extraction_rule: ExtractionRule::Indented,
            };
        }
    }
    ExtractedCandidate {
        code: raw.clone(),
        raw,
        extraction_rule: ExtractionRule::WholeText,
    }
}
