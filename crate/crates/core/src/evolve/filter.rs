use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::corpus::normalize_instruction;

/// Shipped refusal patterns (`config/refusal_patterns.txt`).
pub const DEFAULT_REFUSAL_PATTERNS: &str = include_str!("../../config/refusal_patterns.txt");

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum Rejection {
    EmptyOutput,
    Unchanged,
    Length(usize),
    Refusal(String),
}

impl Rejection {
    pub fn label(&self) -> &'static str {
        match self {
            Rejection::EmptyOutput => "empty_output",
            Rejection::Unchanged => "unchanged",
            Rejection::Length(_) => "length",
            Rejection::Refusal(_) => "refusal",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::EmptyOutput => write!(f, "empty output"),
            Rejection::Unchanged => write!(f, "output identical to parent"),
            Rejection::Length(n) => write!(f, "output length {n} outside bounds"),
            Rejection::Refusal(p) => write!(f, "refusal pattern {p:?} matched"),
        }
    }
}

/// Post-evolution checks on a backend's rewritten instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityFilter {
    pub min_chars: usize,
    pub max_chars: usize,
    /// Case-insensitive substrings.
    pub refusal_patterns: Vec<String>,
}

impl Default for ValidityFilter {
    fn default() -> Self {
        Self {
            min_chars: 10,
            max_chars: 2048,
            refusal_patterns: parse_patterns(DEFAULT_REFUSAL_PATTERNS),
        }
    }
}

/// One pattern per line; blank lines and `#` comments are skipped.
pub fn parse_patterns(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

impl ValidityFilter {
    pub fn with_patterns_file(path: &Path) -> Result<Self, EvolveError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvolveError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            refusal_patterns: parse_patterns(&text),
            ..Self::default()
        })
    }

    /// Returns the trimmed instruction to keep, or why it was dropped.
    pub fn check(&self, parent_instruction: &str, output: &str) -> Result<String, Rejection> {
        let text = output.trim();
        if text.is_empty() {
            return Err(Rejection::EmptyOutput);
        }
        if normalize_instruction(text) == normalize_instruction(parent_instruction) {
            return Err(Rejection::Unchanged);
        }
        let chars = text.chars().count();
        if chars < self.min_chars || chars > self.max_chars {
            return Err(Rejection::Length(chars));
        }
        let lower = text.to_lowercase();
        if let Some(p) = self
            .refusal_patterns
            .iter()
            .find(|p| lower.contains(&p.to_lowercase()))
        {
            return Err(Rejection::Refusal(p.clone()));
        }
        Ok(text.to_string())
    }
}
