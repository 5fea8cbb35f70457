//! Deterministic mock backend.
//!
//! Behavior is a pure function of (prompt, sample index, mock seed):
//!
//! 1. a prompt containing any `fail_on` marker fails with a transport error;
//! 2. a deterministic `reject_rate` fraction of prompts answer with empty text;
//! 3. the first rule whose `contains` is a substring of the prompt answers with its canned
//!    text (or `responses[i % len]` for sample `i`);
//! 4. otherwise the fallback applies: `echo` answers `"EVOLVED: "` plus the prompt tail (the
//!    text after its last blank line), `empty` answers nothing, `fixed` a constant.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendSpec, GenerationRequest};
use crate::hashing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    Echo,
    Empty,
    Fixed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub contains: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
}

impl MockRule {
    pub fn canned(contains: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            contains: contains.into(),
            response: Some(response.into()),
            responses: Vec::new(),
        }
    }

    fn answer(&self, sample: usize) -> &str {
        match &self.response {
            Some(r) => r,
            None => &self.responses[sample % self.responses.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    #[serde(default)]
    pub seed: u64,
    pub fallback: MockFallback,
    #[serde(default)]
    pub reject_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fail_on: Vec<String>,
    /// Upper bound of a per-prompt artificial latency, in milliseconds.
    #[serde(default)]
    pub jitter_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<MockRule>,
}

impl MockConfig {
    pub fn echo(seed: u64) -> Self {
        Self {
            seed,
            fallback: MockFallback::Echo,
            reject_rate: 0.0,
            fail_on: Vec::new(),
            jitter_ms: 0,
            rules: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=1.0).contains(&self.reject_rate) {
            return Err(BackendError::InvalidSpec(format!(
                "reject_rate {} outside [0, 1]",
                self.reject_rate
            )));
        }
        for rule in &self.rules {
            if rule.contains.is_empty() {
                return Err(BackendError::InvalidSpec(
                    "rule with empty `contains`".into(),
                ));
            }
            if rule.response.is_some() == !rule.responses.is_empty() {
                return Err(BackendError::InvalidSpec(format!(
                    "rule {:?} needs exactly one of `response` or `responses`",
                    rule.contains
                )));
            }
        }
        Ok(())
    }

    /// Whether the mock answers `prompt` with empty text.
    pub fn rejects(&self, prompt: &str) -> bool {
        self.reject_rate > 0.0
            && hashing::unit_of(&[b"reject", &self.seed.to_le_bytes(), prompt.as_bytes()])
                < self.reject_rate
    }

    pub fn answer(&self, prompt: &str, sample: usize) -> String {
        if self.rejects(prompt) {
            return String::new();
        }
        if let Some(rule) = self.rules.iter().find(|r| prompt.contains(&r.contains)) {
            return rule.answer(sample).to_string();
        }
        match &self.fallback {
            MockFallback::Echo => format!("EVOLVED: {}", prompt_tail(prompt)),
            MockFallback::Empty => String::new(),
            MockFallback::Fixed(text) => text.clone(),
        }
    }
}

/// Text after the last blank line, trimmed.
pub fn prompt_tail(prompt: &str) -> &str {
    let trimmed = prompt.trim_end();
    match trimmed.rfind("\n\n") {
        Some(i) => trimmed[i + 2..].trim(),
        None => trimmed.trim(),
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    spec: BackendSpec,
    config: MockConfig,
}

impl MockBackend {
    pub fn new(spec: BackendSpec) -> Result<Self, BackendError> {
        let config = spec
            .mock
            .clone()
            .ok_or_else(|| BackendError::InvalidSpec(format!("{}: no [mock] table", spec.id)))?;
        config.validate()?;
        Ok(Self { spec, config })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }
}

impl Backend for MockBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        let key = match &request.insertion_suffix {
            Some(suffix) => format!("{}{}", request.prompt, suffix),
            None => request.prompt.clone(),
        };
        if self.config.jitter_ms > 0 {
            let ms = hashing::u64_of(&[b"jitter", &self.config.seed.to_le_bytes(), key.as_bytes()])
                % self.config.jitter_ms;
            std::thread::sleep(Duration::from_millis(ms));
        }
        if let Some(marker) = self
            .config
            .fail_on
            .iter()
            .find(|m| key.contains(m.as_str()))
        {
            return Err(BackendError::Transport(format!(
                "mock failure on marker {marker:?}"
            )));
        }
        Ok((0..request.params.n_samples as usize)
            .map(|i| self.config.answer(&request.prompt, i))
            .collect())
    }
}
