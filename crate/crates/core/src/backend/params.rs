use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMode {
    Greedy,
    Sampling,
}

/// Decoding configuration sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingParams {
    pub mode: DecodingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    pub max_new_tokens: u32,
    pub n_samples: u32,
}

impl DecodingParams {
    /// Single deterministic attempt per problem.
    pub fn greedy() -> Self {
        Self {
            mode: DecodingMode::Greedy,
            temperature: None,
            top_p: None,
            max_new_tokens: 1024,
            n_samples: 1,
        }
    }

    /// Sampled pass@1 estimate for HumanEval and MBPP: temperature 0.2, top-p 0.95.
    pub fn humaneval_sampling() -> Self {
        Self {
            mode: DecodingMode::Sampling,
            temperature: Some(0.2),
            top_p: Some(0.95),
            max_new_tokens: 1024,
            n_samples: 20,
        }
    }

    /// DS-1000 protocol: temperature 0.2, top-p 0.5, 1024 new tokens, 40 samples.
    pub fn ds1000() -> Self {
        Self {
            mode: DecodingMode::Sampling,
            temperature: Some(0.2),
            top_p: Some(0.5),
            max_new_tokens: 1024,
            n_samples: 40,
        }
    }

    pub fn sampling(temperature: f64, top_p: f64, max_new_tokens: u32, n_samples: u32) -> Self {
        Self {
            mode: DecodingMode::Sampling,
            temperature: Some(temperature),
            top_p: Some(top_p),
            max_new_tokens,
            n_samples,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::InvalidParams(m.to_string()));
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        match self.mode {
            DecodingMode::Greedy => {
                if self.n_samples != 1 {
                    return bad("greedy decoding produces exactly one sample");
                }
                if self.temperature.is_some_and(|t| t != 0.0) {
                    return bad("greedy decoding takes no temperature");
                }
            }
            DecodingMode::Sampling => {
                match self.temperature {
                    Some(t) if t > 0.0 && t.is_finite() => {}
                    _ => return bad("sampling needs a temperature > 0"),
                }
                match self.top_p {
                    Some(p) if p > 0.0 && p <= 1.0 => {}
                    None => {}
                    _ => return bad("top_p must lie in (0, 1]"),
                }
            }
        }
        Ok(())
    }

    /// Temperature as sent on the wire (0 for greedy).
    pub fn wire_temperature(&self) -> f64 {
        match self.mode {
            DecodingMode::Greedy => 0.0,
            DecodingMode::Sampling => self.temperature.unwrap_or(1.0),
        }
    }

    pub fn wire_top_p(&self) -> f64 {
        match self.mode {
            DecodingMode::Greedy => 1.0,
            DecodingMode::Sampling => self.top_p.unwrap_or(1.0),
        }
    }
}
