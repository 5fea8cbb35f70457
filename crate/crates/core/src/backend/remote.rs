//! HTTP completion endpoint.
//!
//! Request body: `{"prompt", "suffix"?, "temperature", "top_p", "max_new_tokens", "n"}`.
//! Response body: `{"choices": [text, ...]}`. When `auth_env_var` is set, its value is sent as
//! a bearer token.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendSpec, GenerationRequest};

#[derive(Debug, Serialize, PartialEq)]
pub struct WireRequest<'a> {
    pub prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suffix: Option<&'a str>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub n: u32,
}

impl<'a> WireRequest<'a> {
    pub fn from_request(request: &'a GenerationRequest) -> Self {
        Self {
            prompt: &request.prompt,
            suffix: request.insertion_suffix.as_deref(),
            temperature: request.params.wire_temperature(),
            top_p: request.params.wire_top_p(),
            max_new_tokens: request.params.max_new_tokens,
            n: request.params.n_samples,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct WireResponse {
    pub choices: Vec<String>,
}

pub struct RemoteBackend {
    spec: BackendSpec,
    url: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(spec: BackendSpec) -> Result<Self, BackendError> {
        let url = spec
            .base_url
            .clone()
            .ok_or_else(|| BackendError::InvalidSpec(format!("{}: missing base_url", spec.id)))?;
        let timeout = Duration::from_secs(spec.request_timeout_secs.unwrap_or(300));
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { spec, url, agent })
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.spec.auth_env_var {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(BackendError::AuthMissing(var.clone())),
            },
        }
    }
}

impl Backend for RemoteBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        let token = self.token()?;
        let mut call = self.agent.post(&self.url);
        if let Some(token) = token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = call
            .send_json(WireRequest::from_request(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Http {
                status,
                body: body.chars().take(512).collect(),
            });
        }
        let parsed: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("unreadable response body: {e}")))?;
        Ok(parsed.choices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::DecodingParams;

    #[test]
    fn wire_body_shape() {
        let req = GenerationRequest {
            prompt: "p".into(),
            insertion_suffix: Some("s".into()),
            params: DecodingParams::ds1000(),
            tag: "t".into(),
        };
        let body = serde_json::to_value(WireRequest::from_request(&req)).unwrap();
        assert_eq!(
            body,
            serde_json::json!({"prompt":"p","suffix":"s","temperature":0.2,"top_p":0.5,"max_new_tokens":1024,"n":40})
        );
        let greedy = GenerationRequest {
            insertion_suffix: None,
            params: DecodingParams::greedy(),
            ..req
        };
        let body = serde_json::to_value(WireRequest::from_request(&greedy)).unwrap();
        assert_eq!(body["temperature"], 0.0);
        assert!(body.get("suffix").is_none());
    }
}
