//! HTTP completion client. Endpoint, model, field names and authentication
//! all come from a config file; nothing provider-specific is hardcoded.

use std::io::Read;
use std::time::Duration;

use serde::Deserialize;

use super::{BackendError, CompletionBackend, CompletionRequest};

fn default_auth_header() -> String {
    "authorization".to_string()
}

fn default_auth_prefix() -> String {
    "Bearer ".to_string()
}

fn default_completion_pointer() -> String {
    "/choices/0/text".to_string()
}

fn default_max_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    250
}

fn default_timeout_secs() -> u64 {
    60
}

/// Wire names for the request body fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct FieldNames {
    pub model: String,
    pub prompt: String,
    pub max_tokens: String,
    pub temperature: String,
    pub stop: String,
}

impl Default for FieldNames {
    fn default() -> Self {
        Self {
            model: "model".to_string(),
            prompt: "prompt".to_string(),
            max_tokens: "max_tokens".to_string(),
            temperature: "temperature".to_string(),
            stop: "stop".to_string(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. The key is
    /// read once at construction and sent as `{auth_prefix}{key}` in
    /// `{auth_header}`.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    #[serde(default)]
    pub fields: FieldNames,
    /// JSON pointer to the completion text in the response body.
    #[serde(default = "default_completion_pointer")]
    pub completion_pointer: String,
    /// Extra fixed fields merged into every request body.
    #[serde(default)]
    pub extra_body: serde_json::Map<String, serde_json::Value>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl HttpBackendConfig {
    pub fn from_reader(mut reader: impl Read) -> Result<Self, BackendError> {
        let mut raw = String::new();
        reader
            .read_to_string(&mut raw)
            .map_err(|e| BackendError::InvalidRequest(format!("backend config: {e}")))?;
        serde_json::from_str(&raw)
            .map_err(|e| BackendError::InvalidRequest(format!("backend config: {e}")))
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::InvalidRequest(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    fn request_body(&self, request: &CompletionRequest) -> String {
        let fields = &self.config.fields;
        let mut body = serde_json::Map::new();
        body.insert(
            fields.model.clone(),
            serde_json::Value::String(self.config.model.clone()),
        );
        body.insert(
            fields.prompt.clone(),
            serde_json::Value::String(request.prompt.clone()),
        );
        body.insert(fields.max_tokens.clone(), request.max_tokens.into());
        body.insert(
            fields.temperature.clone(),
            serde_json::Number::from_f64(request.temperature)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::from(0)),
        );
        if !request.stop_sequences.is_empty() {
            body.insert(
                fields.stop.clone(),
                serde_json::Value::Array(
                    request
                        .stop_sequences
                        .iter()
                        .map(|s| serde_json::Value::String(s.clone()))
                        .collect(),
                ),
            );
        }
        for (key, value) in &self.config.extra_body {
            body.insert(key.clone(), value.clone());
        }
        serde_json::Value::Object(body).to_string()
    }

    fn attempt(&self, body: &str) -> Result<String, BackendError> {
        let mut builder = self
            .agent
            .post(&self.config.endpoint)
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            builder = builder.header(
                &self.config.auth_header,
                format!("{}{}", self.config.auth_prefix, key),
            );
        }
        let mut response = builder.send(body).map_err(|e| BackendError::Transport {
            status: None,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let raw = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport {
                status: Some(status),
                message: format!("while reading body: {e}"),
            })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Transport {
                status: Some(status),
                message: raw.chars().take(200).collect(),
            });
        }
        let parsed: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| BackendError::Transport {
                status: Some(status),
                message: format!("response is not JSON: {e}"),
            })?;
        parsed
            .pointer(&self.config.completion_pointer)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport {
                status: Some(status),
                message: format!(
                    "no completion text at {}",
                    self.config.completion_pointer
                ),
            })
    }
}

fn retryable(error: &BackendError) -> bool {
    match error {
        BackendError::Transport { status: None, .. } => true,
        BackendError::Transport { status: Some(s), .. } => *s >= 500 || *s == 429,
        _ => false,
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".to_string()));
        }
        let body = self.request_body(request);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(completion) => return Ok(completion),
                Err(error) if retryable(&error) && attempt < self.config.max_retries => {
                    let backoff =
                        Duration::from_millis(self.config.retry_backoff_ms << attempt);
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
                Err(error) => return Err(error),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::PurposeTag;
    use crate::stub_server::{CannedResponse, StubServer};

    fn config_for(server: &StubServer) -> HttpBackendConfig {
        let mut config: HttpBackendConfig = serde_json::from_str(&format!(
            r#"{{"endpoint": "{}", "model": "test-model"}}"#,
            server.url_for("/v1/completions")
        ))
        .unwrap();
        config.retry_backoff_ms = 1;
        config
    }

    fn request(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.to_string(),
            max_tokens: 64,
            temperature: 0.0,
            stop_sequences: vec!["\n\n".to_string()],
            purpose: PurposeTag::Split,
        }
    }

    #[test]
    fn posts_prompt_verbatim_and_extracts_completion() {
        let server = StubServer::start(vec![(
            "/v1/completions".to_string(),
            vec![CannedResponse::ok(r#"{"choices": [{"text": " yes"}]}"#)],
        )])
        .unwrap();
        let backend = HttpBackend::new(config_for(&server)).unwrap();
        let prompt = "line one\nline two with \"quotes\" and émoji 😀";
        let completion = backend.complete(&request(prompt)).unwrap();
        assert_eq!(completion, " yes");

        // The prompt field in the request body is byte-identical to what
        // was asked for.
        let hits = server.requests();
        assert_eq!(hits.len(), 1);
        let body: serde_json::Value =
            serde_json::from_str(hits[0].body.as_deref().unwrap()).unwrap();
        assert_eq!(body["prompt"].as_str().unwrap(), prompt);
        assert_eq!(body["model"].as_str().unwrap(), "test-model");
        assert_eq!(body["max_tokens"].as_u64().unwrap(), 64);
        assert_eq!(body["stop"][0].as_str().unwrap(), "\n\n");
    }

    #[test]
    fn retries_transient_failures_then_succeeds() {
        let server = StubServer::start(vec![(
            "/v1/completions".to_string(),
            vec![
                CannedResponse::with_status(500, "busy"),
                CannedResponse::with_status(429, "slow down"),
                CannedResponse::ok(r#"{"choices": [{"text": "ok"}]}"#),
            ],
        )])
        .unwrap();
        let backend = HttpBackend::new(config_for(&server)).unwrap();
        assert_eq!(backend.complete(&request("p")).unwrap(), "ok");
        assert_eq!(server.request_count(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let server = StubServer::start(vec![(
            "/v1/completions".to_string(),
            vec![CannedResponse::with_status(500, "down")],
        )])
        .unwrap();
        let backend = HttpBackend::new(config_for(&server)).unwrap();
        match backend.complete(&request("p")).unwrap_err() {
            BackendError::Transport { status: Some(500), .. } => {}
            other => panic!("unexpected error: {other}"),
        }
        assert_eq!(server.request_count(), 3);
    }

    #[test]
    fn non_retryable_status_fails_immediately() {
        let server = StubServer::start(vec![(
            "/v1/completions".to_string(),
            vec![CannedResponse::with_status(404, "nope")],
        )])
        .unwrap();
        let backend = HttpBackend::new(config_for(&server)).unwrap();
        assert!(backend.complete(&request("p")).is_err());
        assert_eq!(server.request_count(), 1);
    }

    #[test]
    fn custom_field_names_and_pointer() {
        let server = StubServer::start(vec![(
            "/generate".to_string(),
            vec![CannedResponse::ok(r#"{"output": {"text": "done"}}"#)],
        )])
        .unwrap();
        let config: HttpBackendConfig = serde_json::from_str(&format!(
            r#"{{
                "endpoint": "{}",
                "model": "m",
                "fields": {{"prompt": "input"}},
                "completion_pointer": "/output/text"
            }}"#,
            server.url_for("/generate")
        ))
        .unwrap();
        let backend = HttpBackend::new(config).unwrap();
        assert_eq!(backend.complete(&request("p")).unwrap(), "done");
        let hits = server.requests();
        let body: serde_json::Value =
            serde_json::from_str(hits[0].body.as_deref().unwrap()).unwrap();
        assert_eq!(body["input"].as_str().unwrap(), "p");
    }
}
