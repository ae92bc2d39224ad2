//! Tool registry loading, HTTP request construction and execution.

use std::io::Read;
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Deserialize;
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::types::{HttpMethod, ToolInput, ToolSpec};

/// RFC 3986 component encoding: everything but unreserved characters is
/// percent-encoded, so a space becomes %20.
const QUERY_COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~');

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool config format error: {0}")]
    Format(String),
    #[error("tool config invalid: {0}")]
    Validation(String),
    #[error("tool request failed{}: {message}", status.map(|s| format!(" with status {s}")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("tool request timed out after {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fully assembled HTTP request for one tool call. GET requests carry all
/// parameters in the query string; POST requests carry them as a JSON body.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolRequest {
    pub method: HttpMethod,
    pub url: String,
    pub body: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    tools: Vec<ToolRecord>,
}

#[derive(Debug, Deserialize)]
struct ToolRecord {
    #[serde(default)]
    id: Option<u32>,
    name: String,
    description: String,
    method: HttpMethod,
    endpoint: String,
    #[serde(default)]
    dynamic_params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    static_params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    static_headers: serde_json::Map<String, serde_json::Value>,
}

/// Load and validate a tool registry from JSON. Missing ids are assigned by
/// file order starting at 1; explicit ids must already form 1..k. Static
/// parameter values may reference environment variables as `${VAR}`.
pub fn load_registry(reader: impl Read) -> Result<Vec<ToolSpec>, ToolError> {
    load_registry_with_env(reader, &|name| std::env::var(name).ok())
}

pub fn load_registry_with_env(
    mut reader: impl Read,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<Vec<ToolSpec>, ToolError> {
    let mut raw = String::new();
    reader.read_to_string(&mut raw)?;
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    let file: RegistryFile =
        serde_json::from_str(&raw).map_err(|e| ToolError::Format(e.to_string()))?;

    let mut specs = Vec::with_capacity(file.tools.len());
    for (position, record) in file.tools.into_iter().enumerate() {
        let id = record.id.unwrap_or(position as u32 + 1);
        let dynamic_params = string_pairs(&record.dynamic_params, &record.name, "dynamic_params")?;
        let static_params = string_pairs(&record.static_params, &record.name, "static_params")?
            .into_iter()
            .map(|(k, v)| Ok((k, expand_env(&v, env)?)))
            .collect::<Result<Vec<_>, ToolError>>()?;
        let static_headers = string_pairs(&record.static_headers, &record.name, "static_headers")?
            .into_iter()
            .map(|(k, v)| Ok((k, expand_env(&v, env)?)))
            .collect::<Result<Vec<_>, ToolError>>()?;
        specs.push(ToolSpec {
            id,
            name: record.name,
            description: record.description,
            dynamic_params,
            method: record.method,
            endpoint: record.endpoint,
            static_params,
            static_headers,
        });
    }
    validate_registry(&specs)?;
    Ok(specs)
}

fn string_pairs(
    map: &serde_json::Map<String, serde_json::Value>,
    tool: &str,
    field: &str,
) -> Result<Vec<(String, String)>, ToolError> {
    map.iter()
        .map(|(k, v)| match v.as_str() {
            Some(s) => Ok((k.clone(), s.to_string())),
            None => Err(ToolError::Format(format!(
                "tool {tool:?}: {field}.{k} must be a string"
            ))),
        })
        .collect()
}

fn expand_env(value: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<String, ToolError> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(open) = rest.find("${") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find('}').ok_or_else(|| {
            ToolError::Validation(format!("unterminated ${{...}} reference in {value:?}"))
        })?;
        let name = &after[..close];
        let resolved = env(name).ok_or_else(|| {
            ToolError::Validation(format!("environment variable {name} is not set"))
        })?;
        out.push_str(&resolved);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Reject duplicate names, non-contiguous ids, static/dynamic key overlap,
/// relative endpoints and empty descriptions.
pub fn validate_registry(specs: &[ToolSpec]) -> Result<(), ToolError> {
    let mut names = std::collections::BTreeSet::new();
    for spec in specs {
        if !names.insert(spec.name.as_str()) {
            return Err(ToolError::Validation(format!(
                "duplicate tool name {:?}",
                spec.name
            )));
        }
        if spec.description.trim().is_empty() {
            return Err(ToolError::Validation(format!(
                "tool {:?} has an empty description",
                spec.name
            )));
        }
        if !(spec.endpoint.starts_with("http://") || spec.endpoint.starts_with("https://")) {
            return Err(ToolError::Validation(format!(
                "tool {:?} endpoint {:?} is not an absolute http(s) URL",
                spec.name, spec.endpoint
            )));
        }
        for (name, _) in &spec.static_params {
            if spec.declares_dynamic(name) {
                return Err(ToolError::Validation(format!(
                    "tool {:?} declares {name:?} as both static and dynamic",
                    spec.name
                )));
            }
        }
    }
    let mut ids: Vec<u32> = specs.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    for (index, id) in ids.iter().enumerate() {
        let expected = index as u32 + 1;
        if *id != expected {
            return Err(ToolError::Validation(format!(
                "tool ids must form 1..{} with no gaps or duplicates, found id {}",
                specs.len(),
                id
            )));
        }
    }
    Ok(())
}

/// Assemble the request for one tool call.
///
/// GET: `endpoint?static...&dynamic...` with static parameters first, each
/// group in declaration order, keys and values component-encoded. With zero
/// parameters the URL is the bare endpoint, no "?". POST: the URL is the
/// bare endpoint and the body is a JSON object merging static then dynamic
/// parameters.
pub fn build_request(spec: &ToolSpec, input: &ToolInput) -> ToolRequest {
    let ordered_dynamic: Vec<(&str, &str)> = spec
        .dynamic_params
        .iter()
        .filter_map(|(name, _)| input.get(name).map(|value| (name.as_str(), value)))
        .collect();
    match spec.method {
        HttpMethod::Get => {
            let mut pairs: Vec<String> = Vec::new();
            for (key, value) in &spec.static_params {
                pairs.push(format!(
                    "{}={}",
                    utf8_percent_encode(key, QUERY_COMPONENT),
                    utf8_percent_encode(value, QUERY_COMPONENT)
                ));
            }
            for (key, value) in &ordered_dynamic {
                pairs.push(format!(
                    "{}={}",
                    utf8_percent_encode(key, QUERY_COMPONENT),
                    utf8_percent_encode(value, QUERY_COMPONENT)
                ));
            }
            let url = if pairs.is_empty() {
                spec.endpoint.clone()
            } else {
                format!("{}?{}", spec.endpoint, pairs.join("&"))
            };
            ToolRequest {
                method: HttpMethod::Get,
                url,
                body: None,
            }
        }
        HttpMethod::Post => {
            let mut body = serde_json::Map::new();
            for (key, value) in &spec.static_params {
                body.insert(key.clone(), serde_json::Value::String(value.clone()));
            }
            for (key, value) in &ordered_dynamic {
                body.insert(key.to_string(), serde_json::Value::String(value.to_string()));
            }
            ToolRequest {
                method: HttpMethod::Post,
                url: spec.endpoint.clone(),
                body: Some(serde_json::Value::Object(body).to_string()),
            }
        }
    }
}

/// Perform the request and return the response body as a string, replacing
/// invalid UTF-8. Any non-2xx status is a transport error carrying the
/// status and a body prefix.
pub fn execute(
    request: &ToolRequest,
    timeout: Duration,
    headers: &[(String, String)],
) -> Result<String, ToolError> {
    let agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .new_agent();
    let result = match request.method {
        HttpMethod::Get => {
            let mut builder = agent.get(&request.url);
            for (name, value) in headers {
                builder = builder.header(name, value);
            }
            builder.call()
        }
        HttpMethod::Post => {
            let mut builder = agent.post(&request.url).header("content-type", "application/json");
            for (name, value) in headers {
                builder = builder.header(name, value);
            }
            builder.send(request.body.as_deref().unwrap_or(""))
        }
    };
    let mut response = result.map_err(|e| match e {
        ureq::Error::Timeout(_) => ToolError::Timeout(timeout),
        other => ToolError::Transport {
            status: None,
            message: other.to_string(),
        },
    })?;
    let status = response.status().as_u16();
    let bytes = response.body_mut().read_to_vec().map_err(|e| ToolError::Transport {
        status: Some(status),
        message: format!("while reading body: {e}"),
    })?;
    let body = String::from_utf8_lossy(&bytes).into_owned();
    if !(200..300).contains(&status) {
        let prefix: String = body.chars().take(200).collect();
        return Err(ToolError::Transport {
            status: Some(status),
            message: prefix,
        });
    }
    Ok(body)
}

/// Cut a string down to at most `limit` characters. The cut never splits a
/// user-perceived character: when the limit falls inside a grapheme cluster
/// the cut backs off to the previous cluster boundary.
pub fn truncate(body: &str, limit: usize) -> String {
    assert!(limit > 0, "truncation limit must be positive");
    let mut chars_taken = 0usize;
    let mut cut = 0usize;
    for (offset, grapheme) in body.grapheme_indices(true) {
        let grapheme_chars = grapheme.chars().count();
        if chars_taken + grapheme_chars > limit {
            return body[..offset].to_string();
        }
        chars_taken += grapheme_chars;
        cut = offset + grapheme.len();
    }
    body[..cut].to_string()
}
