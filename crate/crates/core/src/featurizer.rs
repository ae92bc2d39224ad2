//! Question featurization and cosine similarity for the recursion guard.

use serde::Serialize;
use thiserror::Error;

use crate::types::FeaturizerChoice;

/// Dimension of the built-in trigram featurizer.
pub const TRIGRAM_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum FeaturizerError {
    #[error("cannot featurize empty text")]
    EmptyText,
    #[error("vectors have different dimensions: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("remote featurizer transport failure: {0}")]
    Transport(String),
}

/// A fixed-length numeric embedding of a piece of text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// cos(a, b) = dot(a, b) / (|a| * |b|)
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64, FeaturizerError> {
    if a.dimension() != b.dimension() {
        return Err(FeaturizerError::DimensionMismatch(
            a.dimension(),
            b.dimension(),
        ));
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(FeaturizerError::ZeroVector);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

pub trait Featurize: Send + Sync {
    fn featurize(&self, text: &str) -> Result<FeatureVector, FeaturizerError>;
}

/// Local deterministic featurizer: L2-normalized counts of character
/// trigrams over the lowercased text, hashed with FNV-1a into a
/// fixed-size bucket vector. Texts shorter than three characters hash as a
/// single whole-string gram so no non-empty input maps to the zero vector.
#[derive(Debug, Default, Clone)]
pub struct TrigramFeaturizer;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in bytes {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

impl Featurize for TrigramFeaturizer {
    fn featurize(&self, text: &str) -> Result<FeatureVector, FeaturizerError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(FeaturizerError::EmptyText);
        }
        let lowered = trimmed.to_lowercase();
        let chars: Vec<char> = lowered.chars().collect();

        let mut counts = vec![0.0f64; TRIGRAM_DIM];
        if chars.len() < 3 {
            let bucket = (fnv1a64(lowered.as_bytes()) % TRIGRAM_DIM as u64) as usize;
            counts[bucket] += 1.0;
        } else {
            for window in chars.windows(3) {
                let gram: String = window.iter().collect();
                let bucket = (fnv1a64(gram.as_bytes()) % TRIGRAM_DIM as u64) as usize;
                counts[bucket] += 1.0;
            }
        }

        let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
        for value in &mut counts {
            *value /= norm;
        }
        Ok(FeatureVector::new(counts))
    }
}

/// Featurizer that calls a remote embedding endpoint. Request shape is the
/// common `{"model": ..., "input": ...}` embedding API; the response vector
/// is located with a configurable JSON pointer.
pub struct RemoteFeaturizer {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    embedding_pointer: String,
    agent: ureq::Agent,
}

impl RemoteFeaturizer {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
        embedding_pointer: impl Into<String>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            embedding_pointer: embedding_pointer.into(),
            agent,
        }
    }
}

impl Featurize for RemoteFeaturizer {
    fn featurize(&self, text: &str) -> Result<FeatureVector, FeaturizerError> {
        if text.trim().is_empty() {
            return Err(FeaturizerError::EmptyText);
        }
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .header("content-type", "application/json")
            .send(body.to_string())
            .map_err(|e| FeaturizerError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let raw = response
            .body_mut()
            .read_to_string()
            .map_err(|e| FeaturizerError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(FeaturizerError::Transport(format!("status {status}")));
        }
        let parsed: serde_json::Value = serde_json::from_str(&raw)
            .map_err(|e| FeaturizerError::Transport(format!("bad response json: {e}")))?;
        let values = parsed
            .pointer(&self.embedding_pointer)
            .and_then(|v| v.as_array())
            .ok_or_else(|| {
                FeaturizerError::Transport(format!(
                    "no embedding at {}",
                    self.embedding_pointer
                ))
            })?
            .iter()
            .map(|v| v.as_f64().ok_or(FeaturizerError::ZeroVector))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.iter().all(|v| *v == 0.0) {
            return Err(FeaturizerError::ZeroVector);
        }
        Ok(FeatureVector::new(values))
    }
}

/// Build the featurizer selected by the engine config.
pub fn build_featurizer(choice: &FeaturizerChoice) -> Result<Box<dyn Featurize>, FeaturizerError> {
    match choice {
        FeaturizerChoice::Trigram => Ok(Box::new(TrigramFeaturizer)),
        FeaturizerChoice::Remote {
            endpoint,
            api_key_env,
            model,
            embedding_pointer,
        } => {
            let api_key = match api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    FeaturizerError::Transport(format!("environment variable {var} is not set"))
                })?),
                None => None,
            };
            Ok(Box::new(RemoteFeaturizer::new(
                endpoint.clone(),
                api_key,
                model.clone(),
                embedding_pointer.clone(),
            )))
        }
    }
}
