//! Uniform completion interface: a remote HTTP text-completion client, a
//! deterministic replay source, scripted backends for tests, and a
//! recording wrapper that captures every exchange.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod http;
pub mod transcript;

pub use http::{HttpBackend, HttpBackendConfig};
pub use transcript::{
    load_transcript, write_transcript, Transcript, TranscriptEntry, TranscriptError,
};

/// What a completion is for. Metadata only; recorded in transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurposeTag {
    Split,
    MemoryCheck,
    ToolPick,
    ToolInput,
    AnswerSynthesis,
}

impl PurposeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PurposeTag::Split => "split",
            PurposeTag::MemoryCheck => "memory_check",
            PurposeTag::ToolPick => "tool_pick",
            PurposeTag::ToolInput => "tool_input",
            PurposeTag::AnswerSynthesis => "answer_synthesis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub purpose: PurposeTag,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("completion transport failure{}: {message}", status.map(|s| format!(" with status {s}")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("completion budget of {budget} calls exhausted")]
    BudgetExceeded { budget: u32 },
    #[error("replay mismatch at entry {index}: transcript prompt digest {expected} but live prompt digest {actual}")]
    ReplayMismatch {
        index: u64,
        expected: String,
        actual: String,
    },
    #[error("replay transcript exhausted after {index} entries")]
    ReplayExhausted { index: u64 },
    #[error("completion request invalid: {0}")]
    InvalidRequest(String),
}

/// A source of completions. One engine run calls this strictly
/// sequentially; implementations must be safe to share across runs.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Hex-encoded SHA-256 of the exact prompt bytes.
pub fn prompt_digest(prompt: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Returns canned completions in order, regardless of the prompts.
pub struct ScriptedBackend {
    completions: Mutex<(Vec<String>, usize)>,
}

impl ScriptedBackend {
    pub fn new(completions: Vec<impl Into<String>>) -> Self {
        Self {
            completions: Mutex::new((
                completions.into_iter().map(Into::into).collect(),
                0,
            )),
        }
    }

    pub fn calls(&self) -> usize {
        self.completions.lock().unwrap().1
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".to_string()));
        }
        let mut guard = self.completions.lock().unwrap();
        let (script, cursor) = &mut *guard;
        if *cursor >= script.len() {
            return Err(BackendError::ReplayExhausted {
                index: *cursor as u64,
            });
        }
        let completion = script[*cursor].clone();
        *cursor += 1;
        Ok(completion)
    }
}

/// Adapter for ad-hoc test backends written as closures.
pub struct CallbackBackend<F>(pub F);

impl<F> CompletionBackend for CallbackBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (self.0)(request)
    }
}

/// Replays a recorded transcript. Every live prompt is digest-checked
/// against the stored entry, so a prompt-construction change surfaces as a
/// mismatch at the exact point of divergence.
pub struct ReplayBackend {
    entries: Vec<TranscriptEntry>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().unwrap()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".to_string()));
        }
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(BackendError::ReplayExhausted {
                index: *cursor as u64,
            })?;
        let actual = prompt_digest(&request.prompt);
        if actual != entry.prompt_digest {
            return Err(BackendError::ReplayMismatch {
                index: entry.index,
                expected: entry.prompt_digest.clone(),
                actual,
            });
        }
        *cursor += 1;
        Ok(entry.completion.clone())
    }
}

/// Wraps another backend and appends a transcript entry for every
/// successful completion. Appends are serialized so indices are contiguous
/// and globally ordered.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn transcript(&self) -> Transcript {
        Transcript::new(self.entries())
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<(), TranscriptError> {
        let file = std::fs::File::create(path).map_err(TranscriptError::Io)?;
        write_transcript(&self.entries(), file)
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let completion = self.inner.complete(request)?;
        let mut entries = self.entries.lock().unwrap();
        let index = entries.len() as u64;
        entries.push(TranscriptEntry {
            index,
            purpose: request.purpose,
            prompt_digest: prompt_digest(&request.prompt),
            prompt: request.prompt.clone(),
            completion: completion.clone(),
        });
        Ok(completion)
    }
}
