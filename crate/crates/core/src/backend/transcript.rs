//! Line-delimited transcript files.
//!
//! The first line is a header naming the format and digest algorithm:
//! `{"format":"rebel-transcript","version":1,"digest":"sha256-hex"}`.
//! Every following line is one entry with keys index, purpose,
//! prompt_digest, prompt, completion. Indices are contiguous from 0 and
//! every digest is verified on load.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{prompt_digest, PurposeTag};

pub const TRANSCRIPT_FORMAT: &str = "rebel-transcript";
pub const TRANSCRIPT_VERSION: u32 = 1;
pub const TRANSCRIPT_DIGEST: &str = "sha256-hex";

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("transcript integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub index: u64,
    pub purpose: PurposeTag,
    pub prompt_digest: String,
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptHeader {
    format: String,
    version: u32,
    digest: String,
}

/// An in-memory transcript: an ordered list of verified entries.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self { entries }
    }
}

/// Parse and verify a transcript stream. An empty stream is a valid empty
/// transcript.
pub fn load_transcript(reader: impl Read) -> Result<Vec<TranscriptEntry>, TranscriptError> {
    let reader = BufReader::new(reader);
    let mut entries = Vec::new();
    let mut expected_index = 0u64;
    let mut saw_header = false;

    for (number, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = number + 1;
        if !saw_header {
            if line.trim().is_empty() {
                continue;
            }
            let header: TranscriptHeader =
                serde_json::from_str(&line).map_err(|e| TranscriptError::Format {
                    line: line_no,
                    message: format!("bad header: {e}"),
                })?;
            if header.format != TRANSCRIPT_FORMAT {
                return Err(TranscriptError::Format {
                    line: line_no,
                    message: format!("unknown format {:?}", header.format),
                });
            }
            if header.version != TRANSCRIPT_VERSION {
                return Err(TranscriptError::Format {
                    line: line_no,
                    message: format!("unsupported version {}", header.version),
                });
            }
            if header.digest != TRANSCRIPT_DIGEST {
                return Err(TranscriptError::Format {
                    line: line_no,
                    message: format!("unsupported digest algorithm {:?}", header.digest),
                });
            }
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry =
            serde_json::from_str(&line).map_err(|e| TranscriptError::Format {
                line: line_no,
                message: e.to_string(),
            })?;
        if entry.index != expected_index {
            return Err(TranscriptError::Integrity(format!(
                "expected index {expected_index} but line {line_no} has index {}",
                entry.index
            )));
        }
        let recomputed = prompt_digest(&entry.prompt);
        if recomputed != entry.prompt_digest {
            return Err(TranscriptError::Integrity(format!(
                "entry {} prompt digest {} does not match recomputed {recomputed}",
                entry.index, entry.prompt_digest
            )));
        }
        expected_index += 1;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_transcript_file(
    path: &std::path::Path,
) -> Result<Vec<TranscriptEntry>, TranscriptError> {
    load_transcript(std::fs::File::open(path)?)
}

pub fn write_transcript(
    entries: &[TranscriptEntry],
    mut writer: impl Write,
) -> Result<(), TranscriptError> {
    let header = TranscriptHeader {
        format: TRANSCRIPT_FORMAT.to_string(),
        version: TRANSCRIPT_VERSION,
        digest: TRANSCRIPT_DIGEST.to_string(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header).expect("header json"))?;
    for entry in entries {
        writeln!(
            writer,
            "{}",
            serde_json::to_string(entry).expect("entry json")
        )?;
    }
    Ok(())
}
