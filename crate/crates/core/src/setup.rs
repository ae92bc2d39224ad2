//! Builds a ready-to-run engine from config files. Shared by the CLI and
//! the C bindings.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::backend::{
    load_transcript, CompletionBackend, HttpBackend, HttpBackendConfig, RecordingBackend,
    ReplayBackend,
};
use crate::engine::{Engine, EngineError};
use crate::featurizer::build_featurizer;
use crate::prompting::PromptSet;
use crate::tools::load_registry;
use crate::types::EngineConfig;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("engine config {path}: {message}")]
    EngineConfig { path: String, message: String },
    #[error("backend config {path}: {message}")]
    BackendConfig { path: String, message: String },
    #[error("tool registry {path}: {message}")]
    Registry { path: String, message: String },
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("record and replay are mutually exclusive")]
    RecordAndReplay,
    #[error("no completion backend: pass a backend config or a replay transcript")]
    NoBackend,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Where completions come from, plus the recorder when one is attached.
pub struct BuiltEngine {
    pub engine: Engine,
    pub recorder: Option<Arc<RecordingBackend<Box<dyn CompletionBackend>>>>,
}

pub struct SetupPaths<'a> {
    pub engine_config: Option<&'a Path>,
    pub backend_config: Option<&'a Path>,
    pub tools: Option<&'a Path>,
    pub replay: Option<&'a Path>,
    pub record: bool,
}

pub fn load_engine_config(path: Option<&Path>) -> Result<EngineConfig, SetupError> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|source| SetupError::Read {
                path: path.display().to_string(),
                source,
            })?;
            let config: EngineConfig =
                serde_json::from_str(&raw).map_err(|e| SetupError::EngineConfig {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            config.validate().map_err(|e| SetupError::EngineConfig {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(config)
        }
    }
}

pub fn build_engine(paths: &SetupPaths) -> Result<BuiltEngine, SetupError> {
    if paths.record && paths.replay.is_some() {
        return Err(SetupError::RecordAndReplay);
    }

    let config = load_engine_config(paths.engine_config)?;

    let registry = match paths.tools {
        None => Vec::new(),
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|source| SetupError::Read {
                path: path.display().to_string(),
                source,
            })?;
            load_registry(file).map_err(|e| SetupError::Registry {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
        }
    };

    let inner: Box<dyn CompletionBackend> = match (paths.replay, paths.backend_config) {
        (Some(transcript_path), _) => {
            let file =
                std::fs::File::open(transcript_path).map_err(|source| SetupError::Read {
                    path: transcript_path.display().to_string(),
                    source,
                })?;
            let entries = load_transcript(file).map_err(|e| SetupError::Transcript {
                path: transcript_path.display().to_string(),
                message: e.to_string(),
            })?;
            Box::new(ReplayBackend::new(entries))
        }
        (None, Some(backend_path)) => {
            let file = std::fs::File::open(backend_path).map_err(|source| SetupError::Read {
                path: backend_path.display().to_string(),
                source,
            })?;
            let config =
                HttpBackendConfig::from_reader(file).map_err(|e| SetupError::BackendConfig {
                    path: backend_path.display().to_string(),
                    message: e.to_string(),
                })?;
            Box::new(
                HttpBackend::new(config).map_err(|e| SetupError::BackendConfig {
                    path: backend_path.display().to_string(),
                    message: e.to_string(),
                })?,
            )
        }
        (None, None) => return Err(SetupError::NoBackend),
    };

    let (backend, recorder): (
        Arc<dyn CompletionBackend>,
        Option<Arc<RecordingBackend<Box<dyn CompletionBackend>>>>,
    ) = if paths.record {
        let recorder = Arc::new(RecordingBackend::new(inner));
        (recorder.clone(), Some(recorder))
    } else {
        (Arc::from(inner), None)
    };

    let featurizer = build_featurizer(&config.featurizer)
        .map_err(|e| SetupError::EngineConfig {
            path: "featurizer".to_string(),
            message: e.to_string(),
        })?;

    let engine = Engine::new(
        config,
        registry,
        backend,
        Arc::from(featurizer),
        PromptSet::builtin(),
    )?;
    Ok(BuiltEngine { engine, recorder })
}
