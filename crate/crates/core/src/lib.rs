//! REBEL: answer compositional questions by recursively splitting them
//! into subquestions, accumulating facts, and calling HTTP tools described
//! only in natural language when memory is not enough.
//!
//! - [`types`]: domain types and the engine configuration
//! - [`backend`]: completion sources (HTTP, replay, scripted) and
//!   transcript recording
//! - [`prompting`]: prompt rendering and completion parsing
//! - [`featurizer`]: question embeddings for the recursion guard
//! - [`tools`]: tool registry, request construction and execution
//! - [`engine`]: the recursive answering procedure
//! - [`eval`]: dataset loading, grading and reporting
//! - [`cli`]: the `rebel` binary
//! - [`stub_server`]: canned-response HTTP server for tests and offline use

pub mod backend;
pub mod cli;
pub mod engine;
pub mod eval;
pub mod featurizer;
pub mod prompting;
pub mod setup;
pub mod stub_server;
pub mod tools;
pub mod types;

pub use engine::{Engine, EngineError};
pub use types::{AnswerResult, EngineConfig, Fact, Memory, Question, ToolInput, ToolSpec};
