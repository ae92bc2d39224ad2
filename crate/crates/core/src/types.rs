//! Domain types shared by every other module.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violations of the basic domain invariants.
#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("question text is empty")]
    EmptyQuestionText,
    #[error("fact has an empty {0} field")]
    EmptyFactField(&'static str),
    #[error("config field {field} out of range: {message}")]
    ConfigOutOfRange {
        field: &'static str,
        message: String,
    },
}

/// A question or subquestion inside one engine run. Depth 0 is the
/// user-provided question; each recursion level adds 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    text: String,
    depth: u32,
}

impl Question {
    pub fn new(text: impl Into<String>, depth: u32) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyQuestionText);
        }
        Ok(Self { text, depth })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }
}

/// A (question, answer) pair, the unit of accumulated knowledge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub question: String,
    pub answer: String,
}

impl Fact {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Result<Self, DomainError> {
        let question = question.into();
        let answer = answer.into();
        if question.is_empty() {
            return Err(DomainError::EmptyFactField("question"));
        }
        if answer.is_empty() {
            return Err(DomainError::EmptyFactField("answer"));
        }
        Ok(Self { question, answer })
    }
}

/// Ordered, append-only list of facts gathered during one run.
///
/// The only mutation is `push`, so any snapshot taken earlier in a run is a
/// prefix of every later snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    facts: Vec<Fact>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, fact: Fact) {
        self.facts.push(fact);
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn is_prefix_of(&self, later: &Memory) -> bool {
        later.facts.len() >= self.facts.len() && later.facts[..self.facts.len()] == self.facts[..]
    }
}

/// HTTP method a tool request uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpMethod {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "POST")]
    Post,
}

impl std::fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpMethod::Get => write!(f, "GET"),
            HttpMethod::Post => write!(f, "POST"),
        }
    }
}

/// One registered tool. The description and dynamic parameters are shown to
/// the model; method, endpoint and static parameters stay hidden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: u32,
    pub name: String,
    pub description: String,
    /// Ordered name -> description pairs; order fixes the query-string order.
    pub dynamic_params: Vec<(String, String)>,
    pub method: HttpMethod,
    pub endpoint: String,
    /// Ordered name -> fixed value pairs, never shown to the model.
    pub static_params: Vec<(String, String)>,
    /// Fixed request headers (extension, e.g. bearer tokens). Hidden.
    #[serde(default)]
    pub static_headers: Vec<(String, String)>,
}

impl ToolSpec {
    pub fn declares_dynamic(&self, name: &str) -> bool {
        self.dynamic_params.iter().any(|(n, _)| n == name)
    }
}

/// Values for a tool's dynamic parameters, parsed from a model completion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolInput {
    /// Parameter name -> value, in the order they were supplied.
    pub values: Vec<(String, String)>,
}

impl ToolInput {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.values
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

/// How a trace node produced its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum Resolution {
    /// Answered from memory / parametric knowledge.
    Memory,
    /// Answered through a tool call.
    Tool { id: u32 },
    /// Tool path failed or was unavailable; answered from memory instead.
    Fallback {
        tool_id: Option<u32>,
        reason: String,
    },
}

/// One node of the decomposition tree recorded during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceNode {
    pub question: String,
    pub depth: u32,
    /// None only when the run failed before this node resolved.
    pub resolution: Option<Resolution>,
    /// Subquestions removed by the similarity guard.
    pub deleted_subquestions: Vec<String>,
    /// Whether splitting was still allowed after the guard pass.
    pub allow_split: bool,
    pub notes: Vec<String>,
    pub elapsed_ms: u64,
    pub children: Vec<TraceNode>,
}

impl TraceNode {
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TraceNode::node_count).sum::<usize>()
    }

    /// Timing-free summary of the tree, for equality checks across replays.
    pub fn fingerprint(&self) -> String {
        let res = match &self.resolution {
            None => "unresolved".to_string(),
            Some(Resolution::Memory) => "memory".to_string(),
            Some(Resolution::Tool { id }) => format!("tool:{id}"),
            Some(Resolution::Fallback { tool_id, .. }) => {
                format!("fallback:{}", tool_id.map_or(0, |i| i))
            }
        };
        let children: Vec<String> = self.children.iter().map(TraceNode::fingerprint).collect();
        format!("({:?} {} [{}])", self.question, res, children.join(" "))
    }
}

/// Counters gathered over one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub completion_calls: u32,
    pub tool_calls: u32,
    pub wall_secs: f64,
}

/// Final product of answering one top-level question.
#[derive(Debug, Clone, Serialize)]
pub struct AnswerResult {
    pub answer: String,
    pub fact: Fact,
    pub trace: TraceNode,
    pub metrics: RunMetrics,
}

/// Which featurizer the engine uses for the recursion guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturizerChoice {
    /// Local deterministic character-trigram hashing.
    Trigram,
    /// Remote embedding endpoint.
    Remote {
        endpoint: String,
        #[serde(default)]
        api_key_env: Option<String>,
        model: String,
        /// JSON pointer to the embedding array in the response.
        #[serde(default = "default_embedding_pointer")]
        embedding_pointer: String,
    },
}

fn default_embedding_pointer() -> String {
    "/data/0/embedding".to_string()
}

impl Default for FeaturizerChoice {
    fn default() -> Self {
        FeaturizerChoice::Trigram
    }
}

/// Engine-level knobs. Defaults match the behavior the rest of the crate is
/// tested against; every field can be overridden from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Subquestions more similar than this to their parent are deleted.
    pub similarity_threshold: f64,
    /// Maximum recursion depth; splitting stops at this depth.
    pub max_depth: u32,
    /// Tool output longer than this many characters is cut.
    pub truncation_limit: usize,
    /// Worked examples included in the split prompt.
    pub split_shots: u32,
    /// Worked examples included in the tool-input prompt.
    pub tool_input_shots: u32,
    /// Re-asks allowed when a completion fails to parse.
    pub max_parse_retries: u32,
    /// Hard cap on completion calls per top-level question.
    pub completion_budget: u32,
    /// Completion sampling defaults.
    pub max_tokens: u32,
    pub temperature: f64,
    /// Per-purpose temperature overrides, keyed by purpose tag name.
    pub temperature_overrides: BTreeMap<String, f64>,
    /// Compare generated subquestions against all ancestors, not just the
    /// immediate parent.
    pub compare_ancestors: bool,
    /// Turn question splitting off entirely (plain-completion baseline mode).
    pub split_enabled: bool,
    /// Timeout for tool requests, in seconds.
    pub tool_timeout_secs: u64,
    pub featurizer: FeaturizerChoice,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.98,
            max_depth: 3,
            truncation_limit: 15_000,
            split_shots: 4,
            tool_input_shots: 2,
            max_parse_retries: 1,
            completion_budget: 64,
            max_tokens: 256,
            temperature: 0.0,
            temperature_overrides: BTreeMap::new(),
            compare_ancestors: false,
            split_enabled: true,
            tool_timeout_secs: 30,
            featurizer: FeaturizerChoice::Trigram,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(DomainError::ConfigOutOfRange {
                field: "similarity_threshold",
                message: format!("{} is not in (0, 1]", self.similarity_threshold),
            });
        }
        if self.max_depth == 0 {
            return Err(DomainError::ConfigOutOfRange {
                field: "max_depth",
                message: "must be positive".to_string(),
            });
        }
        if self.truncation_limit == 0 {
            return Err(DomainError::ConfigOutOfRange {
                field: "truncation_limit",
                message: "must be positive".to_string(),
            });
        }
        if self.completion_budget == 0 {
            return Err(DomainError::ConfigOutOfRange {
                field: "completion_budget",
                message: "must be positive".to_string(),
            });
        }
        if self.temperature < 0.0 {
            return Err(DomainError::ConfigOutOfRange {
                field: "temperature",
                message: "must be >= 0".to_string(),
            });
        }
        Ok(())
    }

    pub fn temperature_for(&self, purpose: &str) -> f64 {
        self.temperature_overrides
            .get(purpose)
            .copied()
            .unwrap_or(self.temperature)
    }
}
