//! Renders the prompt families and parses the completions back into
//! typed values.
//!
//! All rendering is pure: identical inputs produce byte-identical prompts.
//! The canonical template texts and shot banks are embedded as crate assets
//! and can be overridden from files on disk.

use serde::Deserialize;
use thiserror::Error;

use crate::types::{Memory, Question, ToolInput, ToolSpec};

pub mod parse;

pub use parse::{parse_subquestions, parse_tool_id, parse_tool_input_json, parse_yes_no};

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template placeholder {{{0}}} is unbound")]
    UnboundPlaceholder(String),
    #[error("tool list is empty")]
    EmptyToolList,
    #[error("shot bank holds {have} shots but {needed} were requested")]
    ShotBankTooSmall { have: usize, needed: usize },
    #[error("malformed shot bank: {0}")]
    MalformedShotBank(String),
    #[error("cannot parse completion: {0}")]
    Parse(String),
    #[error("tool id {id} is not in the registry")]
    UnknownTool { id: u32 },
    #[error("parameter {name:?} is not declared by tool {tool_id}")]
    UnknownParam { tool_id: u32, name: String },
}

/// A prompt body with `{name}` placeholders.
///
/// Rendering walks the body once; placeholder markers inside bound values
/// are copied through untouched, never re-expanded.
#[derive(Debug, Clone)]
pub struct Template {
    body: String,
}

impl Template {
    pub fn new(body: impl Into<String>) -> Self {
        Self { body: body.into() }
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if after[..close].chars().all(|c| c.is_ascii_lowercase() || c == '_') && close > 0 => {
                    let name = &after[..close];
                    match bindings.iter().find(|(n, _)| *n == name) {
                        Some((_, value)) => out.push_str(value),
                        None => return Err(PromptError::UnboundPlaceholder(name.to_string())),
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// One worked question-splitting example.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitShot {
    pub question: String,
    pub subquestions: String,
}

/// One worked tool-input example: the tool as shown to the model, a
/// question, and the JSON input the model should produce.
#[derive(Debug, Clone, Deserialize)]
pub struct ToolInputShot {
    pub tool: ShotTool,
    pub question: String,
    pub input: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ShotTool {
    pub id: u32,
    pub description: String,
    pub params: serde_json::Map<String, serde_json::Value>,
}

const SPLIT_TEMPLATE: &str = include_str!("../assets/templates/split.txt");
const MEMORY_CHECK_TEMPLATE: &str = include_str!("../assets/templates/memory_check.txt");
const TOOL_PICK_TEMPLATE: &str = include_str!("../assets/templates/tool_pick.txt");
const TOOL_INPUT_TEMPLATE: &str = include_str!("../assets/templates/tool_input.txt");
const ANSWER_SYNTHESIS_TEMPLATE: &str = include_str!("../assets/templates/answer_synthesis.txt");
const SPLIT_SHOTS: &str = include_str!("../assets/shots/split_shots.txt");
const TOOL_INPUT_SHOTS: &str = include_str!("../assets/shots/tool_input_shots.json");

const SPLIT_INSTRUCTION: &str = "Look at the tools we have access to. Split Q into subquestions to answer Q that can each be solved with one use of one tool. Make as few subquestions as possible. Split each subquestion with a comma and have no extra information other than the subquestions.";

/// The template and shot-bank set used to render every prompt family.
pub struct PromptSet {
    split: Template,
    memory_check: Template,
    tool_pick: Template,
    tool_input: Template,
    answer_synthesis: Template,
    split_shots: Vec<SplitShot>,
    tool_input_shots: Vec<ToolInputShot>,
}

impl PromptSet {
    /// The canonical templates and shot banks embedded in the crate.
    pub fn builtin() -> Self {
        Self {
            split: Template::new(SPLIT_TEMPLATE),
            memory_check: Template::new(MEMORY_CHECK_TEMPLATE),
            tool_pick: Template::new(TOOL_PICK_TEMPLATE),
            tool_input: Template::new(TOOL_INPUT_TEMPLATE),
            answer_synthesis: Template::new(ANSWER_SYNTHESIS_TEMPLATE),
            split_shots: parse_split_shots(SPLIT_SHOTS).expect("builtin split shots"),
            tool_input_shots: serde_json::from_str(TOOL_INPUT_SHOTS)
                .expect("builtin tool input shots"),
        }
    }

    /// Load templates and shot banks from a directory laid out like the
    /// crate's `assets/` tree (`templates/*.txt`, `shots/*`).
    pub fn load_from_dir(dir: &std::path::Path) -> Result<Self, std::io::Error> {
        let read = |rel: &str| std::fs::read_to_string(dir.join(rel));
        let split_shots = parse_split_shots(&read("shots/split_shots.txt")?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        let tool_input_shots = serde_json::from_str(&read("shots/tool_input_shots.json")?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        Ok(Self {
            split: Template::new(read("templates/split.txt")?),
            memory_check: Template::new(read("templates/memory_check.txt")?),
            tool_pick: Template::new(read("templates/tool_pick.txt")?),
            tool_input: Template::new(read("templates/tool_input.txt")?),
            answer_synthesis: Template::new(read("templates/answer_synthesis.txt")?),
            split_shots,
            tool_input_shots,
        })
    }

    pub fn split_shot_count(&self) -> usize {
        self.split_shots.len()
    }

    pub fn tool_input_shot_count(&self) -> usize {
        self.tool_input_shots.len()
    }

    pub fn render_split_prompt(
        &self,
        tools: &[ToolSpec],
        question: &Question,
        memory: &Memory,
        shot_count: usize,
    ) -> Result<String, PromptError> {
        if tools.is_empty() {
            return Err(PromptError::EmptyToolList);
        }
        self.render_split_with_tool_list(&render_tool_list(tools), question, memory, shot_count)
    }

    /// Split prompt for a run with no registered tools. The tool list block
    /// renders as "None" so the rest of the template stays intact.
    pub fn render_split_prompt_tool_free(
        &self,
        question: &Question,
        memory: &Memory,
        shot_count: usize,
    ) -> Result<String, PromptError> {
        self.render_split_with_tool_list(
            "Tools we have access to =\n\nNone",
            question,
            memory,
            shot_count,
        )
    }

    fn render_split_with_tool_list(
        &self,
        tool_list: &str,
        question: &Question,
        memory: &Memory,
        shot_count: usize,
    ) -> Result<String, PromptError> {
        if shot_count > self.split_shots.len() {
            return Err(PromptError::ShotBankTooSmall {
                have: self.split_shots.len(),
                needed: shot_count,
            });
        }
        let mut shots = String::new();
        for shot in &self.split_shots[..shot_count] {
            shots.push_str(&format!(
                "Q={}\n\n{}\n{}\n\n",
                shot.question, SPLIT_INSTRUCTION, shot.subquestions
            ));
        }
        self.split.render(&[
            ("tool_list", tool_list),
            ("shots", &shots),
            ("memory", &render_memory(memory)),
            ("question", question.text()),
        ])
    }

    pub fn render_memory_check_prompt(
        &self,
        memory: &Memory,
        question: &Question,
    ) -> Result<String, PromptError> {
        self.memory_check.render(&[
            ("memory", &render_memory(memory)),
            ("question", question.text()),
        ])
    }

    pub fn render_tool_pick_prompt(
        &self,
        tools: &[ToolSpec],
        question: &Question,
        memory: &Memory,
    ) -> Result<String, PromptError> {
        if tools.is_empty() {
            return Err(PromptError::EmptyToolList);
        }
        self.tool_pick.render(&[
            ("tool_list", &render_tool_list(tools)),
            ("memory", &render_memory(memory)),
            ("question", question.text()),
        ])
    }

    pub fn render_tool_input_prompt(
        &self,
        tool: &ToolSpec,
        question: &Question,
        memory: &Memory,
        shot_count: usize,
    ) -> Result<String, PromptError> {
        if shot_count > self.tool_input_shots.len() {
            return Err(PromptError::ShotBankTooSmall {
                have: self.tool_input_shots.len(),
                needed: shot_count,
            });
        }
        let mut shots = String::new();
        for shot in &self.tool_input_shots[..shot_count] {
            let params = render_param_descriptions(
                shot.tool
                    .params
                    .iter()
                    .map(|(k, v)| (k.as_str(), v.as_str().unwrap_or_default())),
            );
            shots.push_str(&render_tool_block(
                shot.tool.id,
                &shot.tool.description,
                &params,
            ));
            shots.push_str("\n\n");
            shots.push_str(&format!(
                "<CASE>\n<Q>{}</Q>\n<THOUGHT>\n<P>What should the input for tool {} be to answer Q?</P>\n<A ty=JSON>\n{}\n</A>\n</THOUGHT>\n</CASE>\n\n",
                shot.question,
                shot.tool.id,
                render_input_json(shot.input.iter().map(|(k, v)| (k.as_str(), v.as_str().unwrap_or_default()))),
            ));
        }
        let params = render_param_descriptions(
            tool.dynamic_params
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_str())),
        );
        let tool_block = render_tool_block(tool.id, &tool.description, &params);
        self.tool_input.render(&[
            ("shots", &shots),
            ("tool", &tool_block),
            ("memory", &render_memory(memory)),
            ("question", question.text()),
            ("tool_id", &tool.id.to_string()),
        ])
    }

    pub fn render_answer_synthesis_prompt(
        &self,
        question: &Question,
        memory: &Memory,
        evidence: Option<&str>,
    ) -> Result<String, PromptError> {
        let evidence_block = match evidence {
            Some(text) => format!("API output:\n{text}\n\n"),
            None => String::new(),
        };
        self.answer_synthesis.render(&[
            ("memory", &render_memory(memory)),
            ("evidence", &evidence_block),
            ("question", question.text()),
        ])
    }
}

/// "tool 1: desc" lines under the fixed header, one blank line apart.
fn render_tool_list(tools: &[ToolSpec]) -> String {
    let mut out = String::from("Tools we have access to =");
    for tool in tools {
        out.push_str(&format!("\n\ntool {}: {}", tool.id, tool.description));
    }
    out
}

/// Facts as "Q: ... A: ..." lines, or "None" when the memory is empty.
fn render_memory(memory: &Memory) -> String {
    if memory.is_empty() {
        return "Memory:\nNone".to_string();
    }
    let mut out = String::from("Memory:");
    for fact in memory.facts() {
        out.push_str(&format!("\nQ: {} A: {}", fact.question, fact.answer));
    }
    out
}

fn render_tool_block(id: u32, description: &str, params: &str) -> String {
    format!("<TOOL>\n<ID>{id}</ID>\n<DESC>{description}</DESC>\n<PARAMS>{params}</PARAMS>\n</TOOL>")
}

/// `{"name": bare description, ...}`: keys quoted, descriptions bare.
fn render_param_descriptions<'a>(params: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    let inner: Vec<String> = params.map(|(k, v)| format!("{:?}: {}", k, v)).collect();
    format!("{{{}}}", inner.join(", "))
}

fn render_input_json<'a>(values: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    let inner: Vec<String> = values.map(|(k, v)| format!("{k:?}: {v:?}")).collect();
    format!("{{{}}}", inner.join(", "))
}

fn parse_split_shots(text: &str) -> Result<Vec<SplitShot>, PromptError> {
    let mut shots = Vec::new();
    let mut question: Option<String> = None;
    for (number, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(q) = line.strip_prefix("Q: ") {
            if question.is_some() {
                return Err(PromptError::MalformedShotBank(format!(
                    "line {}: Q without a following A",
                    number + 1
                )));
            }
            question = Some(q.to_string());
        } else if let Some(a) = line.strip_prefix("A: ") {
            let q = question.take().ok_or_else(|| {
                PromptError::MalformedShotBank(format!("line {}: A without a preceding Q", number + 1))
            })?;
            shots.push(SplitShot {
                question: q,
                subquestions: a.to_string(),
            });
        } else {
            return Err(PromptError::MalformedShotBank(format!(
                "line {}: expected 'Q: ' or 'A: '",
                number + 1
            )));
        }
    }
    if question.is_some() {
        return Err(PromptError::MalformedShotBank(
            "trailing Q without an A".to_string(),
        ));
    }
    Ok(shots)
}

/// Convert a parsed tool-input JSON value into one ToolInput, validating
/// every key against the tool's declared dynamic parameters.
pub(crate) fn tool_input_from_map(
    map: &serde_json::Map<String, serde_json::Value>,
    tool: &ToolSpec,
) -> Result<ToolInput, PromptError> {
    let mut values = Vec::new();
    for (key, value) in map {
        if !tool.declares_dynamic(key) {
            return Err(PromptError::UnknownParam {
                tool_id: tool.id,
                name: key.clone(),
            });
        }
        let rendered = match value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            other => {
                return Err(PromptError::Parse(format!(
                    "value for {key:?} is not a string, number or boolean: {other}"
                )))
            }
        };
        values.push((key.clone(), rendered));
    }
    Ok(ToolInput { values })
}
