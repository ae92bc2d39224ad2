//! The recursive answering procedure: split a question into subquestions,
//! answer them depth-first while accumulating facts, then answer the
//! question itself from memory or through a tool.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, PurposeTag};
use crate::featurizer::{cosine_similarity, FeatureVector, Featurize, FeaturizerError};
use crate::prompting::{
    parse_subquestions, parse_tool_id, parse_tool_input_json, parse_yes_no, PromptError, PromptSet,
};
use crate::tools::{build_request, execute, truncate, validate_registry, ToolError};
use crate::types::{
    AnswerResult, DomainError, EngineConfig, Fact, Memory, Question, Resolution, RunMetrics,
    ToolSpec, TraceNode,
};

#[derive(Debug, Error)]
pub enum EngineErrorKind {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Featurizer(#[from] FeaturizerError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

/// An engine failure, annotated with the chain of questions from the root
/// to the node that failed and the trace built so far.
#[derive(Debug, Error)]
pub struct EngineError {
    pub kind: EngineErrorKind,
    pub path: Vec<String>,
    pub partial_trace: Option<TraceNode>,
}

impl std::fmt::Display for EngineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.kind)?;
        if !self.path.is_empty() {
            write!(f, " (at: {})", self.path.join(" -> "))?;
        }
        Ok(())
    }
}

impl EngineError {
    fn setup(kind: impl Into<EngineErrorKind>) -> Self {
        Self {
            kind: kind.into(),
            path: Vec::new(),
            partial_trace: None,
        }
    }
}

struct NodeBuild {
    question: String,
    depth: u32,
    resolution: Option<Resolution>,
    deleted_subquestions: Vec<String>,
    allow_split: bool,
    notes: Vec<String>,
    started: Instant,
    elapsed_ms: u64,
    children: Vec<usize>,
}

/// Per-run mutable state. One per top-level question, never shared.
struct RunCtx {
    memory: Memory,
    completions: u32,
    tool_calls: u32,
    nodes: Vec<NodeBuild>,
    stack: Vec<usize>,
    ancestors: Vec<String>,
    feature_memo: HashMap<String, FeatureVector>,
}

impl RunCtx {
    fn new() -> Self {
        Self {
            memory: Memory::new(),
            completions: 0,
            tool_calls: 0,
            nodes: Vec::new(),
            stack: Vec::new(),
            ancestors: Vec::new(),
            feature_memo: HashMap::new(),
        }
    }

    fn begin_node(&mut self, question: &Question) -> usize {
        let index = self.nodes.len();
        let parent = self.stack.last().copied();
        self.nodes.push(NodeBuild {
            question: question.text().to_string(),
            depth: question.depth(),
            resolution: None,
            deleted_subquestions: Vec::new(),
            allow_split: false,
            notes: Vec::new(),
            started: Instant::now(),
            elapsed_ms: 0,
            children: Vec::new(),
        });
        if let Some(parent) = parent {
            self.nodes[parent].children.push(index);
        }
        self.stack.push(index);
        index
    }

    fn end_node(&mut self, index: usize) {
        self.nodes[index].elapsed_ms = self.nodes[index].started.elapsed().as_millis() as u64;
        self.stack.pop();
    }

    fn note(&mut self, index: usize, message: impl Into<String>) {
        self.nodes[index].notes.push(message.into());
    }

    fn featurize(
        &mut self,
        featurizer: &dyn Featurize,
        text: &str,
    ) -> Result<FeatureVector, FeaturizerError> {
        if let Some(vector) = self.feature_memo.get(text) {
            return Ok(vector.clone());
        }
        let vector = featurizer.featurize(text)?;
        self.feature_memo.insert(text.to_string(), vector.clone());
        Ok(vector)
    }

    fn stack_questions(&self) -> Vec<String> {
        self.stack
            .iter()
            .map(|i| self.nodes[*i].question.clone())
            .collect()
    }

    fn build_trace(&self) -> Option<TraceNode> {
        if self.nodes.is_empty() {
            return None;
        }
        Some(self.build_node(0))
    }

    fn build_node(&self, index: usize) -> TraceNode {
        let node = &self.nodes[index];
        TraceNode {
            question: node.question.clone(),
            depth: node.depth,
            resolution: node.resolution.clone(),
            deleted_subquestions: node.deleted_subquestions.clone(),
            allow_split: node.allow_split,
            notes: node.notes.clone(),
            elapsed_ms: node.elapsed_ms,
            children: node.children.iter().map(|c| self.build_node(*c)).collect(),
        }
    }
}

enum ToolPathOutcome {
    Answered { answer: String, tool_id: u32 },
    Fallback { tool_id: Option<u32>, reason: String },
}

pub struct Engine {
    config: EngineConfig,
    registry: Vec<ToolSpec>,
    backend: Arc<dyn CompletionBackend>,
    featurizer: Arc<dyn Featurize>,
    prompts: PromptSet,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        registry: Vec<ToolSpec>,
        backend: Arc<dyn CompletionBackend>,
        featurizer: Arc<dyn Featurize>,
        prompts: PromptSet,
    ) -> Result<Self, EngineError> {
        config.validate().map_err(EngineError::setup)?;
        validate_registry(&registry).map_err(EngineError::setup)?;
        if config.split_shots as usize > prompts.split_shot_count() {
            return Err(EngineError::setup(PromptError::ShotBankTooSmall {
                have: prompts.split_shot_count(),
                needed: config.split_shots as usize,
            }));
        }
        if config.tool_input_shots as usize > prompts.tool_input_shot_count() {
            return Err(EngineError::setup(PromptError::ShotBankTooSmall {
                have: prompts.tool_input_shot_count(),
                needed: config.tool_input_shots as usize,
            }));
        }
        Ok(Self {
            config,
            registry,
            backend,
            featurizer,
            prompts,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn registry(&self) -> &[ToolSpec] {
        &self.registry
    }

    /// Answer one top-level question.
    pub fn answer(&self, question_text: &str) -> Result<AnswerResult, EngineError> {
        let started = Instant::now();
        let question = Question::new(question_text, 0).map_err(EngineError::setup)?;
        let mut ctx = RunCtx::new();
        match self.promptf(&mut ctx, &question, self.config.split_enabled) {
            Ok((answer, fact)) => Ok(AnswerResult {
                answer,
                fact,
                trace: ctx.build_trace().expect("run produced at least one node"),
                metrics: RunMetrics {
                    completion_calls: ctx.completions,
                    tool_calls: ctx.tool_calls,
                    wall_secs: started.elapsed().as_secs_f64(),
                },
            }),
            Err(kind) => Err(EngineError {
                kind,
                path: ctx.stack_questions(),
                partial_trace: ctx.build_trace(),
            }),
        }
    }

    /// One recursion step. Optionally split the question and answer the
    /// surviving subquestions first, appending their facts to the shared
    /// memory; then answer this question from memory or through a tool.
    fn promptf(
        &self,
        ctx: &mut RunCtx,
        question: &Question,
        allowsplit_in: bool,
    ) -> Result<(String, Fact), EngineErrorKind> {
        let node = ctx.begin_node(question);
        let mut allowsplit = allowsplit_in;

        if allowsplit && question.depth() < self.config.max_depth {
            let prompt = if self.registry.is_empty() {
                self.prompts.render_split_prompt_tool_free(
                    question,
                    &ctx.memory,
                    self.config.split_shots as usize,
                )?
            } else {
                self.prompts.render_split_prompt(
                    &self.registry,
                    question,
                    &ctx.memory,
                    self.config.split_shots as usize,
                )?
            };
            let completion = self.complete(ctx, PurposeTag::Split, &prompt)?;
            let candidates = parse_subquestions(&completion);

            // Deletion pass: drop near-duplicates of the parent (and of any
            // ancestor when configured) and stop further splitting as soon
            // as one is found.
            let parent_vector = ctx.featurize(self.featurizer.as_ref(), question.text())?;
            let mut reference_vectors = vec![parent_vector];
            if self.config.compare_ancestors {
                for ancestor in ctx.ancestors.clone() {
                    reference_vectors.push(ctx.featurize(self.featurizer.as_ref(), &ancestor)?);
                }
            }
            let mut survivors = Vec::new();
            for candidate in candidates {
                let candidate_vector = ctx.featurize(self.featurizer.as_ref(), &candidate)?;
                let mut near_duplicate = false;
                for reference in &reference_vectors {
                    if cosine_similarity(reference, &candidate_vector)?
                        > self.config.similarity_threshold
                    {
                        near_duplicate = true;
                        break;
                    }
                }
                if near_duplicate {
                    ctx.nodes[node].deleted_subquestions.push(candidate);
                    allowsplit = false;
                } else {
                    survivors.push(candidate);
                }
            }
            ctx.nodes[node].allow_split = allowsplit;

            ctx.ancestors.push(question.text().to_string());
            for subquestion in survivors {
                let child = Question::new(subquestion, question.depth() + 1)?;
                let (_, fact) = self.promptf(ctx, &child, allowsplit)?;
                ctx.memory.push(fact);
            }
            ctx.ancestors.pop();
        } else {
            ctx.nodes[node].allow_split = allowsplit;
        }

        let answerable = self.memory_check(ctx, node, question)?;
        let (answer, resolution) = if answerable {
            let answer = self.synthesize(ctx, question, None)?;
            (answer, Resolution::Memory)
        } else {
            match self.tool_path(ctx, node, question)? {
                ToolPathOutcome::Answered { answer, tool_id } => {
                    (answer, Resolution::Tool { id: tool_id })
                }
                ToolPathOutcome::Fallback { tool_id, reason } => {
                    ctx.note(
                        node,
                        format!("tool path unavailable ({reason}); answered from memory"),
                    );
                    let answer = self.synthesize(ctx, question, None)?;
                    (answer, Resolution::Fallback { tool_id, reason })
                }
            }
        };

        ctx.nodes[node].resolution = Some(resolution);
        let fact = Fact::new(question.text(), answer.clone())?;
        ctx.end_node(node);
        Ok((answer, fact))
    }

    fn complete(
        &self,
        ctx: &mut RunCtx,
        purpose: PurposeTag,
        prompt: &str,
    ) -> Result<String, EngineErrorKind> {
        if ctx.completions >= self.config.completion_budget {
            return Err(BackendError::BudgetExceeded {
                budget: self.config.completion_budget,
            }
            .into());
        }
        ctx.completions += 1;
        let stop_sequences = match purpose {
            PurposeTag::Split => vec!["\n\n".to_string()],
            _ => Vec::new(),
        };
        let request = CompletionRequest {
            prompt: prompt.to_string(),
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature_for(purpose.as_str()),
            stop_sequences,
            purpose,
        };
        Ok(self.backend.complete(&request)?)
    }

    fn memory_check(
        &self,
        ctx: &mut RunCtx,
        node: usize,
        question: &Question,
    ) -> Result<bool, EngineErrorKind> {
        let prompt = self
            .prompts
            .render_memory_check_prompt(&ctx.memory, question)?;
        let mut attempts = 0;
        loop {
            let completion = self.complete(ctx, PurposeTag::MemoryCheck, &prompt)?;
            match parse_yes_no(&completion) {
                Ok(answerable) => return Ok(answerable),
                Err(_) if attempts < self.config.max_parse_retries => {
                    attempts += 1;
                    ctx.note(node, "memory check completion unparsable; re-asked");
                }
                Err(_) => {
                    ctx.note(
                        node,
                        "memory check unparsable after retries; treated as no",
                    );
                    return Ok(false);
                }
            }
        }
    }

    fn synthesize(
        &self,
        ctx: &mut RunCtx,
        question: &Question,
        evidence: Option<&str>,
    ) -> Result<String, EngineErrorKind> {
        let prompt = self
            .prompts
            .render_answer_synthesis_prompt(question, &ctx.memory, evidence)?;
        let completion = self.complete(ctx, PurposeTag::AnswerSynthesis, &prompt)?;
        Ok(completion.trim().to_string())
    }

    fn tool_path(
        &self,
        ctx: &mut RunCtx,
        node: usize,
        question: &Question,
    ) -> Result<ToolPathOutcome, EngineErrorKind> {
        if self.registry.is_empty() {
            return Ok(ToolPathOutcome::Fallback {
                tool_id: None,
                reason: "no tools registered".to_string(),
            });
        }

        let tool_id = match self.pick_tool(ctx, node, question)? {
            Ok(id) => id,
            Err(reason) => {
                return Ok(ToolPathOutcome::Fallback {
                    tool_id: None,
                    reason,
                })
            }
        };
        let tool = self
            .registry
            .iter()
            .find(|t| t.id == tool_id)
            .expect("picked id was validated against the registry");

        let input = match self.generate_tool_input(ctx, node, question, tool)? {
            Ok(input) => input,
            Err(reason) => {
                return Ok(ToolPathOutcome::Fallback {
                    tool_id: Some(tool_id),
                    reason,
                })
            }
        };

        let request = build_request(tool, &input);
        ctx.tool_calls += 1;
        let raw = match execute(
            &request,
            Duration::from_secs(self.config.tool_timeout_secs),
            &tool.static_headers,
        ) {
            Ok(body) => body,
            Err(error) => {
                return Ok(ToolPathOutcome::Fallback {
                    tool_id: Some(tool_id),
                    reason: error.to_string(),
                })
            }
        };
        let evidence = truncate(&raw, self.config.truncation_limit);
        let answer = self.synthesize(ctx, question, Some(&evidence))?;
        Ok(ToolPathOutcome::Answered { answer, tool_id })
    }

    /// Inner Result distinguishes a recoverable parse failure (fall back to
    /// memory synthesis) from a fatal backend error.
    fn pick_tool(
        &self,
        ctx: &mut RunCtx,
        node: usize,
        question: &Question,
    ) -> Result<Result<u32, String>, EngineErrorKind> {
        let prompt =
            self.prompts
                .render_tool_pick_prompt(&self.registry, question, &ctx.memory)?;
        let mut attempts = 0;
        loop {
            let completion = self.complete(ctx, PurposeTag::ToolPick, &prompt)?;
            match parse_tool_id(&completion, &self.registry) {
                Ok(id) => return Ok(Ok(id)),
                Err(_) if attempts < self.config.max_parse_retries => {
                    attempts += 1;
                    ctx.note(node, "tool pick completion unparsable; re-asked");
                }
                Err(error) => return Ok(Err(error.to_string())),
            }
        }
    }

    fn generate_tool_input(
        &self,
        ctx: &mut RunCtx,
        node: usize,
        question: &Question,
        tool: &ToolSpec,
    ) -> Result<Result<crate::types::ToolInput, String>, EngineErrorKind> {
        let prompt = self.prompts.render_tool_input_prompt(
            tool,
            question,
            &ctx.memory,
            self.config.tool_input_shots as usize,
        )?;
        let mut attempts = 0;
        loop {
            let completion = self.complete(ctx, PurposeTag::ToolInput, &prompt)?;
            match parse_tool_input_json(&completion, tool) {
                Ok(input) => return Ok(Ok(input)),
                Err(_) if attempts < self.config.max_parse_retries => {
                    attempts += 1;
                    ctx.note(node, "tool input completion unparsable; re-asked");
                }
                Err(error) => return Ok(Err(error.to_string())),
            }
        }
    }
}
