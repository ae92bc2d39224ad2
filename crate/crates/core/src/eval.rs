//! Dataset loading, grading and accuracy/latency reporting.
//!
//! Two grading rules: retrieval answers are correct when a gold answer is
//! contained in the system output (case-insensitive, whitespace
//! normalized); verification answers are correct when the output's first
//! truth determination matches the gold label. Verification items with
//! labels other than SUPPORTS/REFUTES are dropped at load time and counted.

use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Engine;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Retrieval,
    Verification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "SUPPORTS")]
    Supports,
    #[serde(rename = "REFUTES")]
    Refutes,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gold {
    Answers(Vec<String>),
    Label(Label),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub question: String,
    pub category: Option<String>,
    pub gold: Gold,
}

impl EvalItem {
    pub fn task_kind(&self) -> TaskKind {
        match self.gold {
            Gold::Answers(_) => TaskKind::Retrieval,
            Gold::Label(_) => TaskKind::Verification,
        }
    }
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub items: Vec<EvalItem>,
    /// Verification items dropped for carrying a label other than
    /// SUPPORTS/REFUTES.
    pub dropped: u32,
}

#[derive(Debug, Deserialize)]
struct RawItem {
    id: serde_json::Value,
    question: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    answers: Option<Vec<String>>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

/// Parse a line-delimited JSON dataset.
pub fn load_dataset(reader: impl Read, kind: TaskKind) -> Result<LoadedDataset, DatasetError> {
    let reader = BufReader::new(reader);
    let mut items = Vec::new();
    let mut dropped = 0u32;
    for (number, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = number + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(&line).map_err(|e| DatasetError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        let id = match &raw.id {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(DatasetError::Format {
                    line: line_no,
                    message: format!("id must be a string or number, got {other}"),
                })
            }
        };
        if raw.question.trim().is_empty() {
            return Err(DatasetError::Format {
                line: line_no,
                message: "question is empty".to_string(),
            });
        }
        let gold = match kind {
            TaskKind::Retrieval => {
                let answers = match (raw.answer, raw.answers) {
                    (Some(answer), None) => vec![answer],
                    (None, Some(answers)) => answers,
                    (Some(_), Some(_)) => {
                        return Err(DatasetError::Format {
                            line: line_no,
                            message: "both answer and answers present".to_string(),
                        })
                    }
                    (None, None) => {
                        return Err(DatasetError::Format {
                            line: line_no,
                            message: "retrieval item needs answer or answers".to_string(),
                        })
                    }
                };
                if answers.is_empty() || answers.iter().any(|a| a.trim().is_empty()) {
                    return Err(DatasetError::Format {
                        line: line_no,
                        message: "gold answers must be non-empty".to_string(),
                    });
                }
                Gold::Answers(answers)
            }
            TaskKind::Verification => {
                let label = raw.label.ok_or_else(|| DatasetError::Format {
                    line: line_no,
                    message: "verification item needs a label".to_string(),
                })?;
                match label.as_str() {
                    "SUPPORTS" => Gold::Label(Label::Supports),
                    "REFUTES" => Gold::Label(Label::Refutes),
                    _ => {
                        dropped += 1;
                        continue;
                    }
                }
            }
        };
        items.push(EvalItem {
            id,
            question: raw.question,
            category: raw.category,
            gold,
        });
    }
    Ok(LoadedDataset { items, dropped })
}

pub fn load_dataset_file(
    path: &std::path::Path,
    kind: TaskKind,
) -> Result<LoadedDataset, DatasetError> {
    load_dataset(std::fs::File::open(path)?, kind)
}

fn normalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when any gold answer occurs in the output, case-insensitively and
/// after whitespace normalization.
pub fn grade_retrieval(output: &str, gold_answers: &[String]) -> bool {
    let haystack = normalize(output);
    gold_answers
        .iter()
        .any(|gold| haystack.contains(&normalize(gold)))
}

const AFFIRM_TOKENS: [&str; 3] = ["supports", "true", "yes"];
const DENY_TOKENS: [&str; 3] = ["refutes", "false", "no"];

/// Map an output to a label by its first determination token and compare
/// with the gold label. Outputs with no determination grade false.
pub fn grade_verification(output: &str, gold: Label) -> bool {
    for token in output
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
    {
        let token = token.to_lowercase();
        if AFFIRM_TOKENS.contains(&token.as_str()) {
            return gold == Label::Supports;
        }
        if DENY_TOKENS.contains(&token.as_str()) {
            return gold == Label::Refutes;
        }
    }
    false
}

pub fn grade(item: &EvalItem, output: &str) -> bool {
    match &item.gold {
        Gold::Answers(answers) => grade_retrieval(output, answers),
        Gold::Label(label) => grade_verification(output, *label),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Take this many items per category, chosen with the seed.
    pub sample: Option<u32>,
    pub seed: u64,
    pub jobs: usize,
    /// When false every wall-time field is reported as zero; replayed runs
    /// are not latency measurements.
    pub measure_latency: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            sample: None,
            seed: 0,
            jobs: 1,
            measure_latency: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ItemOutcome {
    pub id: String,
    pub category: String,
    pub correct: bool,
    pub output: String,
    pub wall_secs: f64,
    pub completion_calls: u32,
    pub tool_calls: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CategoryAccuracy {
    pub category: String,
    pub total: u32,
    pub correct: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub items: Vec<ItemOutcome>,
    pub categories: Vec<CategoryAccuracy>,
    pub overall: CategoryAccuracy,
    pub mean_latency_secs: f64,
    pub total_completion_calls: u64,
    pub total_tool_calls: u64,
    pub dropped_items: u32,
}

impl EvalReport {
    /// The per-category accuracy table, deterministic for a given outcome
    /// set.
    pub fn render_category_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<32} {:>6} {:>10}\n", "category", "n", "accuracy"));
        for row in &self.categories {
            out.push_str(&format!(
                "{:<32} {:>6} {:>10.1}\n",
                row.category, row.total, row.accuracy
            ));
        }
        out.push_str(&format!(
            "{:<32} {:>6} {:>10.1}\n",
            "overall", self.overall.total, self.overall.accuracy
        ));
        out
    }

    pub fn render_totals(&self) -> String {
        format!(
            "mean seconds per question: {:.3}\ncompletion calls: {}\ntool calls: {}\ndropped items: {}\n",
            self.mean_latency_secs,
            self.total_completion_calls,
            self.total_tool_calls,
            self.dropped_items
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn category_key(item: &EvalItem) -> String {
    item.category.clone().unwrap_or_else(|| "uncategorized".to_string())
}

/// Deterministic per-category sampling: items sorted by id, then a seeded
/// partial Fisher-Yates pick per category, categories in name order.
pub fn sample_items(items: &[EvalItem], count: u32, seed: u64) -> Vec<EvalItem> {
    use std::collections::BTreeMap;
    let mut by_category: BTreeMap<String, Vec<&EvalItem>> = BTreeMap::new();
    for item in items {
        by_category.entry(category_key(item)).or_default().push(item);
    }
    let mut state = seed;
    let mut selected = Vec::new();
    for (_, mut group) in by_category {
        group.sort_by(|a, b| a.id.cmp(&b.id));
        let take = (count as usize).min(group.len());
        for i in 0..take {
            let j = i + (splitmix64(&mut state) as usize) % (group.len() - i);
            group.swap(i, j);
        }
        selected.extend(group[..take].iter().map(|item| (*item).clone()));
    }
    selected
}

/// Run every (possibly sampled) item through the engine and aggregate. A
/// failed run grades false and is recorded; the eval never aborts on one
/// item.
pub fn run_eval(items: &[EvalItem], engine: &Engine, options: &EvalOptions) -> EvalReport {
    let selected: Vec<EvalItem> = match options.sample {
        Some(count) => sample_items(items, count, options.seed),
        None => items.to_vec(),
    };

    let jobs = options.jobs.max(1);
    let mut outcomes: Vec<ItemOutcome> = if jobs == 1 {
        selected.iter().map(|item| run_one(item, engine, options)).collect()
    } else {
        let chunks: Vec<Vec<EvalItem>> = {
            let mut buckets: Vec<Vec<EvalItem>> = vec![Vec::new(); jobs];
            for (index, item) in selected.iter().enumerate() {
                buckets[index % jobs].push(item.clone());
            }
            buckets
        };
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|item| run_one(item, engine, options))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|handle| handle.join().expect("eval worker"))
                .collect()
        })
    };

    outcomes.sort_by(|a, b| (&a.category, &a.id).cmp(&(&b.category, &b.id)));

    let mut categories: Vec<CategoryAccuracy> = Vec::new();
    for outcome in &outcomes {
        match categories.iter_mut().find(|c| c.category == outcome.category) {
            Some(row) => {
                row.total += 1;
                row.correct += u32::from(outcome.correct);
            }
            None => categories.push(CategoryAccuracy {
                category: outcome.category.clone(),
                total: 1,
                correct: u32::from(outcome.correct),
                accuracy: 0.0,
            }),
        }
    }
    for row in &mut categories {
        row.accuracy = 100.0 * f64::from(row.correct) / f64::from(row.total);
    }
    let total = outcomes.len() as u32;
    let correct = outcomes.iter().filter(|o| o.correct).count() as u32;
    let overall = CategoryAccuracy {
        category: "overall".to_string(),
        total,
        correct,
        accuracy: if total == 0 {
            0.0
        } else {
            100.0 * f64::from(correct) / f64::from(total)
        },
    };
    let mean_latency_secs = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().map(|o| o.wall_secs).sum::<f64>() / outcomes.len() as f64
    };

    EvalReport {
        total_completion_calls: outcomes.iter().map(|o| u64::from(o.completion_calls)).sum(),
        total_tool_calls: outcomes.iter().map(|o| u64::from(o.tool_calls)).sum(),
        mean_latency_secs,
        items: outcomes,
        categories,
        overall,
        dropped_items: 0,
    }
}

fn run_one(item: &EvalItem, engine: &Engine, options: &EvalOptions) -> ItemOutcome {
    match engine.answer(&item.question) {
        Ok(result) => ItemOutcome {
            id: item.id.clone(),
            category: category_key(item),
            correct: grade(item, &result.answer),
            output: result.answer,
            wall_secs: if options.measure_latency {
                result.metrics.wall_secs
            } else {
                0.0
            },
            completion_calls: result.metrics.completion_calls,
            tool_calls: result.metrics.tool_calls,
            error: None,
        },
        Err(error) => ItemOutcome {
            id: item.id.clone(),
            category: category_key(item),
            correct: false,
            output: String::new(),
            wall_secs: 0.0,
            completion_calls: 0,
            tool_calls: 0,
            error: Some(error.to_string()),
        },
    }
}
