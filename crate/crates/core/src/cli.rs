//! Command-line interface: ask a single question, run an evaluation, or
//! inspect the tool registry. Runs can be recorded to a transcript and
//! replayed deterministically.
//!
//! Exit codes: 0 success, 1 engine failure, 2 configuration or input error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::eval::{load_dataset_file, run_eval, EvalOptions, TaskKind};
use crate::setup::{build_engine, SetupError, SetupPaths};
use crate::tools::load_registry;
use crate::types::{Resolution, TraceNode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ENGINE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rebel", about = "Answer compositional questions by recursive decomposition and tool use", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Engine config JSON file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Completion backend config JSON file.
    #[arg(long, global = true)]
    pub backend: Option<PathBuf>,
    /// Tool registry JSON file.
    #[arg(long, global = true)]
    pub tools: Option<PathBuf>,
    /// Record all completions to this transcript file.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
    /// Replay completions from this transcript file.
    #[arg(long, global = true)]
    pub replay: Option<PathBuf>,
    /// -v prints run totals, -vv also prints the trace tree.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer a single question.
    Ask {
        question: String,
    },
    /// Run a dataset through the engine and report accuracy.
    Eval {
        dataset: PathBuf,
        /// Grading rule for the dataset.
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Sample this many items per category.
        #[arg(long)]
        sample: Option<u32>,
        /// Seed for sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Concurrent engine runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write the report as JSON to this path.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// List the registered tools as the model sees them.
    Tools {
        /// Also print the hidden fields (method, endpoint, static params).
        /// Static parameter values stay masked.
        #[arg(long)]
        show_hidden: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Retrieval,
    Verification,
}

impl From<TaskArg> for TaskKind {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Retrieval => TaskKind::Retrieval,
            TaskArg::Verification => TaskKind::Verification,
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Ask { ref question } => cmd_ask(&cli.common, question),
        Command::Eval {
            ref dataset,
            task,
            sample,
            seed,
            jobs,
            ref json_out,
        } => cmd_eval(&cli.common, dataset, task, sample, seed, jobs, json_out.as_deref()),
        Command::Tools { show_hidden } => cmd_tools(&cli.common, show_hidden),
    }
}

fn setup_paths(common: &CommonArgs) -> SetupPaths<'_> {
    SetupPaths {
        engine_config: common.config.as_deref(),
        backend_config: common.backend.as_deref(),
        tools: common.tools.as_deref(),
        replay: common.replay.as_deref(),
        record: common.record.is_some(),
    }
}

fn config_error(error: &SetupError) -> i32 {
    eprintln!("error: {error}");
    EXIT_CONFIG
}

fn cmd_ask(common: &CommonArgs, question: &str) -> i32 {
    let built = match build_engine(&setup_paths(common)) {
        Ok(built) => built,
        Err(error) => return config_error(&error),
    };
    match built.engine.answer(question) {
        Ok(result) => {
            println!("{}", result.answer);
            if common.verbose >= 2 {
                print_trace(&result.trace, 0);
            }
            if common.verbose >= 1 {
                println!(
                    "completions: {}\ntool calls: {}\nwall seconds: {:.3}",
                    result.metrics.completion_calls,
                    result.metrics.tool_calls,
                    result.metrics.wall_secs
                );
            }
            if let (Some(path), Some(recorder)) = (&common.record, &built.recorder) {
                if let Err(error) = recorder.write_to(path) {
                    eprintln!("error: cannot write transcript: {error}");
                    return EXIT_CONFIG;
                }
            }
            EXIT_OK
        }
        Err(error) => {
            eprintln!("error: {}", error.kind);
            if !error.path.is_empty() {
                eprintln!("at: {}", error.path.join(" -> "));
            }
            EXIT_ENGINE
        }
    }
}

fn print_trace(node: &TraceNode, indent: usize) {
    let path = match &node.resolution {
        Some(Resolution::Memory) => "memory".to_string(),
        Some(Resolution::Tool { id }) => format!("tool {id}"),
        Some(Resolution::Fallback { tool_id, reason }) => match tool_id {
            Some(id) => format!("fallback from tool {id}: {reason}"),
            None => format!("fallback: {reason}"),
        },
        None => "unresolved".to_string(),
    };
    println!(
        "{}* [{}] {} ({} ms)",
        "  ".repeat(indent),
        path,
        node.question,
        node.elapsed_ms
    );
    for child in &node.children {
        print_trace(child, indent + 1);
    }
}

fn cmd_eval(
    common: &CommonArgs,
    dataset: &std::path::Path,
    task: TaskArg,
    sample: Option<u32>,
    seed: u64,
    jobs: usize,
    json_out: Option<&std::path::Path>,
) -> i32 {
    if jobs > 1 && (common.record.is_some() || common.replay.is_some()) {
        eprintln!("error: --jobs must be 1 when recording or replaying a transcript");
        return EXIT_CONFIG;
    }
    let loaded = match load_dataset_file(dataset, task.into()) {
        Ok(loaded) => loaded,
        Err(error) => {
            eprintln!("error: {error}");
            return EXIT_CONFIG;
        }
    };
    let built = match build_engine(&setup_paths(common)) {
        Ok(built) => built,
        Err(error) => return config_error(&error),
    };
    let options = EvalOptions {
        sample,
        seed,
        jobs,
        measure_latency: common.replay.is_none(),
    };
    let mut report = run_eval(&loaded.items, &built.engine, &options);
    report.dropped_items = loaded.dropped;

    print!("{}", report.render_category_table());
    print!("{}", report.render_totals());

    if let Some(path) = json_out {
        if let Err(error) = std::fs::write(path, report.to_json()) {
            eprintln!("error: cannot write report: {error}");
            return EXIT_CONFIG;
        }
    }
    if let (Some(path), Some(recorder)) = (&common.record, &built.recorder) {
        if let Err(error) = recorder.write_to(path) {
            eprintln!("error: cannot write transcript: {error}");
            return EXIT_CONFIG;
        }
    }
    EXIT_OK
}

fn cmd_tools(common: &CommonArgs, show_hidden: bool) -> i32 {
    let Some(path) = &common.tools else {
        eprintln!("error: no tool registry given; pass --tools");
        return EXIT_CONFIG;
    };
    let file = match std::fs::File::open(path) {
        Ok(file) => file,
        Err(error) => {
            eprintln!("error: cannot read {}: {error}", path.display());
            return EXIT_CONFIG;
        }
    };
    let registry = match load_registry(file) {
        Ok(registry) => registry,
        Err(error) => {
            eprintln!("error: {error}");
            return EXIT_CONFIG;
        }
    };
    for tool in &registry {
        println!("tool {}: {}", tool.id, tool.description);
        if !tool.dynamic_params.is_empty() {
            println!("  dynamic params:");
            for (name, description) in &tool.dynamic_params {
                println!("    {name}: {description}");
            }
        }
        if show_hidden {
            println!("  name: {}", tool.name);
            println!("  method: {}", tool.method);
            println!("  endpoint: {}", tool.endpoint);
            if !tool.static_params.is_empty() {
                println!("  static params:");
                for (name, _) in &tool.static_params {
                    println!("    {name}: ****");
                }
            }
            if !tool.static_headers.is_empty() {
                println!("  static headers:");
                for (name, _) in &tool.static_headers {
                    println!("    {name}: ****");
                }
            }
        }
    }
    EXIT_OK
}
