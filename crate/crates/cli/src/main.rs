//! Command-line harness for the operator-learning pipeline.
//!
//! Subcommands: `generate` builds seeded benchmark datasets (and optionally a
//! recorded proposal bundle for offline runs), `learn` runs the
//! propose–plan–score loop, `eval` replans a learned library against fresh
//! tasks, `baseline` runs the flat low-level search the bi-level planner is
//! compared with, and `inspect` summarizes any artifact.
//!
//! All serialized outputs are deterministic: identical invocations produce
//! byte-identical files. Wall-clock timings go to a separate `timings.txt`
//! that deterministic comparisons should ignore.
//!
//! Exit codes: 0 success, 2 bad command line (from the parser), 3 unreadable
//! or invalid input, 4 runtime failure.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use craftplan::env::{
    generate_benchmark, load_tasks, write_tasks, write_witnesses, Benchmark, Env, EnvConfig,
    GeneratorConfig, Task,
};
use craftplan::learner::{transfer_evaluate, Learner, LearnerConfig, TransferReport};
use craftplan::planner::PlannerConfig;
use craftplan::policy::{baseline_goal_search, BilevelConfig, PolicyDictionary, SubgoalSearchConfig};
use craftplan::proposer::{
    propose_goals, ProposalBackend, RemoteConfig, ReplayBackend, ReplayBundle, SolvedExample,
    TaskContext,
};
use craftplan::symbolic::{parse_domain, print_domain, Operator, OperatorLibrary};

#[derive(Parser)]
#[command(
    name = "craftplan",
    version,
    about = "Learn verified planning operators for a crafting grid-world from noisy proposals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded benchmark dataset (tasks + solvability witnesses),
    /// optionally with a recorded proposal bundle for offline learning.
    Generate(GenerateArgs),
    /// Run the iterative propose–plan–score loop over a dataset.
    Learn(LearnArgs),
    /// Replan a learned library against a dataset (goal proposals only).
    Eval(EvalArgs),
    /// Flat low-level search for task reward, with no symbolic layer.
    Baseline(BaselineArgs),
    /// Print a human-readable summary of an artifact.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum World {
    /// 8x8 world with the four-recipe crafting book.
    Desk,
    /// 12x12 world with the full crafting book.
    Full,
}

#[derive(Args)]
struct WorldArgs {
    /// Built-in world preset.
    #[arg(long, value_enum, default_value = "desk", conflicts_with = "world_config")]
    world: World,
    /// TOML world configuration file (overrides --world).
    #[arg(long)]
    world_config: Option<PathBuf>,
}

impl WorldArgs {
    fn resolve(&self) -> Result<EnvConfig, CliError> {
        if let Some(path) = &self.world_config {
            let text = read_input(path)?;
            return EnvConfig::from_toml(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())));
        }
        Ok(match self.world {
            World::Desk => EnvConfig::desk(),
            World::Full => EnvConfig::full(),
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Benchmark family: mining, crafting, or compositional.
    #[arg(long)]
    benchmark: Benchmark,
    /// Number of tasks.
    #[arg(long)]
    count: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    world: WorldArgs,
    /// Output directory (created if absent); receives tasks.jsonl,
    /// witnesses.jsonl, and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Also record a proposal bundle for offline learning at this path.
    #[arg(long)]
    bundle_out: Option<PathBuf>,
    /// Broken definition variants recorded per operator name in the bundle.
    #[arg(long, default_value_t = 0)]
    distractors_per_name: usize,
}

#[derive(Args)]
struct BudgetArgs {
    /// Symbolic search: maximum node expansions per goal conjecture.
    #[arg(long, default_value_t = 100_000)]
    hl_nodes: usize,
    /// Symbolic search: maximum plan length.
    #[arg(long, default_value_t = 24)]
    hl_max_len: usize,
    /// Low-level search: environment steps per subgoal (replays included).
    #[arg(long, default_value_t = 1_000)]
    subgoal_nodes: usize,
    /// Low-level search: action-sequence horizon per subgoal.
    #[arg(long, default_value_t = 4)]
    subgoal_depth: usize,
    /// Dictionary replays: bindings tried per recorded trajectory.
    #[arg(long, default_value_t = 8)]
    replays_per_entry: usize,
}

impl BudgetArgs {
    fn bilevel(&self) -> BilevelConfig {
        let mut cfg = BilevelConfig::default();
        cfg.planner.max_nodes = self.hl_nodes;
        cfg.planner.max_plan_len = self.hl_max_len;
        cfg.subgoal = SubgoalSearchConfig {
            budget: self.subgoal_nodes,
            depth: self.subgoal_depth,
            replays_per_entry: self.replays_per_entry,
        };
        cfg
    }
}

#[derive(Args)]
struct BackendArgs {
    /// Recorded proposal bundle to replay (offline backend).
    #[arg(long, required_unless_present = "remote", conflicts_with = "remote")]
    bundle: Option<PathBuf>,
    /// Use the remote chat-completion proposal service instead of a bundle.
    #[arg(long)]
    remote: bool,
    /// Remote service endpoint.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    /// Remote model name.
    #[arg(long, default_value = "gpt-4")]
    model: String,
    /// Remote sampling temperature.
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    /// Remote request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    /// Remote retries after a failed request.
    #[arg(long, default_value_t = 2)]
    retries: u32,
}

enum Backend {
    Replay(ReplayBackend),
    Remote(craftplan::proposer::RemoteBackend),
}

impl Backend {
    fn as_dyn(&self) -> &dyn ProposalBackend {
        match self {
            Backend::Replay(b) => b,
            Backend::Remote(b) => b,
        }
    }
}

impl BackendArgs {
    fn resolve(&self) -> Result<(Backend, serde_json::Value), CliError> {
        if self.remote {
            let config = RemoteConfig {
                endpoint: self.endpoint.clone(),
                model: self.model.clone(),
                temperature: self.temperature,
                timeout_secs: self.timeout_secs,
                retries: self.retries,
            };
            let descriptor = serde_json::json!({
                "kind": "remote",
                "endpoint": config.endpoint,
                "model": config.model,
                "temperature": config.temperature,
            });
            Ok((
                Backend::Remote(craftplan::proposer::RemoteBackend::new(config)),
                descriptor,
            ))
        } else {
            let path = self.bundle.as_ref().expect("clap enforces bundle|remote");
            let bundle = ReplayBundle::load(path)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let descriptor = serde_json::json!({
                "kind": "replay",
                "path": path.display().to_string(),
                "sha256": sha256_file(path)?,
            });
            Ok((Backend::Replay(ReplayBackend::new(bundle)), descriptor))
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Task dataset (JSON lines, as written by `generate`).
    #[arg(long)]
    tasks: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    world: WorldArgs,
    /// Output directory; receives learned.pddl, dictionary.json,
    /// reports.jsonl, operator_stats.json, manifest.json, timings.txt.
    #[arg(long)]
    out: PathBuf,
    /// Learner seed (task-order shuffling).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Passes over the task set.
    #[arg(long, default_value_t = 2)]
    iterations: usize,
    /// Decomposition proposals requested per task.
    #[arg(long, default_value_t = 4)]
    decompositions_per_task: usize,
    /// Goal conjectures requested per task.
    #[arg(long, default_value_t = 4)]
    goals_per_task: usize,
    /// Definition proposals requested per undefined name.
    #[arg(long, default_value_t = 3)]
    definitions_per_name: usize,
    /// Evidence threshold: subgoal attempts required before judging (strict).
    #[arg(long, default_value_t = 1)]
    min_evidence: u64,
    /// Reliability threshold: success fraction required to verify (strict).
    #[arg(long, default_value_t = 0.5)]
    min_reliability: f64,
    #[command(flatten)]
    budgets: BudgetArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Task dataset to evaluate on.
    #[arg(long)]
    tasks: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Learned library file; repeat to merge several (identical duplicate
    /// operators are skipped, conflicting definitions are an error).
    #[arg(long, required = true)]
    library: Vec<PathBuf>,
    /// Trajectory dictionary learned alongside the library.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[command(flatten)]
    world: WorldArgs,
    /// Output directory; receives eval_report.json, manifest.json,
    /// timings.txt.
    #[arg(long)]
    out: PathBuf,
    /// Goal conjectures requested per task.
    #[arg(long, default_value_t = 4)]
    goals_per_task: usize,
    #[command(flatten)]
    budgets: BudgetArgs,
    /// Worker threads (tasks are independent; results are order-stable).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct BaselineArgs {
    /// Task dataset to evaluate on.
    #[arg(long)]
    tasks: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    world: WorldArgs,
    /// Output directory; receives baseline_report.json, manifest.json,
    /// timings.txt.
    #[arg(long)]
    out: PathBuf,
    /// Goal conjectures requested per task.
    #[arg(long, default_value_t = 4)]
    goals_per_task: usize,
    /// Environment steps per task (all conjectures share it). Matches ten
    /// bi-level subgoal budgets by default.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    /// Worker threads (tasks are independent; results are order-stable).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InspectTarget {
    /// Task dataset to summarize.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Proposal bundle to summarize.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Operator library to summarize.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Trajectory dictionary to summarize.
    #[arg(long)]
    dict: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    target: InspectTarget,
    #[command(flatten)]
    world: WorldArgs,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    /// Unreadable or invalid input artifacts (exit 3).
    Input(String),
    /// Failure while running the pipeline (exit 4).
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

fn load_dataset(path: &Path, env: &Env) -> Result<Vec<Task>, CliError> {
    load_tasks(path, env).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Subcommand drivers
// ---------------------------------------------------------------------------

fn run_generate(args: GenerateArgs) -> Result<(), CliError> {
    let env_config = args.world.resolve()?;
    let config = GeneratorConfig {
        benchmark: args.benchmark,
        count: args.count,
        seed: args.seed,
        env: env_config.clone(),
    };
    let (tasks, witnesses) =
        generate_benchmark(&config).map_err(|e| CliError::Runtime(e.to_string()))?;

    ensure_dir(&args.out)?;
    let tasks_path = args.out.join("tasks.jsonl");
    let witnesses_path = args.out.join("witnesses.jsonl");
    write_tasks(&tasks_path, &tasks).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_witnesses(&witnesses_path, &witnesses)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut bundle_entry = serde_json::Value::Null;
    if let Some(bundle_path) = &args.bundle_out {
        let env = Env::new(env_config.clone());
        let bundle = craftplan::proposer::synthesize_bundle(
            &env,
            &tasks,
            &witnesses,
            args.distractors_per_name,
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Some(parent) = bundle_path.parent() {
            if !parent.as_os_str().is_empty() {
                ensure_dir(parent)?;
            }
        }
        bundle
            .save(bundle_path)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        bundle_entry = serde_json::json!({
            "path": bundle_path.display().to_string(),
            "sha256": sha256_file(bundle_path)?,
            "distractors_per_name": args.distractors_per_name,
        });
    }

    let manifest = serde_json::json!({
        "command": "generate",
        "benchmark": args.benchmark.to_string(),
        "count": args.count,
        "seed": args.seed,
        "world": env_config,
        "outputs": {
            "tasks": { "path": tasks_path.display().to_string(), "sha256": sha256_file(&tasks_path)? },
            "witnesses": { "path": witnesses_path.display().to_string(), "sha256": sha256_file(&witnesses_path)? },
            "bundle": bundle_entry,
        },
    });
    write_output(&args.out.join("manifest.json"), &to_pretty_json(&manifest))?;
    println!(
        "generated {} {} tasks into {}",
        tasks.len(),
        args.benchmark,
        args.out.display()
    );
    Ok(())
}

fn run_learn(args: LearnArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let env_config = args.world.resolve()?;
    let env = Env::new(env_config.clone());
    let tasks = load_dataset(&args.tasks, &env)?;
    let (backend, backend_descriptor) = args.backend.resolve()?;

    let config = LearnerConfig {
        iterations: args.iterations,
        min_evidence: args.min_evidence,
        min_reliability: args.min_reliability,
        decompositions_per_task: args.decompositions_per_task,
        goals_per_task: args.goals_per_task,
        definitions_per_name: args.definitions_per_name,
        seed: args.seed,
        bilevel: args.budgets.bilevel(),
    };
    let loaded = started.elapsed();

    let mut learner = Learner::new(&env, backend.as_dyn(), config.clone());
    let run = learner
        .run(&tasks)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let learned = started.elapsed();

    ensure_dir(&args.out)?;
    let library = learner.library("learned");
    let library_path = args.out.join("learned.pddl");
    write_output(&library_path, &print_domain(&library))?;
    let dict_path = args.out.join("dictionary.json");
    write_output(&dict_path, &learner.dictionary().to_json())?;
    let stats_path = args.out.join("operator_stats.json");
    write_output(&stats_path, &to_pretty_json(learner.stats()))?;

    let reports_path = args.out.join("reports.jsonl");
    let mut reports_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&reports_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", reports_path.display())))?;
    for report in &run.reports {
        let line = serde_json::to_string(report).expect("report serializes");
        writeln!(reports_file, "{line}")
            .map_err(|e| CliError::Runtime(format!("{}: {e}", reports_path.display())))?;
    }

    let manifest = serde_json::json!({
        "command": "learn",
        "world": env_config,
        "dataset": { "path": args.tasks.display().to_string(), "sha256": sha256_file(&args.tasks)? },
        "backend": backend_descriptor,
        "learner": config,
        "outputs": {
            "library": { "path": library_path.display().to_string(), "sha256": sha256_file(&library_path)? },
            "dictionary": { "path": dict_path.display().to_string(), "sha256": sha256_file(&dict_path)? },
            "stats": { "path": stats_path.display().to_string(), "sha256": sha256_file(&stats_path)? },
            "reports": reports_path.display().to_string(),
        },
    });
    write_output(&args.out.join("manifest.json"), &to_pretty_json(&manifest))?;

    let total = started.elapsed();
    write_output(
        &args.out.join("timings.txt"),
        &format!(
            "load_secs {:.3}\nlearn_secs {:.3}\ntotal_secs {:.3}\n",
            loaded.as_secs_f64(),
            (learned - loaded).as_secs_f64(),
            total.as_secs_f64()
        ),
    )?;

    println!(
        "solved {}/{} tasks; library has {} operators; outputs in {}",
        run.solved.len(),
        tasks.len(),
        library.len(),
        args.out.display()
    );
    Ok(())
}

/// Merges several library files over the world vocabulary. Identical
/// duplicates (same name, arity, and canonical text) merge silently;
/// same-key conflicts are an input error.
fn merge_libraries(paths: &[PathBuf], env: &Env) -> Result<OperatorLibrary, CliError> {
    let mut merged = OperatorLibrary::new("merged", env.vocabulary().clone())
        .expect("merged library name is valid");
    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    for path in paths {
        let text = read_input(path)?;
        let parsed = parse_domain(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        for op in parsed.iter() {
            let key = op.key().to_string();
            let canonical = op.to_string();
            match texts.get(&key) {
                Some(existing) if *existing == canonical => continue,
                Some(_) => {
                    return Err(CliError::Input(format!(
                        "{}: operator {key} conflicts with an earlier library",
                        path.display()
                    )));
                }
                None => {
                    merged
                        .insert(Operator::clone(op))
                        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                    texts.insert(key, canonical);
                }
            }
        }
    }
    Ok(merged)
}

/// Splits `items` into `jobs` contiguous chunks and maps them on scoped
/// threads, preserving order. `jobs = 1` runs inline.
fn parallel_chunks<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> Result<Vec<R>, CliError> + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return f(items);
    }
    let chunk_size = items.len().div_ceil(jobs);
    let chunks: Vec<&[T]> = items.chunks(chunk_size).collect();
    let mut results: Vec<Result<Vec<R>, CliError>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| scope.spawn(|| f(chunk)))
            .collect();
        for handle in handles {
            results.push(handle.join().expect("worker thread panicked"));
        }
    });
    let mut merged = Vec::new();
    for result in results {
        merged.extend(result?);
    }
    Ok(merged)
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let env_config = args.world.resolve()?;
    let env = Env::new(env_config.clone());
    let tasks = load_dataset(&args.tasks, &env)?;
    let (backend, backend_descriptor) = args.backend.resolve()?;
    let library = merge_libraries(&args.library, &env)?;
    let dict = match &args.dict {
        Some(path) => PolicyDictionary::from_json(&read_input(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => PolicyDictionary::new(),
    };
    let bilevel = args.budgets.bilevel();

    let task_reports = parallel_chunks(&tasks, args.jobs, |chunk| {
        let report = transfer_evaluate(
            &env,
            chunk,
            backend.as_dyn(),
            &library,
            &dict,
            args.goals_per_task,
            &bilevel,
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(report.tasks)
    })?;
    let solved = task_reports.iter().filter(|t| t.solved).count();
    let report = TransferReport {
        solved,
        total: task_reports.len(),
        tasks: task_reports,
    };

    ensure_dir(&args.out)?;
    let report_path = args.out.join("eval_report.json");
    write_output(&report_path, &to_pretty_json(&report))?;
    let manifest = serde_json::json!({
        "command": "eval",
        "world": env_config,
        "dataset": { "path": args.tasks.display().to_string(), "sha256": sha256_file(&args.tasks)? },
        "backend": backend_descriptor,
        "libraries": args.library.iter().map(|p| -> Result<serde_json::Value, CliError> {
            Ok(serde_json::json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? }))
        }).collect::<Result<Vec<_>, _>>()?,
        "goals_per_task": args.goals_per_task,
        "outputs": { "report": { "path": report_path.display().to_string(), "sha256": sha256_file(&report_path)? } },
    });
    write_output(&args.out.join("manifest.json"), &to_pretty_json(&manifest))?;
    write_output(
        &args.out.join("timings.txt"),
        &format!("total_secs {:.3}\n", started.elapsed().as_secs_f64()),
    )?;
    println!("eval solved {}/{} tasks", report.solved, report.total);
    Ok(())
}

#[derive(Serialize)]
struct BaselineTaskReport {
    task_id: String,
    solved: bool,
    ll_steps: usize,
    plan_len: usize,
}

#[derive(Serialize)]
struct BaselineReport {
    budget: usize,
    solved: usize,
    total: usize,
    tasks: Vec<BaselineTaskReport>,
}

fn run_baseline(args: BaselineArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let env_config = args.world.resolve()?;
    let env = Env::new(env_config.clone());
    let tasks = load_dataset(&args.tasks, &env)?;
    let (backend, backend_descriptor) = args.backend.resolve()?;

    let task_reports = parallel_chunks(&tasks, args.jobs, |chunk| {
        let mut rows = Vec::new();
        for task in chunk {
            let state = env
                .abstract_state(&task.initial)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let examples: [SolvedExample; 0] = [];
            let ctx = TaskContext {
                task_id: &task.id,
                instruction: &task.instruction,
                state: &state,
                examples: &examples,
            };
            let goals = propose_goals(
                backend.as_dyn(),
                &ctx,
                env.vocabulary(),
                args.goals_per_task,
            );
            let outcome = baseline_goal_search(&env, task, &goals, args.budget)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            rows.push(BaselineTaskReport {
                task_id: task.id.clone(),
                solved: outcome.solved,
                ll_steps: outcome.ll_steps,
                plan_len: outcome.actions.len(),
            });
        }
        Ok(rows)
    })?;
    let report = BaselineReport {
        budget: args.budget,
        solved: task_reports.iter().filter(|t| t.solved).count(),
        total: task_reports.len(),
        tasks: task_reports,
    };

    ensure_dir(&args.out)?;
    let report_path = args.out.join("baseline_report.json");
    write_output(&report_path, &to_pretty_json(&report))?;
    let manifest = serde_json::json!({
        "command": "baseline",
        "world": env_config,
        "dataset": { "path": args.tasks.display().to_string(), "sha256": sha256_file(&args.tasks)? },
        "backend": backend_descriptor,
        "budget": args.budget,
        "goals_per_task": args.goals_per_task,
        "outputs": { "report": { "path": report_path.display().to_string(), "sha256": sha256_file(&report_path)? } },
    });
    write_output(&args.out.join("manifest.json"), &to_pretty_json(&manifest))?;
    write_output(
        &args.out.join("timings.txt"),
        &format!("total_secs {:.3}\n", started.elapsed().as_secs_f64()),
    )?;
    println!("baseline solved {}/{} tasks", report.solved, report.total);
    Ok(())
}

fn run_inspect(args: InspectArgs) -> Result<(), CliError> {
    if let Some(path) = &args.target.tasks {
        let env = Env::new(args.world.resolve()?);
        let tasks = load_dataset(path, &env)?;
        let mut by_benchmark: BTreeMap<String, usize> = BTreeMap::new();
        for task in &tasks {
            *by_benchmark.entry(task.benchmark.to_string()).or_default() += 1;
        }
        println!("{} tasks", tasks.len());
        for (benchmark, count) in &by_benchmark {
            println!("  {benchmark}: {count}");
        }
        for task in &tasks {
            println!("  {}  {}", task.id, task.instruction);
        }
    } else if let Some(path) = &args.target.bundle {
        let bundle = ReplayBundle::load(path).map_err(|e| CliError::Input(e.to_string()))?;
        println!(
            "bundle: {} decomposition entries, {} goal entries, {} definition names",
            bundle.decompositions.len(),
            bundle.goals.len(),
            bundle.definitions.len()
        );
        for (name, texts) in &bundle.definitions {
            println!("  {name}: {} definition(s)", texts.len());
        }
    } else if let Some(path) = &args.target.library {
        let text = read_input(path)?;
        let library = parse_domain(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        println!("library with {} operators", library.len());
        for op in library.iter() {
            println!("  {}", op.key());
        }
    } else if let Some(path) = &args.target.dict {
        let dict = PolicyDictionary::from_json(&read_input(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        println!("dictionary with {} subgoal keys", dict.len());
        for key in dict.keys() {
            println!("  {} ({} entries)", key, dict.entries(key).len());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Learn(args) => run_learn(args),
        Command::Eval(args) => run_eval(args),
        Command::Baseline(args) => run_baseline(args),
        Command::Inspect(args) => run_inspect(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.code());
    }
}
