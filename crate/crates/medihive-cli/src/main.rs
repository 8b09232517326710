//! Operator entry point: single-question runs, dataset benchmarks with
//! ablation and agent-count sweeps, scripted simulations, and trace
//! inspection.
//!
//! Exit codes: 0 success, 1 configuration/dataset/usage errors,
//! 2 backend-fatal protocol failures, 3 all-invalid final ballots.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use medihive::bench::{csv_row, run_bench, BenchOptions, BenchReport};
use medihive::config::load_config;
use medihive::datasets::{self, DatasetKind};
use medihive::engine::{self, BackendConfig, EngineError, ProtocolConfig, Scheduler};
use medihive::memory_pool::{Payload, Phase};
use medihive::trace::{read_trace_file, write_trace_file};
use medihive::{Answer, AnswerDomain, QuestionInstance, RunResult};

#[derive(Parser)]
#[command(
    name = "medihive",
    version,
    about = "Decentralized multi-agent consensus over a shared memory pool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer a single question and write its trace.
    Run(RunArgs),
    /// Run a dataset benchmark and write a report.
    Bench(BenchArgs),
    /// Scripted-only protocol simulation with agreement dumps.
    Simulate(SimulateArgs),
    /// Benchmark across several agent counts and compare.
    Sweep(SweepArgs),
    /// Inspect a trace file.
    Trace(TraceArgs),
}

#[derive(Args)]
struct CommonRunArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "hive-out")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured scheduler.
    #[arg(long)]
    scheduler: Option<SchedulerArg>,
    /// Disable protocol components (comma-separated:
    /// cot, role_assignment, weighted_voting).
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<String>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchedulerArg {
    Sequential,
    Concurrent,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Question file: a JSON instance/record, or plain question text.
    #[arg(long)]
    question: PathBuf,
    /// Answer labels for plain-text questions (default yes,no,maybe).
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Base name for the trace and result files.
    #[arg(long, default_value = "run")]
    name: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Dataset file (line-delimited records).
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset record format.
    #[arg(long)]
    kind: DatasetKind,
    /// Keep only the first N questions (or a random N with --sample-seed).
    #[arg(long)]
    limit: Option<usize>,
    /// Seeded random subsample instead of first-N.
    #[arg(long)]
    sample_seed: Option<u64>,
    /// Concurrent questions.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write one trace file per question under `<out>/traces`.
    #[arg(long)]
    save_traces: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Dataset file to simulate over.
    #[arg(long, required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    /// Dataset record format.
    #[arg(long, required_unless_present = "synthetic")]
    kind: Option<DatasetKind>,
    /// Generate N synthetic gold-labeled questions instead of a dataset.
    #[arg(long, conflicts_with_all = ["dataset", "kind"])]
    synthetic: Option<usize>,
    /// Answer labels for synthetic questions.
    #[arg(long, value_delimiter = ',', default_values_t = ["A".to_string(), "B".to_string(), "C".to_string(), "D".to_string()])]
    labels: Vec<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Dump per-question agreement trajectories to this file.
    #[arg(long)]
    dump_agreement: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Agent counts to compare, e.g. "3,5,7".
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    kind: Option<DatasetKind>,
    #[arg(long, conflicts_with_all = ["dataset", "kind"])]
    synthetic: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = ["A".to_string(), "B".to_string(), "C".to_string(), "D".to_string()])]
    labels: Vec<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file to inspect.
    file: PathBuf,
    /// Only entries from this phase.
    #[arg(long)]
    phase: Option<String>,
    /// Only entries by this agent id.
    #[arg(long)]
    agent: Option<usize>,
    /// Only entries from this round.
    #[arg(long)]
    round: Option<u32>,
}

/// A failure plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(err: EngineError) -> Self {
        let code = match err {
            EngineError::ConfigInvalid(_) => 1,
            EngineError::AllInvalid => 3,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<medihive::config::ConfigError> for Failure {
    fn from(err: medihive::config::ConfigError) -> Self {
        Failure::usage(err.to_string())
    }
}

impl From<medihive::datasets::DatasetError> for Failure {
    fn from(err: medihive::datasets::DatasetError) -> Self {
        Failure::usage(err.to_string())
    }
}

impl From<medihive::trace::TraceError> for Failure {
    fn from(err: medihive::trace::TraceError) -> Self {
        Failure::usage(err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::usage(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Trace(args) => cmd_trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// Resolve config file + CLI overrides into a validated ProtocolConfig.
fn resolve_config(common: &CommonRunArgs) -> Result<ProtocolConfig, Failure> {
    let mut config = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(scheduler) = common.scheduler {
        config.scheduler = match scheduler {
            SchedulerArg::Sequential => Scheduler::Sequential,
            SchedulerArg::Concurrent => Scheduler::Concurrent,
        };
    }
    for flag in &common.ablate {
        match flag.trim() {
            "cot" => config.ablation.cot = false,
            "role_assignment" => config.ablation.role_assignment = false,
            "weighted_voting" => config.ablation.weighted_voting = false,
            other => {
                return Err(Failure::usage(format!(
                "unknown ablation flag {other:?} (expected cot, role_assignment, weighted_voting)"
            )))
            }
        }
    }
    config
        .validate()
        .map_err(|e| Failure::usage(format!("invalid configuration: {e}")))?;
    Ok(config)
}

/// Parse a question file: a JSON instance, a single dataset record, or
/// plain question text.
fn load_question(path: &Path, labels: &[String]) -> Result<QuestionInstance, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::usage(format!("cannot read question file {}: {e}", path.display()))
    })?;
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Ok(instance) = serde_json::from_str::<QuestionInstance>(trimmed) {
            return Ok(instance);
        }
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
            if value.get("options").is_some() {
                return parse_medqa_style(&value);
            }
            if value.get("final_decision").is_some() || value.get("contexts").is_some() {
                return parse_pubmedqa_style(&value);
            }
        }
        return Err(Failure::usage(format!(
            "question file {} is JSON but matches no known schema",
            path.display()
        )));
    }
    let domain = if labels.is_empty() {
        AnswerDomain::yes_no_maybe()
    } else {
        AnswerDomain::new(labels.to_vec())
    };
    Ok(QuestionInstance::new(
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "question".into()),
        trimmed.to_string(),
        domain,
    ))
}

fn parse_medqa_style(value: &serde_json::Value) -> Result<QuestionInstance, Failure> {
    let question = value
        .get("question")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Failure::usage("record has no question text"))?;
    let options = value
        .get("options")
        .and_then(|v| v.as_object())
        .ok_or_else(|| Failure::usage("record has no options map"))?;
    let mut labels: Vec<String> = options.keys().map(|k| k.to_uppercase()).collect();
    labels.sort();
    let map: BTreeMap<String, String> = options
        .iter()
        .map(|(k, v)| (k.to_uppercase(), v.as_str().unwrap_or_default().to_string()))
        .collect();
    let domain = AnswerDomain::new(labels);
    let mut instance =
        QuestionInstance::new("question", question, domain.clone()).with_options(map);
    if let Some(gold) = value.get("answer_idx").and_then(|v| v.as_str()) {
        instance.gold = domain.normalize(gold);
    }
    Ok(instance)
}

fn parse_pubmedqa_style(value: &serde_json::Value) -> Result<QuestionInstance, Failure> {
    let question = value
        .get("question")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Failure::usage("record has no question text"))?;
    let contexts: Vec<String> = value
        .get("contexts")
        .and_then(|v| v.as_array())
        .map(|items| {
            items
                .iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect()
        })
        .unwrap_or_default();
    let domain = AnswerDomain::yes_no_maybe();
    let mut instance =
        QuestionInstance::new("question", question, domain.clone()).with_contexts(contexts);
    if let Some(gold) = value.get("final_decision").and_then(|v| v.as_str()) {
        instance.gold = domain.normalize(gold);
    }
    Ok(instance)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let config = resolve_config(&args.common)?;
    let question = load_question(&args.question, &args.labels)?;
    let result = engine::run(&question, &config)?;
    std::fs::create_dir_all(&args.common.out)?;

    let trace_path = args.common.out.join(format!("{}.trace", args.name));
    write_trace_file(&result.pool, &trace_path)?;
    let summary_path = args.common.out.join(format!("{}.json", args.name));
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&result.summary())
            .map_err(|e| Failure::usage(e.to_string()))?,
    )?;

    print_run(&result);
    println!("trace: {}", trace_path.display());
    Ok(())
}

fn print_run(result: &RunResult) {
    println!(
        "ANSWER: {} ({}, k*={})",
        result.final_answer, result.mode, result.rounds_executed
    );
    let agreements: Vec<String> = result
        .agreement_by_round
        .iter()
        .enumerate()
        .map(|(i, a)| format!("k={}: {:.2}", i + 1, a))
        .collect();
    println!("agreement by round: {}", agreements.join(", "));
    println!(
        "debate: {}",
        if result.debate_triggered {
            "triggered"
        } else {
            "skipped"
        }
    );
}

/// Shared bench body: runs questions, streams the CSV, writes the report.
fn bench_to_files(
    questions: &[QuestionInstance],
    config: &ProtocolConfig,
    out: &Path,
    jobs: usize,
    save_traces: bool,
    dataset_label: Option<String>,
    report_name: &str,
) -> Result<BenchReport, Failure> {
    if questions.is_empty() {
        return Err(Failure::usage("no scorable records"));
    }
    std::fs::create_dir_all(out)?;
    let csv_path = out.join(format!("{report_name}.csv"));
    let csv_file = File::create(&csv_path)?;
    let mut csv_writer = BufWriter::new(csv_file);
    writeln!(
        csv_writer,
        "id,predicted,gold,correct,mode,rounds,debate_triggered,initial_agreement,final_agreement,error"
    )?;

    let options = BenchOptions {
        jobs,
        save_traces_dir: save_traces.then(|| out.join("traces")),
    };
    // Rows flush as soon as they are final, in question order, so an
    // interrupted benchmark still leaves a usable partial table.
    let mut sink = |row: &medihive::bench::QuestionOutcome| {
        let _ = writeln!(csv_writer, "{}", csv_row(row).join(","));
        let _ = csv_writer.flush();
    };
    let mut report = run_bench(questions, config, &options, Some(&mut sink))?;
    if let Some(label) = dataset_label {
        report = report.with_dataset(label);
    }

    let report_path = out.join(format!("{report_name}.json"));
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).map_err(|e| Failure::usage(e.to_string()))?,
    )?;
    Ok(report)
}

fn print_report(report: &BenchReport) {
    println!("variant: {}", report.variant);
    println!("questions: {} ({} errors)", report.questions, report.errors);
    match &report.metrics {
        Some(metrics) => println!(
            "accuracy: {:.4}  macro-F1: {:.4}  (over {} scored)",
            metrics.accuracy, metrics.macro_f1, metrics.scored
        ),
        None => println!("accuracy: n/a (no gold labels)"),
    }
    println!(
        "debate rate: {:.2}  confirmatory rate: {:.2}  mean rounds: {:.2}",
        report.agreement.debate_rate,
        report.agreement.confirmatory_rate,
        report.agreement.mean_rounds
    );
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let config = resolve_config(&args.common)?;
    let questions = datasets::load(args.kind, &args.dataset)?;
    let questions = datasets::subsample(questions, args.limit, args.sample_seed);
    let report = bench_to_files(
        &questions,
        &config,
        &args.common.out,
        args.jobs,
        args.save_traces,
        Some(args.dataset.display().to_string()),
        "report",
    )?;
    print_report(&report);
    println!("report: {}", args.common.out.join("report.json").display());
    Ok(())
}

/// Synthetic gold-labeled questions for protocol simulation, gold cycling
/// through the label set.
fn synthetic_questions(count: usize, labels: &[String]) -> Vec<QuestionInstance> {
    let domain = AnswerDomain::new(labels.to_vec());
    (0..count)
        .map(|i| {
            let gold = labels[i % labels.len()].clone();
            QuestionInstance::new(
                format!("syn-{i}"),
                format!("synthetic question {i}"),
                domain.clone(),
            )
            .with_gold(Answer::label(gold))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let config = resolve_config(&args.common)?;
    if !matches!(config.backend, BackendConfig::Scripted(_)) {
        return Err(Failure::usage(
            "simulate requires a scripted backend; use `bench` for llm runs",
        ));
    }
    let questions = match args.synthetic {
        Some(count) => synthetic_questions(count, &args.labels),
        None => {
            let kind = args.kind.expect("clap enforces kind with dataset");
            let dataset = args.dataset.as_ref().expect("clap enforces dataset");
            datasets::subsample(datasets::load(kind, dataset)?, args.limit, args.sample_seed)
        }
    };
    let report = bench_to_files(
        &questions,
        &config,
        &args.common.out,
        args.jobs,
        false,
        args.dataset.as_ref().map(|p| p.display().to_string()),
        "simulation",
    )?;

    if let Some(path) = &args.dump_agreement {
        let mut writer = BufWriter::new(File::create(path)?);
        for outcome in &report.outcomes {
            let trajectory: Vec<String> = outcome
                .agreement_by_round
                .iter()
                .map(|a| format!("{a:.4}"))
                .collect();
            writeln!(writer, "{},{}", outcome.id, trajectory.join(","))?;
        }
        writer.flush()?;
        println!("agreement trajectories: {}", path.display());
    }
    print_report(&report);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if args.n.is_empty() {
        return Err(Failure::usage("sweep requires a non-empty --n list"));
    }
    let base = resolve_config(&args.common)?;
    if let BackendConfig::Scripted(behaviors) = &base.backend {
        if behaviors.len() > 1 {
            return Err(Failure::usage(
                "sweep over agent counts requires a single replicated scripted behavior (or an llm backend)",
            ));
        }
    }
    let questions = match args.synthetic {
        Some(count) => synthetic_questions(count, &args.labels),
        None => {
            let kind = args.kind.expect("clap enforces kind with dataset");
            let dataset = args.dataset.as_ref().expect("clap enforces dataset");
            datasets::subsample(datasets::load(kind, dataset)?, args.limit, args.sample_seed)
        }
    };

    let mut rows = Vec::new();
    for &n in &args.n {
        let mut config = base.clone();
        config.n = n;
        let report = bench_to_files(
            &questions,
            &config,
            &args.common.out,
            args.jobs,
            false,
            args.dataset.as_ref().map(|p| p.display().to_string()),
            &format!("report-n{n}"),
        )?;
        let (accuracy, macro_f1) = report
            .metrics
            .as_ref()
            .map(|m| (m.accuracy, m.macro_f1))
            .unwrap_or((f64::NAN, f64::NAN));
        rows.push((n, accuracy, macro_f1, report.agreement.mean_rounds));
    }

    std::fs::create_dir_all(&args.common.out)?;
    let sweep_path = args.common.out.join("sweep.csv");
    let mut writer = BufWriter::new(File::create(&sweep_path)?);
    writeln!(writer, "n,accuracy,macro_f1,mean_rounds")?;
    println!(
        "{:>3}  {:>8}  {:>8}  {:>11}",
        "n", "accuracy", "macro_f1", "mean_rounds"
    );
    for (n, accuracy, macro_f1, mean_rounds) in &rows {
        writeln!(writer, "{n},{accuracy:.4},{macro_f1:.4},{mean_rounds:.4}")?;
        println!("{n:>3}  {accuracy:>8.4}  {macro_f1:>8.4}  {mean_rounds:>11.2}");
    }
    writer.flush()?;
    println!("sweep table: {}", sweep_path.display());
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<(), Failure> {
    let phase_filter: Option<Phase> = match &args.phase {
        Some(text) => Some(text.parse().map_err(Failure::usage)?),
        None => None,
    };
    let snapshot = read_trace_file(&args.file)?;
    let entries: Vec<_> = snapshot
        .entries()
        .iter()
        .filter(|e| phase_filter.is_none_or(|p| e.phase == p))
        .filter(|e| args.agent.is_none_or(|id| e.author.agent_id() == Some(id)))
        .filter(|e| args.round.is_none_or(|r| e.round == r))
        .collect();

    // A closed pipe (e.g. `trace … | head`) ends the listing quietly.
    match print_trace(&entries) {
        Err(err) if err.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_trace(entries: &[&std::sync::Arc<medihive::MemoryEntry>]) -> std::io::Result<()> {
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    if entries.is_empty() {
        writeln!(out, "no entries match the given filters")?;
        return out.flush();
    }

    let mut current_group = None;
    for entry in entries {
        let group = (entry.phase, entry.round);
        if current_group != Some(group) {
            writeln!(out, "── {} round {} ──", entry.phase, entry.round)?;
            current_group = Some(group);
        }
        let body = match &entry.payload {
            Payload::QueryInit(q) => format!("question[{}]: {}", q.id, q.question),
            Payload::RoleProposal { role, reasoning } => format!("proposes {role}: {reasoning}"),
            Payload::RoleFinal { role, rationale } => format!("adopts {role}: {rationale}"),
            Payload::Analysis(out) | Payload::Fusion(out) => format!(
                "{} (confidence {:.2}): {}",
                out.answer,
                out.confidence.value(),
                out.reasoning
            ),
            Payload::Debate(arg) => {
                let target = arg.target.map(|t| format!(" -> A{t}")).unwrap_or_default();
                format!("{}{}: {}", arg.kind, target, arg.argument)
            }
            Payload::Report(report) => format!(
                "final answer {} via {}\n    {}",
                report.final_answer,
                report.mode,
                report.trace.replace('\n', "\n    ")
            ),
        };
        writeln!(
            out,
            "  #{:<4} {:<9} {}",
            entry.seq,
            entry.author.to_string(),
            body
        )?;
    }
    out.flush()
}
