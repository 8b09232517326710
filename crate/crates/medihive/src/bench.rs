//! Benchmark harness: runs the protocol over a question set, one pool per
//! question, and assembles a [`BenchReport`].
//!
//! Questions run independently (optionally across worker threads), each with
//! a seed derived from the run seed and the question index, so a rerun with
//! the same config reproduces the report byte for byte. Per-question rows
//! stream to an optional sink in question order as soon as they are final,
//! so an interrupted run leaves usable partial results behind.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::agents::mix_seed;
use crate::answer::Answer;
use crate::datasets::{compute_metrics, Metrics};
use crate::engine::{run, EngineError, ProtocolConfig, RunResult};
use crate::memory_pool::ResolutionMode;
use crate::question::QuestionInstance;
use crate::trace::write_trace_file;

/// Harness options independent of the protocol configuration.
#[derive(Clone, Debug, Default)]
pub struct BenchOptions {
    /// Worker threads; 0 or 1 runs questions sequentially.
    pub jobs: usize,
    /// Write one trace file per question into this directory.
    pub save_traces_dir: Option<PathBuf>,
}

/// One question's result row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub id: String,
    pub predicted: Option<Answer>,
    pub gold: Option<Answer>,
    pub correct: Option<bool>,
    pub mode: Option<ResolutionMode>,
    pub rounds: u32,
    pub debate_triggered: bool,
    pub agreement_by_round: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QuestionOutcome {
    fn from_result(question: &QuestionInstance, result: &RunResult) -> Self {
        let correct = question
            .gold
            .as_ref()
            .map(|gold| *gold == result.final_answer);
        QuestionOutcome {
            id: question.id.clone(),
            predicted: Some(result.final_answer.clone()),
            gold: question.gold.clone(),
            correct,
            mode: Some(result.mode),
            rounds: result.rounds_executed,
            debate_triggered: result.debate_triggered,
            agreement_by_round: result.agreement_by_round.clone(),
            error: None,
        }
    }

    fn from_error(question: &QuestionInstance, error: &EngineError) -> Self {
        QuestionOutcome {
            id: question.id.clone(),
            predicted: None,
            gold: question.gold.clone(),
            correct: None,
            mode: None,
            rounds: 0,
            debate_triggered: false,
            agreement_by_round: Vec::new(),
            error: Some(error.to_string()),
        }
    }
}

/// Aggregate agreement behavior over a bench run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub mean_initial_agreement: f64,
    pub mean_final_agreement: f64,
    pub debate_rate: f64,
    pub confirmatory_rate: f64,
    pub mean_rounds: f64,
}

/// Echo of the parameters a report was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub k_max: u32,
    pub t_debate: u32,
    pub tau_agree: f64,
    pub seed: u64,
    pub cot: bool,
    pub role_assignment: bool,
    pub weighted_voting: bool,
    pub backend: String,
}

impl ConfigEcho {
    fn from_config(config: &ProtocolConfig) -> Self {
        ConfigEcho {
            n: config.n,
            k_max: config.k_max,
            t_debate: config.t_debate,
            tau_agree: config.tau_agree,
            seed: config.seed,
            cot: config.ablation.cot,
            role_assignment: config.ablation.role_assignment,
            weighted_voting: config.ablation.weighted_voting,
            backend: match &config.backend {
                crate::engine::BackendConfig::Scripted(_) => "scripted".into(),
                crate::engine::BackendConfig::Llm(e) => format!("llm:{}", e.model),
            },
        }
    }
}

/// The benchmark report: per-question rows plus aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Which protocol variant ran, named by its disabled components.
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub config: ConfigEcho,
    pub questions: usize,
    pub errors: usize,
    /// Accuracy / macro-F1 over questions that have a gold label and
    /// completed; `None` when nothing was scorable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub agreement: AgreementStats,
    pub outcomes: Vec<QuestionOutcome>,
}

/// Human label for an ablation combination, matching the component names
/// the variant disables.
pub fn variant_label(config: &ProtocolConfig) -> String {
    let mut removed = Vec::new();
    if !config.ablation.cot {
        removed.push("CoT");
    }
    if !config.ablation.role_assignment {
        removed.push("Self-Evolving Role Assignment");
    }
    if !config.ablation.weighted_voting {
        removed.push("Confidence-Weighted Voting");
    }
    if removed.is_empty() {
        "MediHive".to_string()
    } else {
        format!("MediHive w/o {}", removed.join(" + "))
    }
}

/// Run the protocol over every question, deriving a per-question seed from
/// `(config.seed, index)`. `on_row` receives finished rows in question
/// order.
pub fn run_bench(
    questions: &[QuestionInstance],
    config: &ProtocolConfig,
    options: &BenchOptions,
    mut on_row: Option<&mut (dyn FnMut(&QuestionOutcome) + Send)>,
) -> Result<BenchReport, EngineError> {
    config.validate().map_err(EngineError::ConfigInvalid)?;
    if let Some(dir) = &options.save_traces_dir {
        std::fs::create_dir_all(dir).map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
    }

    struct FlushState<'cb> {
        results: Vec<Option<QuestionOutcome>>,
        cursor: usize,
        on_row: Option<&'cb mut (dyn FnMut(&QuestionOutcome) + Send)>,
    }

    let state = Mutex::new(FlushState {
        results: vec![None; questions.len()],
        cursor: 0,
        on_row: on_row.take(),
    });
    let next_index = AtomicUsize::new(0);
    let workers = options.jobs.max(1).min(questions.len().max(1));

    let run_one = |index: usize| {
        let question = &questions[index];
        let per_question = ProtocolConfig {
            seed: mix_seed(config.seed, index as u64),
            ..config.clone()
        };
        let outcome = match run(question, &per_question) {
            Ok(result) => {
                if let Some(dir) = &options.save_traces_dir {
                    let name = sanitize_file_name(&question.id);
                    let _ = write_trace_file(&result.pool, &dir.join(format!("{name}.trace")));
                }
                QuestionOutcome::from_result(question, &result)
            }
            Err(err) => QuestionOutcome::from_error(question, &err),
        };
        let mut state = state.lock().expect("bench state poisoned");
        state.results[index] = Some(outcome);
        while state.cursor < state.results.len() && state.results[state.cursor].is_some() {
            let cursor = state.cursor;
            state.cursor += 1;
            if state.on_row.is_some() {
                let row = state.results[cursor].clone().expect("row just checked");
                if let Some(cb) = state.on_row.as_mut() {
                    cb(&row);
                }
            }
        }
    };

    if workers <= 1 {
        for index in 0..questions.len() {
            run_one(index);
        }
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next_index.fetch_add(1, Ordering::Relaxed);
                    if index >= questions.len() {
                        break;
                    }
                    run_one(index);
                });
            }
        });
    }

    let outcomes: Vec<QuestionOutcome> = state
        .into_inner()
        .expect("bench state poisoned")
        .results
        .into_iter()
        .map(|row| row.expect("every question produced a row"))
        .collect();

    Ok(assemble_report(config, None, outcomes))
}

fn sanitize_file_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn assemble_report(
    config: &ProtocolConfig,
    dataset: Option<String>,
    outcomes: Vec<QuestionOutcome>,
) -> BenchReport {
    let completed: Vec<&QuestionOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let scorable: Vec<(Answer, Answer)> = completed
        .iter()
        .filter_map(|o| Some((o.gold.clone()?, o.predicted.clone()?)))
        .collect();
    let metrics = compute_metrics(&scorable).ok();

    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    let agreement = AgreementStats {
        mean_initial_agreement: mean(
            completed
                .iter()
                .filter_map(|o| o.agreement_by_round.first().copied())
                .collect(),
        ),
        mean_final_agreement: mean(
            completed
                .iter()
                .filter_map(|o| o.agreement_by_round.last().copied())
                .collect(),
        ),
        debate_rate: mean(
            completed
                .iter()
                .map(|o| if o.debate_triggered { 1.0 } else { 0.0 })
                .collect(),
        ),
        confirmatory_rate: mean(
            completed
                .iter()
                .map(|o| match o.mode {
                    Some(ResolutionMode::Confirmatory) => 1.0,
                    _ => 0.0,
                })
                .collect(),
        ),
        mean_rounds: mean(completed.iter().map(|o| o.rounds as f64).collect()),
    };

    BenchReport {
        variant: variant_label(config),
        dataset,
        config: ConfigEcho::from_config(config),
        questions: outcomes.len(),
        errors: outcomes.iter().filter(|o| o.error.is_some()).count(),
        metrics,
        agreement,
        outcomes,
    }
}

impl BenchReport {
    pub fn with_dataset(mut self, dataset: impl Into<String>) -> Self {
        self.dataset = Some(dataset.into());
        self
    }

    /// The flat per-question table as CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record([
            "id",
            "predicted",
            "gold",
            "correct",
            "mode",
            "rounds",
            "debate_triggered",
            "initial_agreement",
            "final_agreement",
            "error",
        ])?;
        for outcome in &self.outcomes {
            csv.write_record(csv_row(outcome))?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// CSV cells for one outcome, shared by the report writer and the
/// streaming sink.
pub fn csv_row(outcome: &QuestionOutcome) -> Vec<String> {
    vec![
        outcome.id.clone(),
        outcome
            .predicted
            .as_ref()
            .map(|a| a.to_string())
            .unwrap_or_default(),
        outcome
            .gold
            .as_ref()
            .map(|a| a.to_string())
            .unwrap_or_default(),
        outcome.correct.map(|c| c.to_string()).unwrap_or_default(),
        outcome.mode.map(|m| m.to_string()).unwrap_or_default(),
        outcome.rounds.to_string(),
        outcome.debate_triggered.to_string(),
        outcome
            .agreement_by_round
            .first()
            .map(|a| format!("{a:.4}"))
            .unwrap_or_default(),
        outcome
            .agreement_by_round
            .last()
            .map(|a| format!("{a:.4}"))
            .unwrap_or_default(),
        outcome.error.clone().unwrap_or_default(),
    ]
}
