//! End-to-end protocol execution with round barriers: query initialization,
//! two-step role assignment, initial analysis, disagreement detection,
//! conditional debate, iterative shared fusion, and the final reporter.
//!
//! Every protocol decision consumes a barrier-time snapshot, never a
//! mid-step view. Two schedulers sit behind one contract: a sequential one
//! that walks agents in id order, and a concurrent one that runs each
//! barrier step's capability calls in parallel and joins before committing.
//! Both commit step results to the pool in agent-id order, so a scripted
//! run replays identically under either.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, LlmAgent, ScriptedAgent, ScriptedBehavior, DEFAULT_ROLE};
use crate::answer::Answer;
use crate::consensus::{
    agreement_level, majority_answer, plurality_answer, should_debate, stable_termination,
    weighted_vote, BallotEntry, ConsensusError, RoundBallot,
};
use crate::llm_backend::prompts::{quote_entries, Bindings, Capability, TemplateSet};
use crate::llm_backend::{ChatCompletion, EndpointConfig, LlmClient};
use crate::memory_pool::{
    Author, MemoryEntry, MemoryPool, Payload, Phase, PoolError, ReportBody, ResolutionMode,
    Snapshot,
};
use crate::question::QuestionInstance;

/// Ablation toggles. All `true` is the full protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Chain-of-thought prompting for analysis and fusion.
    pub cot: bool,
    /// Two-step self-evolving role assignment; disabled, every agent acts
    /// as a generic medical expert.
    pub role_assignment: bool,
    /// Confidence-weighted voting on the non-consensus path; disabled, the
    /// reporter falls back to plurality with lexicographic ties.
    pub weighted_voting: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            cot: true,
            role_assignment: true,
            weighted_voting: true,
        }
    }
}

/// How one barrier step's agent calls are dispatched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// Agent-id order, one call at a time. The replay baseline.
    #[default]
    Sequential,
    /// One thread per agent per step, joined at the barrier.
    Concurrent,
}

/// Agent backend for a run.
#[derive(Clone, Debug)]
pub enum BackendConfig {
    /// Deterministic scripted population; one behavior per agent, or a
    /// single behavior replicated across the population.
    Scripted(Vec<ScriptedBehavior>),
    Llm(EndpointConfig),
}

/// Full parameterization of one protocol run.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    /// Agent count N.
    pub n: usize,
    /// Maximum fusion round index K.
    pub k_max: u32,
    /// Debate cycles when debate triggers.
    pub t_debate: u32,
    /// Agreement threshold for debate gating and consensus.
    pub tau_agree: f64,
    pub seed: u64,
    pub ablation: AblationFlags,
    pub backend: BackendConfig,
    pub scheduler: Scheduler,
    /// Feed dataset context passages into prompts; `false` is the stricter
    /// closed-book mode.
    pub include_contexts: bool,
}

impl ProtocolConfig {
    /// Scripted config with protocol defaults; N is the population size.
    pub fn scripted(behaviors: Vec<ScriptedBehavior>) -> Self {
        ProtocolConfig {
            n: behaviors.len(),
            k_max: 5,
            t_debate: 2,
            tau_agree: 0.8,
            seed: 0,
            ablation: AblationFlags::default(),
            backend: BackendConfig::Scripted(behaviors),
            scheduler: Scheduler::Sequential,
            include_contexts: true,
        }
    }

    pub fn llm(n: usize, endpoint: EndpointConfig) -> Self {
        ProtocolConfig {
            n,
            k_max: 5,
            t_debate: 2,
            tau_agree: 0.8,
            seed: 0,
            ablation: AblationFlags::default(),
            backend: BackendConfig::Llm(endpoint),
            scheduler: Scheduler::Concurrent,
            include_contexts: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scheduler(mut self, scheduler: Scheduler) -> Self {
        self.scheduler = scheduler;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n < 1 {
            return Err("n must be >= 1".into());
        }
        if self.k_max < 2 {
            return Err("k_max must be >= 2".into());
        }
        if !(self.tau_agree > 0.5 && self.tau_agree <= 1.0) {
            return Err(format!(
                "tau_agree must lie in (0.5, 1] for a unique supermajority, got {}",
                self.tau_agree
            ));
        }
        match &self.backend {
            BackendConfig::Scripted(behaviors) => {
                if behaviors.is_empty() {
                    return Err("scripted population must not be empty".into());
                }
                if behaviors.len() != self.n && behaviors.len() != 1 {
                    return Err(format!(
                        "scripted population has {} entries but n = {} (use exactly n entries, or one to replicate)",
                        behaviors.len(),
                        self.n
                    ));
                }
                for (idx, behavior) in behaviors.iter().enumerate() {
                    for (name, value) in [
                        ("switch_probability", behavior.switch_probability),
                        ("correctness_probability", behavior.correctness_probability),
                        ("confidence", behavior.confidence),
                    ] {
                        if let Some(v) = value {
                            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                                return Err(format!("agent {idx}: {name} {v} outside [0, 1]"));
                            }
                        }
                    }
                    if let Some(schedule) = &behavior.confidence_schedule {
                        if schedule.iter().any(|v| !(0.0..=1.0).contains(v)) {
                            return Err(format!("agent {idx}: confidence_schedule outside [0, 1]"));
                        }
                    }
                }
            }
            BackendConfig::Llm(endpoint) => endpoint.validate()?,
        }
        Ok(())
    }

    /// The per-agent behavior list, replicating a singleton population out
    /// to N.
    pub fn effective_behaviors(&self) -> Option<Vec<ScriptedBehavior>> {
        match &self.backend {
            BackendConfig::Scripted(behaviors) if behaviors.len() == 1 && self.n > 1 => {
                Some(vec![behaviors[0].clone(); self.n])
            }
            BackendConfig::Scripted(behaviors) => Some(behaviors.clone()),
            BackendConfig::Llm(_) => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("backend fatal: {survivors} of {initial} agents survive (need a strict majority); last failure: {last_error}")]
    BackendFatal {
        survivors: usize,
        initial: usize,
        last_error: String,
    },
    #[error("per-agent disagreement detection diverged over one snapshot")]
    InconsistentDetection,
    #[error("round {round} incomplete: expected {expected} outputs, found {found}")]
    RoundIncomplete {
        round: u32,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("every final-round answer is INVALID; no answer can be produced")]
    AllInvalid,
}

/// The outcome of one completed run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub question_id: String,
    pub final_answer: Answer,
    pub mode: ResolutionMode,
    /// Agreement per formal round: index 0 is round 1 (initial analysis),
    /// then one entry per executed fusion round.
    pub agreement_by_round: Vec<f64>,
    pub debate_triggered: bool,
    /// k*, the last executed fusion round.
    pub rounds_executed: u32,
    /// Synthesized reasoning trace.
    pub trace_text: String,
    pub survivors: usize,
    /// The sealed pool.
    pub pool: Snapshot,
}

/// Serializable view of a [`RunResult`], exported alongside the trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub question_id: String,
    pub final_answer: Answer,
    pub mode: ResolutionMode,
    pub agreement_by_round: Vec<f64>,
    pub debate_triggered: bool,
    pub rounds_executed: u32,
    pub survivors: usize,
    pub trace_text: String,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            question_id: self.question_id.clone(),
            final_answer: self.final_answer.clone(),
            mode: self.mode,
            agreement_by_round: self.agreement_by_round.clone(),
            debate_triggered: self.debate_triggered,
            rounds_executed: self.rounds_executed,
            survivors: self.survivors,
            trace_text: self.trace_text.clone(),
        }
    }
}

/// One agent plus its run-scoped state.
pub struct AgentSlot {
    pub agent: Box<dyn Agent>,
    pub role: String,
    pub alive: bool,
}

impl AgentSlot {
    pub fn new(agent: Box<dyn Agent>) -> Self {
        AgentSlot {
            agent,
            role: DEFAULT_ROLE.to_string(),
            alive: true,
        }
    }
}

fn build_agents(config: &ProtocolConfig) -> Result<Vec<AgentSlot>, EngineError> {
    match &config.backend {
        BackendConfig::Scripted(_) => {
            let behaviors = config
                .effective_behaviors()
                .expect("scripted backend has behaviors");
            Ok(behaviors
                .into_iter()
                .enumerate()
                .map(|(id, behavior)| {
                    AgentSlot::new(Box::new(ScriptedAgent::new(id, behavior, config.seed)))
                })
                .collect())
        }
        BackendConfig::Llm(endpoint) => {
            let templates = match &endpoint.templates_dir {
                Some(dir) => TemplateSet::from_dir(std::path::Path::new(dir))
                    .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?,
                None => TemplateSet::embedded(),
            };
            let templates = Arc::new(templates);
            (0..config.n)
                .map(|id| {
                    let client = LlmClient::new(endpoint.clone())
                        .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
                    Ok(AgentSlot::new(Box::new(LlmAgent::new(
                        id,
                        config.n,
                        config.ablation.cot,
                        Box::new(client),
                        Arc::clone(&templates),
                    ))))
                })
                .collect()
        }
    }
}

/// Run one barrier step over all living agents: dispatch per the scheduler,
/// join, and return results in agent-id order.
fn map_step<T, F>(
    scheduler: Scheduler,
    slots: &mut [AgentSlot],
    op: F,
) -> Vec<(usize, Result<T, AgentError>)>
where
    T: Send,
    F: Fn(usize, &mut AgentSlot) -> Result<T, AgentError> + Sync,
{
    match scheduler {
        Scheduler::Sequential => slots
            .iter_mut()
            .enumerate()
            .filter(|(_, slot)| slot.alive)
            .map(|(id, slot)| {
                let result = op(id, slot);
                (id, result)
            })
            .collect(),
        Scheduler::Concurrent => std::thread::scope(|scope| {
            let op = &op;
            let handles: Vec<_> = slots
                .iter_mut()
                .enumerate()
                .filter(|(_, slot)| slot.alive)
                .map(|(id, slot)| scope.spawn(move || (id, op(id, slot))))
                .collect();
            handles
                .into_iter()
                .map(|handle| handle.join().expect("agent task panicked"))
                .collect()
        }),
    }
}

/// Tracks the surviving cohort against the strict-majority floor.
struct Cohort {
    initial: usize,
    last_error: String,
}

impl Cohort {
    fn new(initial: usize) -> Self {
        Cohort {
            initial,
            last_error: String::new(),
        }
    }

    fn alive(&self, slots: &[AgentSlot]) -> usize {
        slots.iter().filter(|s| s.alive).count()
    }

    /// Drop failed agents; error once survivors no longer form a strict
    /// majority of the original population.
    fn check(&mut self, slots: &[AgentSlot]) -> Result<(), EngineError> {
        let survivors = self.alive(slots);
        if 2 * survivors > self.initial {
            Ok(())
        } else {
            Err(EngineError::BackendFatal {
                survivors,
                initial: self.initial,
                last_error: self.last_error.clone(),
            })
        }
    }
}

/// Build the ballot for one formal round from its pool entries.
pub fn ballot_at(snapshot: &Snapshot, phase: Phase, round: u32) -> RoundBallot {
    let votes = snapshot
        .phase_round(phase, round)
        .iter()
        .filter_map(|entry| {
            let output = entry.payload.agent_output()?;
            Some(BallotEntry {
                agent_id: entry.author.agent_id()?,
                answer: output.answer.clone(),
                confidence: output.confidence,
            })
        })
        .collect();
    RoundBallot::new(round, votes)
}

/// Disagreement detection at the post-analysis barrier: every agent
/// evaluates the same gate over the identical snapshot; the results must
/// coincide, and their common value is returned.
pub fn detect_disagreement_barrier(
    snapshot: &Snapshot,
    config: &ProtocolConfig,
) -> Result<bool, EngineError> {
    let ballot = ballot_at(snapshot, Phase::Analysis, 1);
    let per_agent: Vec<bool> = ballot
        .votes
        .iter()
        .map(|_| should_debate(&ballot, config.tau_agree))
        .collect();
    let first = per_agent.first().copied().unwrap_or(false);
    if per_agent.iter().any(|&decision| decision != first) {
        return Err(EngineError::InconsistentDetection);
    }
    Ok(first)
}

/// The context an agent fuses over at round `k`: the full history at k=2,
/// exactly the previous round's outputs after.
pub fn fusion_context(
    pool: &MemoryPool,
    k: u32,
    expected: usize,
) -> Result<Vec<Arc<MemoryEntry>>, EngineError> {
    let snapshot = pool.read_all();
    if k == 2 {
        // Agents lost after analysis (e.g. mid-debate) shrink the cohort
        // without removing their posted round-1 entries, so the history may
        // legitimately hold more analyses than there are survivors.
        let found = snapshot.phase_round(Phase::Analysis, 1).len();
        if found < expected {
            return Err(EngineError::RoundIncomplete {
                round: 1,
                expected,
                found,
            });
        }
        Ok(snapshot.entries().to_vec())
    } else {
        let previous = snapshot.phase_round(Phase::Fusion, k - 1);
        if previous.len() != expected {
            return Err(EngineError::RoundIncomplete {
                round: k - 1,
                expected,
                found: previous.len(),
            });
        }
        Ok(previous)
    }
}

/// Decide the final answer from the last executed round, synthesize the
/// reasoning trace, and append the sealing `Report` entry.
///
/// Consensus at or above the threshold makes the reporter confirmatory;
/// otherwise the confidence-weighted vote decides (plurality under the
/// voting ablation). Trace synthesis uses the given completion backend when
/// one is supplied, falling back to template extraction from the pool.
pub fn report(
    pool: &MemoryPool,
    config: &ProtocolConfig,
    llm: Option<&mut dyn ChatCompletion>,
) -> Result<ReportBody, EngineError> {
    let snapshot = pool.read_all();
    let k_star = snapshot
        .phase(Phase::Fusion)
        .iter()
        .map(|e| e.round)
        .max()
        .unwrap_or(1);
    let phase = if k_star >= 2 {
        Phase::Fusion
    } else {
        Phase::Analysis
    };
    let ballot = ballot_at(&snapshot, phase, k_star);
    if ballot.cohort() == 0 {
        return Err(EngineError::RoundIncomplete {
            round: k_star,
            expected: config.n,
            found: 0,
        });
    }
    let agreement = agreement_level(&ballot);

    let (final_answer, mode) = if agreement >= config.tau_agree {
        let answer = majority_answer(&ballot)
            .expect("agreement >= tau > 0.5 implies a strict majority exists");
        (answer, ResolutionMode::Confirmatory)
    } else {
        let answer = if config.ablation.weighted_voting {
            weighted_vote(&ballot).map(|(winner, _)| winner)
        } else {
            plurality_answer(&ballot)
        }
        .map_err(|_: ConsensusError| EngineError::AllInvalid)?;
        (answer, ResolutionMode::WeightedVote)
    };

    let trace = synthesize_trace(&snapshot, &final_answer, mode, llm);
    let body = ReportBody {
        final_answer,
        mode,
        trace,
    };
    pool.append(
        Payload::Report(body.clone()),
        Author::Reporter,
        Phase::Report,
        k_star,
    )?;
    Ok(body)
}

/// Template-mode trace synthesis, with an optional completion pass layered
/// on top. Highlights role assignments, key debate exchanges, and the final
/// round's representative reasoning.
fn synthesize_trace(
    snapshot: &Snapshot,
    final_answer: &Answer,
    mode: ResolutionMode,
    llm: Option<&mut dyn ChatCompletion>,
) -> String {
    if let Some(completion) = llm {
        if let Some(text) = llm_trace(snapshot, final_answer, completion) {
            return text;
        }
    }

    let mut sections = Vec::new();
    if let Some(question) = snapshot.question() {
        sections.push(format!("Question {}: {}", question.id, question.question));
    }
    let roles: Vec<String> = snapshot
        .phase(Phase::RoleFinal)
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::RoleFinal { role, .. } => Some(format!("{} as {}", e.author, role)),
            _ => None,
        })
        .collect();
    if !roles.is_empty() {
        sections.push(format!("Roles: {}", roles.join("; ")));
    }
    let debate = snapshot.phase(Phase::Debate);
    if debate.is_empty() {
        sections.push("No debate: initial agreement met the threshold.".to_string());
    } else {
        let mut lines = vec![format!("Debate ({} arguments):", debate.len())];
        for entry in debate.iter().take(6) {
            if let Payload::Debate(arg) = &entry.payload {
                let target = arg.target.map(|t| format!(" -> A{t}")).unwrap_or_default();
                lines.push(format!(
                    "  {} {}{}: {}",
                    entry.author, arg.kind, target, arg.argument
                ));
            }
        }
        sections.push(lines.join("\n"));
    }
    let k_star = snapshot
        .phase(Phase::Fusion)
        .iter()
        .map(|e| e.round)
        .max()
        .unwrap_or(1);
    let final_phase = if k_star >= 2 {
        Phase::Fusion
    } else {
        Phase::Analysis
    };
    let mut positions = vec![format!("Final positions (round {k_star}):")];
    for entry in snapshot.phase_round(final_phase, k_star) {
        if let Some(out) = entry.payload.agent_output() {
            positions.push(format!(
                "  {}: {} (confidence {:.2}): {}",
                entry.author,
                out.answer,
                out.confidence.value(),
                excerpt(&out.reasoning, 120)
            ));
        }
    }
    sections.push(positions.join("\n"));
    sections.push(format!("Resolution: {final_answer} via {mode}."));
    sections.join("\n\n")
}

fn llm_trace(
    snapshot: &Snapshot,
    final_answer: &Answer,
    completion: &mut dyn ChatCompletion,
) -> Option<String> {
    let question = snapshot.question()?;
    let bindings = Bindings::new()
        .set("question", question.question.clone())
        .set("options", question.options_block())
        .set("peer_entries", quote_entries(snapshot.entries()))
        .set("final_answer", final_answer.to_string());
    let prompt = TemplateSet::embedded()
        .render(Capability::ReporterTrace, &bindings)
        .ok()?;
    completion.complete(&prompt.system, &prompt.user).ok()
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let line = text.lines().next().unwrap_or("");
    let mut out: String = line.chars().take(max_chars).collect();
    if line.chars().count() > max_chars {
        out.push('…');
    }
    out
}

/// Execute one full protocol run.
pub fn run(question: &QuestionInstance, config: &ProtocolConfig) -> Result<RunResult, EngineError> {
    config.validate().map_err(EngineError::ConfigInvalid)?;
    let mut slots = build_agents(config)?;
    let mut reporter_llm = match &config.backend {
        BackendConfig::Llm(endpoint) => Some(
            LlmClient::new(endpoint.clone())
                .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?,
        ),
        BackendConfig::Scripted(_) => None,
    };
    run_with_agents(
        question,
        config,
        &mut slots,
        reporter_llm
            .as_mut()
            .map(|client| client as &mut dyn ChatCompletion),
    )
}

/// Protocol body over pre-built agents. Exposed so tests can inject
/// instrumented backends.
pub fn run_with_agents(
    question: &QuestionInstance,
    config: &ProtocolConfig,
    slots: &mut [AgentSlot],
    reporter_llm: Option<&mut dyn ChatCompletion>,
) -> Result<RunResult, EngineError> {
    // Entry authorship and scripted self-reference both key off position.
    for (position, slot) in slots.iter().enumerate() {
        if slot.agent.id() != position {
            return Err(EngineError::ConfigInvalid(format!(
                "agent at position {position} reports id {}",
                slot.agent.id()
            )));
        }
    }

    let question = if config.include_contexts {
        question.clone()
    } else {
        let mut stripped = question.clone();
        stripped.contexts.clear();
        stripped
    };

    let pool = MemoryPool::new();
    let mut cohort = Cohort::new(slots.len());
    pool.append(
        Payload::QueryInit(question.clone()),
        Author::System,
        Phase::QueryInit,
        0,
    )?;

    // Phase 1: two-step role assignment, unless ablated away.
    if config.ablation.role_assignment {
        let snapshot = pool.read_all();
        let proposals = map_step(config.scheduler, slots, |_, slot| {
            slot.agent.propose_role(&question, &snapshot)
        });
        for (id, result) in proposals {
            match result {
                Ok(statement) => {
                    pool.append(
                        Payload::RoleProposal {
                            role: statement.role,
                            reasoning: statement.reasoning,
                        },
                        Author::Agent(id),
                        Phase::RoleProposal,
                        0,
                    )?;
                }
                Err(err) => {
                    slots[id].alive = false;
                    cohort.last_error = err.to_string();
                }
            }
        }
        cohort.check(slots)?;

        // Barrier: refinement only starts once every living agent's
        // proposal is on the log.
        let snapshot = pool.read_all();
        let refinements = map_step(config.scheduler, slots, |_, slot| {
            slot.agent.refine_role(&question, &snapshot)
        });
        for (id, result) in refinements {
            match result {
                Ok(statement) => {
                    pool.append(
                        Payload::RoleFinal {
                            role: statement.role.clone(),
                            rationale: statement.reasoning,
                        },
                        Author::Agent(id),
                        Phase::RoleFinal,
                        0,
                    )?;
                    slots[id].role = statement.role;
                }
                Err(err) => {
                    slots[id].alive = false;
                    cohort.last_error = err.to_string();
                }
            }
        }
        cohort.check(slots)?;
    }

    // Phase 2: independent initial analysis (round 1).
    let snapshot = pool.read_all();
    let analyses = map_step(config.scheduler, slots, |_, slot| {
        slot.agent.analyze(&question, &slot.role, &snapshot)
    });
    for (id, result) in analyses {
        match result {
            Ok(output) => {
                pool.append(
                    Payload::Analysis(output),
                    Author::Agent(id),
                    Phase::Analysis,
                    1,
                )?;
            }
            Err(err) => {
                slots[id].alive = false;
                cohort.last_error = err.to_string();
            }
        }
    }
    cohort.check(slots)?;

    let snapshot = pool.read_all();
    let mut agreement_by_round = vec![agreement_level(&ballot_at(&snapshot, Phase::Analysis, 1))];

    // Phase 3: disagreement detection and conditional debate.
    let debate_triggered = detect_disagreement_barrier(&snapshot, config)?;
    if debate_triggered {
        for cycle in 1..=config.t_debate {
            let snapshot = pool.read_all();
            let arguments = map_step(config.scheduler, slots, |_, slot| {
                slot.agent.debate(&question, &slot.role, &snapshot, cycle)
            });
            for (id, result) in arguments {
                match result {
                    Ok(argument) => {
                        pool.append(
                            Payload::Debate(argument),
                            Author::Agent(id),
                            Phase::Debate,
                            cycle,
                        )?;
                    }
                    Err(err) => {
                        slots[id].alive = false;
                        cohort.last_error = err.to_string();
                    }
                }
            }
            cohort.check(slots)?;
        }
    }

    // Phase 4: iterative shared fusion, rounds 2..=K.
    let mut prev_agreement = 0.0;
    let mut k_star = config.k_max;
    for k in 2..=config.k_max {
        let context = fusion_context(&pool, k, cohort.alive(slots))?;
        let outputs = map_step(config.scheduler, slots, |_, slot| {
            slot.agent.fuse(&question, &slot.role, &context, k)
        });
        for (id, result) in outputs {
            match result {
                Ok(output) => {
                    pool.append(Payload::Fusion(output), Author::Agent(id), Phase::Fusion, k)?;
                }
                Err(err) => {
                    slots[id].alive = false;
                    cohort.last_error = err.to_string();
                }
            }
        }
        cohort.check(slots)?;

        let curr_agreement = agreement_level(&ballot_at(&pool.read_all(), Phase::Fusion, k));
        agreement_by_round.push(curr_agreement);
        if stable_termination(prev_agreement, curr_agreement, config.tau_agree) {
            k_star = k;
            break;
        }
        prev_agreement = curr_agreement;
    }

    // Phase 5: the reporter seals the pool.
    let body = report(&pool, config, reporter_llm)?;

    Ok(RunResult {
        question_id: question.id.clone(),
        final_answer: body.final_answer,
        mode: body.mode,
        agreement_by_round,
        debate_triggered,
        rounds_executed: k_star,
        trace_text: body.trace,
        survivors: cohort.alive(slots),
        pool: pool.read_all(),
    })
}
