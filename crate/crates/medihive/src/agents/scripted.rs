//! Deterministic scripted agents: canned behaviors with per-agent RNG
//! streams, used to exercise protocol properties offline.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, RoleStatement};
use crate::answer::{AgentOutput, Answer};
use crate::consensus::{plurality_answer, BallotEntry, RoundBallot};
use crate::memory_pool::{DebateArgument, MemoryEntry, Phase, Snapshot};
use crate::question::QuestionInstance;

/// Default self-assessed confidence when a behavior does not set one.
pub const DEFAULT_CONFIDENCE: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedBehaviorKind {
    /// Answers a fixed label every round.
    FixedAnswer,
    /// Adopts the previous round's plurality answer with probability `s`.
    MajorityConverging,
    /// Keeps its initial answer and only ever defends it.
    Stubborn,
    /// Draws gold with probability `p` at analysis, then never changes.
    OracleBiased,
}

/// Configuration for one scripted agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    pub behavior: ScriptedBehaviorKind,
    /// Fixed answer label (FixedAnswer, MajorityConverging, Stubborn).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Switch-to-majority probability (MajorityConverging).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_probability: Option<f64>,
    /// Per-question correctness probability (OracleBiased).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_probability: Option<f64>,
    /// Fixed confidence; defaults to 0.7.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Optional per-round confidence schedule, indexed by round 1..;
    /// rounds past the end reuse the last value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_schedule: Option<Vec<f64>>,
    /// Fault injection: fail permanently once a capability call's round
    /// index reaches this value (analysis is round 1; debate cycles count
    /// as rounds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_at_round: Option<u32>,
}

impl ScriptedBehavior {
    pub fn fixed(answer: &str, confidence: f64) -> Self {
        ScriptedBehavior {
            behavior: ScriptedBehaviorKind::FixedAnswer,
            answer: Some(answer.to_string()),
            switch_probability: None,
            correctness_probability: None,
            confidence: Some(confidence),
            confidence_schedule: None,
            fail_at_round: None,
        }
    }

    pub fn converging(initial_answer: &str, switch_probability: f64, confidence: f64) -> Self {
        ScriptedBehavior {
            behavior: ScriptedBehaviorKind::MajorityConverging,
            answer: Some(initial_answer.to_string()),
            switch_probability: Some(switch_probability),
            correctness_probability: None,
            confidence: Some(confidence),
            confidence_schedule: None,
            fail_at_round: None,
        }
    }

    pub fn stubborn(answer: &str, confidence: f64) -> Self {
        ScriptedBehavior {
            behavior: ScriptedBehaviorKind::Stubborn,
            answer: Some(answer.to_string()),
            switch_probability: None,
            correctness_probability: None,
            confidence: Some(confidence),
            confidence_schedule: None,
            fail_at_round: None,
        }
    }

    pub fn oracle_biased(correctness_probability: f64, confidence: f64) -> Self {
        ScriptedBehavior {
            behavior: ScriptedBehaviorKind::OracleBiased,
            answer: None,
            switch_probability: None,
            correctness_probability: Some(correctness_probability),
            confidence: Some(confidence),
            confidence_schedule: None,
            fail_at_round: None,
        }
    }

    pub fn with_fail_at_round(mut self, round: u32) -> Self {
        self.fail_at_round = Some(round);
        self
    }
}

/// Deterministic agent driven by a [`ScriptedBehavior`]. Identical
/// `(run seed, agent id, behavior)` triples produce identical traces.
pub struct ScriptedAgent {
    id: usize,
    behavior: ScriptedBehavior,
    rng: ChaCha8Rng,
    /// The answer this agent last posted; `None` before analysis.
    current_answer: Option<Answer>,
}

/// SplitMix64 step, used to derive per-agent streams from the run seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl ScriptedAgent {
    pub fn new(id: usize, behavior: ScriptedBehavior, run_seed: u64) -> Self {
        ScriptedAgent {
            id,
            behavior,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(run_seed, id as u64 + 1)),
            current_answer: None,
        }
    }

    fn confidence_for_round(&self, round: u32) -> f64 {
        if let Some(schedule) = &self.behavior.confidence_schedule {
            if !schedule.is_empty() {
                let idx = (round.max(1) as usize - 1).min(schedule.len() - 1);
                return schedule[idx];
            }
        }
        self.behavior.confidence.unwrap_or(DEFAULT_CONFIDENCE)
    }

    /// Resolve the configured answer against the question's domain;
    /// anything out of domain records as INVALID per the parse-failure
    /// policy.
    fn configured_answer(&self, question: &QuestionInstance) -> Answer {
        match &self.behavior.answer {
            Some(label) => question.labels.normalize(label).unwrap_or(Answer::Invalid),
            None => Answer::Invalid,
        }
    }

    fn initial_answer(&mut self, question: &QuestionInstance) -> Answer {
        match self.behavior.behavior {
            ScriptedBehaviorKind::OracleBiased => {
                let p = self.behavior.correctness_probability.unwrap_or(1.0);
                match &question.gold {
                    Some(gold) if self.rng.gen_bool(p.clamp(0.0, 1.0)) => gold.clone(),
                    Some(gold) => {
                        // All oracle-biased agents miss onto the same
                        // distractor: the first non-gold label in domain
                        // order.
                        gold.as_label()
                            .and_then(|g| question.labels.first_other(g))
                            .map(Answer::label)
                            .unwrap_or(Answer::Invalid)
                    }
                    None => {
                        let labels = question.labels.labels();
                        if labels.is_empty() {
                            Answer::Invalid
                        } else {
                            Answer::label(labels[self.rng.gen_range(0..labels.len())].clone())
                        }
                    }
                }
            }
            _ => self.configured_answer(question),
        }
    }

    fn check_fault(&self, round: u32) -> Result<(), AgentError> {
        if let Some(fail_round) = self.behavior.fail_at_round {
            if round >= fail_round {
                return Err(AgentError::ScriptedFault { round });
            }
        }
        Ok(())
    }
}

/// Extract the latest formal ballot (analysis or a fusion round) visible in
/// a snapshot. Used by scripted agents to locate the plurality.
fn latest_ballot(snapshot: &Snapshot) -> Option<RoundBallot> {
    let formal: Vec<&Arc<MemoryEntry>> = snapshot
        .entries()
        .iter()
        .filter(|e| matches!(e.phase, Phase::Analysis | Phase::Fusion))
        .collect();
    let last = formal.last()?;
    let (phase, round) = (last.phase, last.round);
    let votes = formal
        .iter()
        .filter(|e| e.phase == phase && e.round == round)
        .filter_map(|e| {
            let out = e.payload.agent_output()?;
            Some(BallotEntry {
                agent_id: e.author.agent_id()?,
                answer: out.answer.clone(),
                confidence: out.confidence,
            })
        })
        .collect();
    Some(RoundBallot::new(round, votes))
}

fn ballot_from_context(context: &[Arc<MemoryEntry>]) -> Option<RoundBallot> {
    let snapshot = Snapshot::from_entries(context.to_vec());
    latest_ballot(&snapshot)
}

impl Agent for ScriptedAgent {
    fn id(&self) -> usize {
        self.id
    }

    fn propose_role(
        &mut self,
        _question: &QuestionInstance,
        _snapshot: &Snapshot,
    ) -> Result<RoleStatement, AgentError> {
        Ok(RoleStatement {
            role: format!("Generalist-{}", self.id),
            reasoning: "scripted generalist proposal".into(),
        })
    }

    fn refine_role(
        &mut self,
        _question: &QuestionInstance,
        _snapshot: &Snapshot,
    ) -> Result<RoleStatement, AgentError> {
        // Identity refinement: scripted agents keep their proposed role.
        Ok(RoleStatement {
            role: format!("Generalist-{}", self.id),
            reasoning: "scripted identity refinement".into(),
        })
    }

    fn analyze(
        &mut self,
        question: &QuestionInstance,
        _role: &str,
        _snapshot: &Snapshot,
    ) -> Result<AgentOutput, AgentError> {
        self.check_fault(1)?;
        let answer = self.initial_answer(question);
        self.current_answer = Some(answer.clone());
        Ok(AgentOutput::new(
            format!("scripted analysis by A{}", self.id),
            answer,
            self.confidence_for_round(1),
        ))
    }

    fn debate(
        &mut self,
        _question: &QuestionInstance,
        _role: &str,
        snapshot: &Snapshot,
        cycle: u32,
    ) -> Result<DebateArgument, AgentError> {
        self.check_fault(cycle)?;
        let own = self.current_answer.clone().unwrap_or(Answer::Invalid);
        let ballot = latest_ballot(snapshot);
        let plurality = ballot.as_ref().and_then(|b| plurality_answer(b).ok());

        match self.behavior.behavior {
            ScriptedBehaviorKind::Stubborn => Ok(DebateArgument::defense(format!(
                "A{} stands by {}",
                self.id, own
            ))),
            ScriptedBehaviorKind::MajorityConverging => match &plurality {
                Some(p) if *p != own => Ok(DebateArgument::proposal(format!(
                    "A{} proposes converging on {}",
                    self.id, p
                ))),
                _ => Ok(DebateArgument::defense(format!(
                    "A{} holds the plurality position {}",
                    self.id, own
                ))),
            },
            ScriptedBehaviorKind::FixedAnswer | ScriptedBehaviorKind::OracleBiased => {
                let in_plurality = plurality.as_ref() == Some(&own) && own.is_valid();
                let dissenter = ballot.as_ref().and_then(|b| {
                    b.votes
                        .iter()
                        .filter(|v| v.agent_id != self.id && v.answer != own)
                        .map(|v| v.agent_id)
                        .min()
                });
                match (in_plurality, dissenter) {
                    (true, Some(target)) => Ok(DebateArgument::rebuttal(
                        target,
                        format!(
                            "A{} challenges A{target}: the evidence favors {own}",
                            self.id
                        ),
                    )),
                    _ => Ok(DebateArgument::defense(format!(
                        "A{} restates {}",
                        self.id, own
                    ))),
                }
            }
        }
    }

    fn fuse(
        &mut self,
        question: &QuestionInstance,
        _role: &str,
        context: &[Arc<MemoryEntry>],
        round: u32,
    ) -> Result<AgentOutput, AgentError> {
        self.check_fault(round)?;
        let previous = self
            .current_answer
            .clone()
            .unwrap_or_else(|| self.configured_answer(question));
        let answer = match self.behavior.behavior {
            ScriptedBehaviorKind::MajorityConverging => {
                let s = self.behavior.switch_probability.unwrap_or(1.0);
                let plurality =
                    ballot_from_context(context).and_then(|b| plurality_answer(&b).ok());
                match plurality {
                    Some(p) if self.rng.gen_bool(s.clamp(0.0, 1.0)) => p,
                    _ => previous,
                }
            }
            _ => previous,
        };
        self.current_answer = Some(answer.clone());
        Ok(AgentOutput::new(
            format!("scripted fusion by A{} at round {round}", self.id),
            answer,
            self.confidence_for_round(round),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::AnswerDomain;
    use crate::memory_pool::{Author, MemoryPool, Payload, Phase};

    fn question() -> QuestionInstance {
        QuestionInstance::new("q", "pick one", AnswerDomain::letters(4))
            .with_gold(Answer::label("C"))
    }

    fn analysis_pool(answers: &[&str]) -> MemoryPool {
        let pool = MemoryPool::new();
        pool.append(
            Payload::QueryInit(question()),
            Author::System,
            Phase::QueryInit,
            0,
        )
        .unwrap();
        for (id, label) in answers.iter().enumerate() {
            pool.append(
                Payload::Analysis(AgentOutput::new("r", Answer::label(*label), 0.7)),
                Author::Agent(id),
                Phase::Analysis,
                1,
            )
            .unwrap();
        }
        pool
    }

    #[test]
    fn fixed_answer_is_constant_across_rounds() {
        let mut agent = ScriptedAgent::new(0, ScriptedBehavior::fixed("B", 0.7), 1);
        let q = question();
        let snap = Snapshot::default();
        let first = agent.analyze(&q, "r", &snap).unwrap();
        assert_eq!(first.answer, Answer::label("B"));
        assert_eq!(first.confidence.value(), 0.7);
        for round in 2..6 {
            let fused = agent.fuse(&q, "r", &[], round).unwrap();
            assert_eq!(fused.answer, Answer::label("B"));
            assert_eq!(fused.confidence.value(), 0.7);
        }
    }

    #[test]
    fn converging_agent_adopts_previous_plurality() {
        let pool = analysis_pool(&["C", "C", "C", "B", "A"]);
        let context = pool.read_phase_round(Phase::Analysis, 1);
        let mut agent = ScriptedAgent::new(4, ScriptedBehavior::converging("A", 1.0, 0.7), 1);
        agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        let fused = agent.fuse(&question(), "r", &context, 2).unwrap();
        assert_eq!(fused.answer, Answer::label("C"));
    }

    #[test]
    fn converging_with_zero_switch_keeps_its_answer() {
        let pool = analysis_pool(&["C", "C", "C", "B", "A"]);
        let context = pool.read_phase_round(Phase::Analysis, 1);
        let mut agent = ScriptedAgent::new(4, ScriptedBehavior::converging("A", 0.0, 0.7), 1);
        agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        let fused = agent.fuse(&question(), "r", &context, 2).unwrap();
        assert_eq!(fused.answer, Answer::label("A"));
    }

    #[test]
    fn oracle_biased_certain_agent_answers_gold() {
        let mut agent = ScriptedAgent::new(2, ScriptedBehavior::oracle_biased(1.0, 0.9), 7);
        let out = agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        assert_eq!(out.answer, Answer::label("C"));
        assert_eq!(out.confidence.value(), 0.9);
    }

    #[test]
    fn oracle_biased_miss_hits_the_common_distractor() {
        let mut agent = ScriptedAgent::new(0, ScriptedBehavior::oracle_biased(0.0, 0.7), 3);
        let out = agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        // Gold is C, so the shared distractor is A.
        assert_eq!(out.answer, Answer::label("A"));
    }

    #[test]
    fn stubborn_agent_defends() {
        let pool = analysis_pool(&["C", "C", "C", "B", "A"]);
        let mut agent = ScriptedAgent::new(3, ScriptedBehavior::stubborn("B", 0.7), 1);
        agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        let arg = agent.debate(&question(), "r", &pool.read_all(), 1).unwrap();
        assert_eq!(arg.kind, crate::memory_pool::DebateKind::Defense);
        assert!(arg.argument.contains('B'));
    }

    #[test]
    fn minority_converging_agent_proposes_the_plurality() {
        let pool = analysis_pool(&["C", "C", "C", "B", "A"]);
        let mut agent = ScriptedAgent::new(4, ScriptedBehavior::converging("A", 1.0, 0.7), 1);
        agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        let arg = agent.debate(&question(), "r", &pool.read_all(), 1).unwrap();
        assert_eq!(arg.kind, crate::memory_pool::DebateKind::Proposal);
        assert!(arg.argument.contains('C'));
    }

    #[test]
    fn plurality_fixed_agent_rebuts_lowest_id_dissenter() {
        let pool = analysis_pool(&["C", "C", "C", "B", "A"]);
        let mut agent = ScriptedAgent::new(1, ScriptedBehavior::fixed("C", 0.7), 1);
        agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        let arg = agent.debate(&question(), "r", &pool.read_all(), 1).unwrap();
        assert_eq!(arg.kind, crate::memory_pool::DebateKind::Rebuttal);
        assert_eq!(arg.target, Some(3));
    }

    #[test]
    fn out_of_domain_configured_answer_records_invalid() {
        let mut agent = ScriptedAgent::new(0, ScriptedBehavior::fixed("Z", 0.7), 1);
        let out = agent
            .analyze(&question(), "r", &Snapshot::default())
            .unwrap();
        assert_eq!(out.answer, Answer::Invalid);
    }

    #[test]
    fn confidence_schedule_indexes_by_round() {
        let mut behavior = ScriptedBehavior::fixed("C", 0.5);
        behavior.confidence_schedule = Some(vec![0.4, 0.6, 0.8]);
        let mut agent = ScriptedAgent::new(0, behavior, 1);
        let q = question();
        assert_eq!(
            agent
                .analyze(&q, "r", &Snapshot::default())
                .unwrap()
                .confidence
                .value(),
            0.4
        );
        assert_eq!(agent.fuse(&q, "r", &[], 2).unwrap().confidence.value(), 0.6);
        assert_eq!(agent.fuse(&q, "r", &[], 3).unwrap().confidence.value(), 0.8);
        // Past the end of the schedule, the last value holds.
        assert_eq!(agent.fuse(&q, "r", &[], 9).unwrap().confidence.value(), 0.8);
    }

    #[test]
    fn identical_seeds_replay_identically() {
        for _ in 0..3 {
            let mut a = ScriptedAgent::new(1, ScriptedBehavior::oracle_biased(0.5, 0.7), 99);
            let mut b = ScriptedAgent::new(1, ScriptedBehavior::oracle_biased(0.5, 0.7), 99);
            let q = question();
            let snap = Snapshot::default();
            assert_eq!(
                a.analyze(&q, "r", &snap).unwrap(),
                b.analyze(&q, "r", &snap).unwrap()
            );
        }
    }

    #[test]
    fn fault_injection_fires_at_the_configured_round() {
        let behavior = ScriptedBehavior::fixed("C", 0.7).with_fail_at_round(2);
        let mut agent = ScriptedAgent::new(0, behavior, 1);
        let q = question();
        assert!(agent.analyze(&q, "r", &Snapshot::default()).is_ok());
        assert!(matches!(
            agent.fuse(&q, "r", &[], 2),
            Err(AgentError::ScriptedFault { round: 2 })
        ));
    }
}
