//! The shared memory pool: a passive, append-only, totally ordered,
//! timestamped log of typed entries.
//!
//! The pool performs no coordination logic. Appends are serialized through a
//! single total-order point that assigns contiguous sequence numbers; reads
//! are snapshot views unaffected by later appends. A `Report` entry seals the
//! pool; reruns create new pools.

use std::fmt;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::AgentOutput;
use crate::question::QuestionInstance;

/// Who wrote an entry: a numbered agent, or one of the two distinguished
/// non-agent authors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Author {
    System,
    Agent(usize),
    Reporter,
}

impl Author {
    pub fn agent_id(&self) -> Option<usize> {
        match self {
            Author::Agent(id) => Some(*id),
            _ => None,
        }
    }
}

impl fmt::Display for Author {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Author::System => f.write_str("system"),
            Author::Agent(id) => write!(f, "A{id}"),
            Author::Reporter => f.write_str("reporter"),
        }
    }
}

impl Serialize for Author {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Author {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        match text.as_str() {
            "system" => Ok(Author::System),
            "reporter" => Ok(Author::Reporter),
            other => other
                .strip_prefix('A')
                .and_then(|id| id.parse::<usize>().ok())
                .map(Author::Agent)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown author {other:?}"))),
        }
    }
}

/// Protocol phase an entry belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    QueryInit,
    RoleProposal,
    RoleFinal,
    Analysis,
    Debate,
    Fusion,
    Report,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::QueryInit,
        Phase::RoleProposal,
        Phase::RoleFinal,
        Phase::Analysis,
        Phase::Debate,
        Phase::Fusion,
        Phase::Report,
    ];
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown phase {s:?}"))
    }
}

/// Form a debate argument takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DebateKind {
    Rebuttal,
    Defense,
    Proposal,
}

impl fmt::Display for DebateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One structured debate argument. `target` is required for rebuttals and
/// absent otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebateArgument {
    pub kind: DebateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    pub argument: String,
}

impl DebateArgument {
    pub fn rebuttal(target: usize, argument: impl Into<String>) -> Self {
        DebateArgument {
            kind: DebateKind::Rebuttal,
            target: Some(target),
            argument: argument.into(),
        }
    }

    pub fn defense(argument: impl Into<String>) -> Self {
        DebateArgument {
            kind: DebateKind::Defense,
            target: None,
            argument: argument.into(),
        }
    }

    pub fn proposal(argument: impl Into<String>) -> Self {
        DebateArgument {
            kind: DebateKind::Proposal,
            target: None,
            argument: argument.into(),
        }
    }
}

/// How the final answer was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolutionMode {
    /// Stable supermajority emerged; the reporter only confirms it.
    Confirmatory,
    /// Round limit was reached without consensus; the fallback vote decided.
    WeightedVote,
}

impl fmt::Display for ResolutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// The reporter's final entry, which seals the pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub final_answer: crate::answer::Answer,
    pub mode: ResolutionMode,
    pub trace: String,
}

/// Phase-specific entry body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    QueryInit(QuestionInstance),
    RoleProposal { role: String, reasoning: String },
    RoleFinal { role: String, rationale: String },
    Analysis(AgentOutput),
    Debate(DebateArgument),
    Fusion(AgentOutput),
    Report(ReportBody),
}

impl Payload {
    /// The unique phase this payload is admissible in.
    pub fn phase(&self) -> Phase {
        match self {
            Payload::QueryInit(_) => Phase::QueryInit,
            Payload::RoleProposal { .. } => Phase::RoleProposal,
            Payload::RoleFinal { .. } => Phase::RoleFinal,
            Payload::Analysis(_) => Phase::Analysis,
            Payload::Debate(_) => Phase::Debate,
            Payload::Fusion(_) => Phase::Fusion,
            Payload::Report(_) => Phase::Report,
        }
    }

    /// The agent output carried by an `Analysis` or `Fusion` payload.
    pub fn agent_output(&self) -> Option<&AgentOutput> {
        match self {
            Payload::Analysis(out) | Payload::Fusion(out) => Some(out),
            _ => None,
        }
    }
}

/// One immutable record in the pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    /// Unique, contiguous from 0, strictly increasing in append order. The
    /// authoritative order; timestamps are informational.
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub author: Author,
    pub phase: Phase,
    /// Round index: 0 for pre-analysis phases, 1 for initial analysis,
    /// the fusion round k for fusion entries, the debate cycle t for
    /// debate entries.
    pub round: u32,
    pub payload: Payload,
}

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error("pool is sealed by a Report entry; reruns create new pools")]
    AppendAfterReport,
    #[error("payload does not fit phase {phase}: {reason}")]
    PhasePayloadMismatch { phase: Phase, reason: String },
}

fn validate(payload: &Payload, author: Author, phase: Phase) -> Result<(), PoolError> {
    if payload.phase() != phase {
        return Err(PoolError::PhasePayloadMismatch {
            phase,
            reason: format!("got a {} payload", payload.phase()),
        });
    }
    if let Payload::Debate(arg) = payload {
        match (arg.kind, arg.target) {
            (DebateKind::Rebuttal, None) => {
                return Err(PoolError::PhasePayloadMismatch {
                    phase,
                    reason: "rebuttal without a target agent".into(),
                });
            }
            (DebateKind::Rebuttal, Some(target)) if Some(target) == author.agent_id() => {
                return Err(PoolError::PhasePayloadMismatch {
                    phase,
                    reason: "rebuttal targets its own author".into(),
                });
            }
            (DebateKind::Defense | DebateKind::Proposal, Some(_)) => {
                return Err(PoolError::PhasePayloadMismatch {
                    phase,
                    reason: format!("{} carries a target", arg.kind),
                });
            }
            _ => {}
        }
    }
    Ok(())
}

/// The shared append-only log. Safe for concurrent use by the agent tasks of
/// one run; all appends funnel through one lock that assigns `seq`.
#[derive(Debug, Default)]
pub struct MemoryPool {
    entries: RwLock<Vec<Arc<MemoryEntry>>>,
}

impl MemoryPool {
    pub fn new() -> Self {
        MemoryPool::default()
    }

    /// Append an entry, assigning the next sequence number.
    pub fn append(
        &self,
        payload: Payload,
        author: Author,
        phase: Phase,
        round: u32,
    ) -> Result<u64, PoolError> {
        validate(&payload, author, phase)?;
        let mut entries = self.entries.write().expect("pool lock poisoned");
        if matches!(entries.last(), Some(last) if last.phase == Phase::Report) {
            return Err(PoolError::AppendAfterReport);
        }
        let seq = entries.len() as u64;
        entries.push(Arc::new(MemoryEntry {
            seq,
            timestamp: Utc::now(),
            author,
            phase,
            round,
            payload,
        }));
        Ok(seq)
    }

    /// Stable snapshot of every entry, in seq order.
    pub fn read_all(&self) -> Snapshot {
        let entries = self.entries.read().expect("pool lock poisoned");
        Snapshot {
            entries: entries.clone(),
        }
    }

    /// Entries matching `(phase, round)`, seq order preserved.
    pub fn read_phase_round(&self, phase: Phase, round: u32) -> Vec<Arc<MemoryEntry>> {
        self.read_all().phase_round(phase, round)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("pool lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_sealed(&self) -> bool {
        let entries = self.entries.read().expect("pool lock poisoned");
        matches!(entries.last(), Some(last) if last.phase == Phase::Report)
    }
}

/// An immutable point-in-time view of the pool. Cheap to clone; entries are
/// shared, not copied.
#[derive(Clone, Debug, Default)]
pub struct Snapshot {
    entries: Vec<Arc<MemoryEntry>>,
}

impl Snapshot {
    pub fn from_entries(entries: Vec<Arc<MemoryEntry>>) -> Self {
        Snapshot { entries }
    }

    pub fn entries(&self) -> &[Arc<MemoryEntry>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phase_round(&self, phase: Phase, round: u32) -> Vec<Arc<MemoryEntry>> {
        self.entries
            .iter()
            .filter(|e| e.phase == phase && e.round == round)
            .cloned()
            .collect()
    }

    pub fn phase(&self, phase: Phase) -> Vec<Arc<MemoryEntry>> {
        self.entries
            .iter()
            .filter(|e| e.phase == phase)
            .cloned()
            .collect()
    }

    /// The question posted at seq 0, if present.
    pub fn question(&self) -> Option<&QuestionInstance> {
        self.entries.iter().find_map(|e| match &e.payload {
            Payload::QueryInit(q) => Some(q),
            _ => None,
        })
    }
}
