//! The agent abstraction: five capability operations (propose role, refine
//! role, analyze, debate, fuse), plus deterministic scripted backends for
//! offline protocol testing and an LLM-backed implementation.
//!
//! Capability calls are side-effect-free given a snapshot: agents return
//! payloads and the engine appends them, so the engine may invoke one step's
//! agents concurrently without perturbing the pool.

mod llm;
mod scripted;

pub use llm::LlmAgent;
pub use scripted::{mix_seed, ScriptedAgent, ScriptedBehavior, ScriptedBehaviorKind};

use thiserror::Error;

use crate::answer::AgentOutput;
use crate::llm_backend::LlmError;
use crate::memory_pool::{DebateArgument, MemoryEntry, Snapshot};
use crate::question::QuestionInstance;

/// Role adopted by every agent when self-evolving role assignment is
/// disabled.
pub const DEFAULT_ROLE: &str = "Medical Expert";

#[derive(Debug, Error)]
pub enum AgentError {
    /// The backend failed permanently (retries exhausted, fatal transport
    /// error, or an injected scripted fault). The engine drops the agent.
    #[error("agent backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("scripted fault injected at round {round}")]
    ScriptedFault { round: u32 },
}

/// A role proposal or refinement: the specialty text plus the agent's
/// stated grounds for it.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleStatement {
    pub role: String,
    pub reasoning: String,
}

/// One autonomous reasoning unit. Implementations must be deterministic
/// functions of `(own state, arguments)`; any randomness comes from a
/// per-agent stream seeded at construction.
pub trait Agent: Send {
    fn id(&self) -> usize;

    /// Independent role proposal from the bare question.
    fn propose_role(
        &mut self,
        question: &QuestionInstance,
        snapshot: &Snapshot,
    ) -> Result<RoleStatement, AgentError>;

    /// Peer-aware refinement after all proposals are posted.
    fn refine_role(
        &mut self,
        question: &QuestionInstance,
        snapshot: &Snapshot,
    ) -> Result<RoleStatement, AgentError>;

    /// Initial analysis (round 1): reasoning trace, answer, confidence.
    fn analyze(
        &mut self,
        question: &QuestionInstance,
        role: &str,
        snapshot: &Snapshot,
    ) -> Result<AgentOutput, AgentError>;

    /// One structured debate argument. Does not update the agent's formal
    /// answer or confidence.
    fn debate(
        &mut self,
        question: &QuestionInstance,
        role: &str,
        snapshot: &Snapshot,
        cycle: u32,
    ) -> Result<DebateArgument, AgentError>;

    /// Fusion round `k >= 2`: revise the formal position given the round's
    /// context (full history at k=2, the previous round's outputs after).
    fn fuse(
        &mut self,
        question: &QuestionInstance,
        role: &str,
        context: &[std::sync::Arc<MemoryEntry>],
        round: u32,
    ) -> Result<AgentOutput, AgentError>;
}
