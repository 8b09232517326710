//! Coordinator-free multi-agent consensus engine.
//!
//! N autonomous agents self-assign specialist roles, analyze a
//! multiple-choice or yes/no/maybe question, debate when their initial
//! answers diverge, and iteratively fuse peer insights through a shared
//! append-only memory pool until a stable consensus emerges, or a
//! confidence-weighted vote resolves the question when it does not. Agents
//! are backed either by an OpenAI-compatible chat endpoint or by
//! deterministic scripted behaviors for offline protocol validation.
//!
//! The crate is organized around the protocol's moving parts:
//!
//! - [`memory_pool`]: the shared append-only, timestamped log, the sole
//!   communication medium. Passive by construction; it holds no
//!   coordination logic.
//! - [`agents`]: the five-capability agent abstraction (propose role,
//!   refine role, analyze, debate, fuse) with scripted and LLM backends.
//! - [`llm_backend`]: chat-completion client with bounded retry, prompt
//!   templates, and structured output parsing.
//! - [`consensus`]: pure ballot mathematics: agreement level, debate
//!   gating, stable termination, majority answer, confidence-weighted vote.
//! - [`engine`]: barrier-synchronized protocol execution and the reporter.
//! - [`datasets`]: MedQA / PubMedQA ingestion and accuracy / macro-F1
//!   scoring.
//! - [`bench`](mod@bench): the benchmark harness, one pool per question.
//! - [`trace`]: the line-delimited trace interchange format.
//! - [`config`]: the TOML run-configuration file.

pub mod agents;
pub mod answer;
pub mod bench;
pub mod config;
pub mod consensus;
pub mod datasets;
pub mod engine;
pub mod llm_backend;
pub mod memory_pool;
pub mod question;
pub mod trace;

pub use answer::{AgentOutput, Answer, AnswerDomain, Confidence, INVALID_LABEL};
pub use engine::{ProtocolConfig, RunResult, RunSummary};
pub use memory_pool::{MemoryEntry, MemoryPool, Payload, Phase, ResolutionMode, Snapshot};
pub use question::QuestionInstance;
