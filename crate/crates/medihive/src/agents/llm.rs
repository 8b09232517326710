//! LLM-backed agent: renders a capability prompt, calls the completion
//! backend, and parses the reply into the capability's payload.
//!
//! Parse failures trigger one re-prompt with a stricter format reminder.
//! A second failure records the INVALID answer for formal outputs, or falls
//! back to a Defense quoting the raw reply for debate arguments, so every
//! agent still posts every round.

use std::sync::Arc;

use super::{Agent, AgentError, RoleStatement};
use crate::answer::AgentOutput;
use crate::llm_backend::prompts::{
    quote_entries, reasoning_directive, Bindings, Capability, RenderedPrompt, TemplateSet,
};
use crate::llm_backend::{
    parse_agent_output, parse_debate_output, parse_role_output, ChatCompletion,
};
use crate::memory_pool::{DebateArgument, MemoryEntry, Payload, Phase, Snapshot};
use crate::question::QuestionInstance;

const FORMAT_REMINDER: &str = "\n\nYour previous reply did not follow the required format. \
     Reply again and follow the format contract exactly as stated above.";

pub struct LlmAgent {
    id: usize,
    n: usize,
    cot: bool,
    completion: Box<dyn ChatCompletion>,
    templates: Arc<TemplateSet>,
}

impl LlmAgent {
    pub fn new(
        id: usize,
        n: usize,
        cot: bool,
        completion: Box<dyn ChatCompletion>,
        templates: Arc<TemplateSet>,
    ) -> Self {
        LlmAgent {
            id,
            n,
            cot,
            completion,
            templates,
        }
    }

    fn base_bindings(&self, question: &QuestionInstance, role: &str) -> Bindings {
        Bindings::new()
            .set("question", question_with_contexts(question))
            .set("options", question.options_block())
            .set("answer_domain", question.labels.to_string())
            .set("role", role)
            .set("agent_id", format!("A{}", self.id))
            .set("n", self.n.to_string())
            .set("reasoning_directive", reasoning_directive(self.cot))
    }

    fn render(&self, capability: Capability, bindings: &Bindings) -> RenderedPrompt {
        self.templates
            .render(capability, bindings)
            .expect("template placeholders must all be bound")
    }

    /// Complete, parse, and on failure re-prompt once with a reminder.
    /// Returns the parse result of the final attempt plus its raw text.
    fn complete_with_reparse<T>(
        &mut self,
        prompt: &RenderedPrompt,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(Option<T>, String), AgentError> {
        let raw = self.completion.complete(&prompt.system, &prompt.user)?;
        if let Some(value) = parse(&raw) {
            return Ok((Some(value), raw));
        }
        let retry_user = format!("{}{}", prompt.user, FORMAT_REMINDER);
        let raw = self.completion.complete(&prompt.system, &retry_user)?;
        let parsed = parse(&raw);
        Ok((parsed, raw))
    }
}

/// Question text with the instance's context passages appended, when any.
fn question_with_contexts(question: &QuestionInstance) -> String {
    if question.contexts.is_empty() {
        question.question.clone()
    } else {
        format!(
            "{}\n\nContext:\n{}",
            question.question,
            question.contexts.join("\n\n")
        )
    }
}

/// Entries worth quoting for a capability: everything except the raw query,
/// which is already bound separately.
fn context_entries(snapshot: &Snapshot) -> Vec<Arc<MemoryEntry>> {
    snapshot
        .entries()
        .iter()
        .filter(|e| !matches!(e.payload, Payload::QueryInit(_)))
        .cloned()
        .collect()
}

impl Agent for LlmAgent {
    fn id(&self) -> usize {
        self.id
    }

    fn propose_role(
        &mut self,
        question: &QuestionInstance,
        _snapshot: &Snapshot,
    ) -> Result<RoleStatement, AgentError> {
        let bindings = self
            .base_bindings(question, "unassigned")
            .set("peer_entries", "(none yet)");
        let prompt = self.render(Capability::ProposeRole, &bindings);
        let raw = self.completion.complete(&prompt.system, &prompt.user)?;
        let (role, reasoning) = parse_role_output(&raw);
        Ok(RoleStatement { role, reasoning })
    }

    fn refine_role(
        &mut self,
        question: &QuestionInstance,
        snapshot: &Snapshot,
    ) -> Result<RoleStatement, AgentError> {
        let own_proposal = snapshot
            .phase(Phase::RoleProposal)
            .iter()
            .find(|e| e.author.agent_id() == Some(self.id))
            .and_then(|e| match &e.payload {
                Payload::RoleProposal { role, .. } => Some(role.clone()),
                _ => None,
            })
            .unwrap_or_else(|| "unassigned".to_string());
        let proposals = snapshot.phase(Phase::RoleProposal);
        let bindings = self
            .base_bindings(question, &own_proposal)
            .set("peer_entries", quote_entries(&proposals));
        let prompt = self.render(Capability::RefineRole, &bindings);
        let raw = self.completion.complete(&prompt.system, &prompt.user)?;
        let (role, rationale) = parse_role_output(&raw);
        Ok(RoleStatement {
            role,
            reasoning: rationale,
        })
    }

    fn analyze(
        &mut self,
        question: &QuestionInstance,
        role: &str,
        snapshot: &Snapshot,
    ) -> Result<AgentOutput, AgentError> {
        let bindings = self
            .base_bindings(question, role)
            .set("peer_entries", quote_entries(&context_entries(snapshot)));
        let prompt = self.render(Capability::Analyze, &bindings);
        let domain = question.labels.clone();
        let (parsed, raw) =
            self.complete_with_reparse(&prompt, |raw| parse_agent_output(raw, &domain).ok())?;
        Ok(parsed.unwrap_or_else(|| AgentOutput::invalid(raw)))
    }

    fn debate(
        &mut self,
        question: &QuestionInstance,
        role: &str,
        snapshot: &Snapshot,
        cycle: u32,
    ) -> Result<DebateArgument, AgentError> {
        let bindings = self
            .base_bindings(question, role)
            .set("round", cycle.to_string())
            .set("peer_entries", quote_entries(&context_entries(snapshot)));
        let prompt = self.render(Capability::Debate, &bindings);
        let peers: Vec<usize> = snapshot
            .phase(Phase::Analysis)
            .iter()
            .filter_map(|e| e.author.agent_id())
            .filter(|id| *id != self.id)
            .collect();
        let (parsed, raw) =
            self.complete_with_reparse(&prompt, |raw| parse_debate_output(raw, &peers).ok())?;
        // An unparseable argument degrades to a defense quoting the raw
        // reply, keeping the cycle's entry count intact.
        Ok(parsed.unwrap_or_else(|| DebateArgument::defense(raw)))
    }

    fn fuse(
        &mut self,
        question: &QuestionInstance,
        role: &str,
        context: &[Arc<MemoryEntry>],
        round: u32,
    ) -> Result<AgentOutput, AgentError> {
        let quoted: Vec<Arc<MemoryEntry>> = context
            .iter()
            .filter(|e| !matches!(e.payload, Payload::QueryInit(_)))
            .cloned()
            .collect();
        let bindings = self
            .base_bindings(question, role)
            .set("round", round.to_string())
            .set("peer_entries", quote_entries(&quoted));
        let prompt = self.render(Capability::Fuse, &bindings);
        let domain = question.labels.clone();
        let (parsed, raw) =
            self.complete_with_reparse(&prompt, |raw| parse_agent_output(raw, &domain).ok())?;
        Ok(parsed.unwrap_or_else(|| AgentOutput::invalid(raw)))
    }
}
