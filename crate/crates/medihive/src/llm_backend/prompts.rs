//! Prompt template loading and rendering.
//!
//! One editable text file per capability, with the system text and the user
//! text separated by a `---` line. Templates ship embedded in the binary and
//! can be overridden by a templates directory at startup. Peer content is
//! quoted verbatim from pool entries, so rendered prompts always carry the
//! exact answer labels present in the snapshot they were rendered from.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::memory_pool::{MemoryEntry, Payload};

/// The capabilities a template exists for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Capability {
    ProposeRole,
    RefineRole,
    Analyze,
    Debate,
    Fuse,
    ReporterTrace,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::ProposeRole,
        Capability::RefineRole,
        Capability::Analyze,
        Capability::Debate,
        Capability::Fuse,
        Capability::ReporterTrace,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            Capability::ProposeRole => "propose_role.txt",
            Capability::RefineRole => "refine_role.txt",
            Capability::Analyze => "analyze.txt",
            Capability::Debate => "debate.txt",
            Capability::Fuse => "fuse.txt",
            Capability::ReporterTrace => "reporter_trace.txt",
        }
    }

    fn embedded(&self) -> &'static str {
        match self {
            Capability::ProposeRole => include_str!("../../templates/propose_role.txt"),
            Capability::RefineRole => include_str!("../../templates/refine_role.txt"),
            Capability::Analyze => include_str!("../../templates/analyze.txt"),
            Capability::Debate => include_str!("../../templates/debate.txt"),
            Capability::Fuse => include_str!("../../templates/fuse.txt"),
            Capability::ReporterTrace => include_str!("../../templates/reporter_trace.txt"),
        }
    }
}

/// Placeholder names the renderer binds. Rendering fails if any of these
/// survives in the output.
pub const PLACEHOLDERS: [&str; 9] = [
    "question",
    "options",
    "role",
    "peer_entries",
    "round",
    "answer_domain",
    "agent_id",
    "n",
    "reasoning_directive",
];
const EXTRA_PLACEHOLDERS: [&str; 1] = ["final_answer"];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("failed to read template {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("template for {capability:?} has no `---` system/user separator")]
    MissingSeparator { capability: Capability },
    #[error("rendered prompt still contains placeholder {{{0}}}")]
    UnboundPlaceholder(String),
}

/// A capability's prompt: static system text plus a user text with
/// placeholders.
#[derive(Clone, Debug)]
pub struct PromptTemplate {
    pub capability: Capability,
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    fn parse(capability: Capability, text: &str) -> Result<Self, TemplateError> {
        let mut parts = text.splitn(2, "\n---\n");
        let system = parts.next().unwrap_or("").trim().to_string();
        let user = parts
            .next()
            .ok_or(TemplateError::MissingSeparator { capability })?
            .trim()
            .to_string();
        Ok(PromptTemplate {
            capability,
            system,
            user,
        })
    }
}

/// A rendered prompt, ready for the chat endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

/// The full template set, loaded once at startup.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    templates: BTreeMap<&'static str, PromptTemplate>,
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn embedded() -> Self {
        let templates = Capability::ALL
            .iter()
            .map(|cap| {
                let parsed = PromptTemplate::parse(*cap, cap.embedded())
                    .expect("embedded template malformed");
                (cap.file_name(), parsed)
            })
            .collect();
        TemplateSet { templates }
    }

    /// Load templates from a directory; files not present fall back to the
    /// embedded copies.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::embedded();
        for cap in Capability::ALL {
            let path = dir.join(cap.file_name());
            if path.exists() {
                let text =
                    std::fs::read_to_string(&path).map_err(|source| TemplateError::Read {
                        path: path.display().to_string(),
                        source,
                    })?;
                set.templates
                    .insert(cap.file_name(), PromptTemplate::parse(cap, &text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, capability: Capability) -> &PromptTemplate {
        &self.templates[capability.file_name()]
    }

    /// Render a capability's template with the given bindings. Both system
    /// and user text are substituted; any placeholder left unbound is an
    /// error.
    pub fn render(
        &self,
        capability: Capability,
        bindings: &Bindings,
    ) -> Result<RenderedPrompt, TemplateError> {
        let template = self.get(capability);
        Ok(RenderedPrompt {
            system: substitute(&template.system, bindings)?,
            user: substitute(&template.user, bindings)?,
        })
    }
}

/// Placeholder bindings for one render.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    values: BTreeMap<&'static str, String>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn set(mut self, key: &'static str, value: impl Into<String>) -> Self {
        self.values.insert(key, value.into());
        self
    }
}

fn substitute(text: &str, bindings: &Bindings) -> Result<String, TemplateError> {
    let mut out = text.to_string();
    for (key, value) in &bindings.values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    for name in PLACEHOLDERS.iter().chain(EXTRA_PLACEHOLDERS.iter()) {
        if out.contains(&format!("{{{name}}}")) {
            return Err(TemplateError::UnboundPlaceholder(name.to_string()));
        }
    }
    Ok(out)
}

/// Quote pool entries verbatim for inclusion in a prompt. Each entry keeps
/// its author, phase, round, and for formal outputs the exact answer label
/// and confidence it carries.
pub fn quote_entries(entries: &[Arc<MemoryEntry>]) -> String {
    if entries.is_empty() {
        return "(none yet)".to_string();
    }
    entries
        .iter()
        .map(|entry| {
            let header = format!("[{} | {} round {}]", entry.author, entry.phase, entry.round);
            let body = match &entry.payload {
                Payload::QueryInit(q) => format!("question: {}", q.question),
                Payload::RoleProposal { role, reasoning } => {
                    format!("proposed role: {role}\n{reasoning}")
                }
                Payload::RoleFinal { role, rationale } => {
                    format!("final role: {role}\n{rationale}")
                }
                Payload::Analysis(out) | Payload::Fusion(out) => format!(
                    "ANSWER: {} (confidence {:.2})\n{}",
                    out.answer,
                    out.confidence.value(),
                    out.reasoning
                ),
                Payload::Debate(arg) => {
                    let target = arg.target.map(|t| format!(" -> A{t}")).unwrap_or_default();
                    format!("{}{}: {}", arg.kind, target, arg.argument)
                }
                Payload::Report(report) => format!(
                    "final answer {} ({})\n{}",
                    report.final_answer, report.mode, report.trace
                ),
            };
            format!("{header}\n{body}")
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Directive text controlled by the chain-of-thought ablation flag.
pub fn reasoning_directive(cot: bool) -> &'static str {
    if cot {
        "Reason step by step through the differential before committing to an answer."
    } else {
        "State your conclusion directly, without step-by-step reasoning."
    }
}
