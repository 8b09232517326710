//! Structured parsing of model output into agent payloads.
//!
//! The output contract is imposed by the prompt templates: analysis and
//! fusion replies end with `ANSWER:` and `CONFIDENCE:` lines, debate replies
//! lead with `KIND:` (and `TARGET:` for rebuttals). Model text is untrusted;
//! every input either parses into a well-formed value or returns a typed
//! error. Last occurrence wins for the answer lines, because chain-of-thought
//! text routinely mentions "ANSWER" mid-reasoning.

use thiserror::Error;

use crate::answer::{AgentOutput, AnswerDomain};
use crate::memory_pool::{DebateArgument, DebateKind};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("output is missing a required field: {0}")]
    Incomplete(&'static str),
    #[error("answer {0:?} is outside the question's answer domain")]
    AnswerOutOfDomain(String),
    #[error("unknown debate kind {0:?}")]
    UnknownKind(String),
    #[error("unknown rebuttal target {0:?}")]
    UnknownTarget(String),
}

/// Case-insensitive `PREFIX:` match at the start of a trimmed line; returns
/// the text after the colon. Byte-wise so arbitrary UTF-8 can never split a
/// character.
fn field_value<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    let bytes = trimmed.as_bytes();
    if bytes.len() < prefix.len() + 1
        || !bytes[..prefix.len()].eq_ignore_ascii_case(prefix.as_bytes())
        || bytes[prefix.len()] != b':'
    {
        return None;
    }
    Some(trimmed[prefix.len() + 1..].trim())
}

/// Extract `(reasoning, answer, confidence)` from raw model text.
///
/// Everything before the last `ANSWER:` line is the reasoning trace. The
/// answer value is normalized against the domain; the confidence value is
/// clamped into `[0, 1]`.
pub fn parse_agent_output(raw: &str, domain: &AnswerDomain) -> Result<AgentOutput, ParseError> {
    let mut answer_at: Option<(usize, &str)> = None;
    let mut confidence_raw: Option<&str> = None;
    let mut offset = 0;
    for line in raw.split('\n') {
        if let Some(value) = field_value(line, "ANSWER") {
            answer_at = Some((offset, value));
        }
        if let Some(value) = field_value(line, "CONFIDENCE") {
            confidence_raw = Some(value);
        }
        offset += line.len() + 1;
    }

    let (answer_offset, answer_raw) = answer_at.ok_or(ParseError::Incomplete("ANSWER"))?;
    let confidence_raw = confidence_raw.ok_or(ParseError::Incomplete("CONFIDENCE"))?;

    let answer = domain
        .normalize(answer_raw)
        .ok_or_else(|| ParseError::AnswerOutOfDomain(answer_raw.to_string()))?;
    let confidence: f64 = confidence_raw
        .trim_end_matches(|c: char| !c.is_ascii_digit())
        .parse()
        .map_err(|_| ParseError::Incomplete("CONFIDENCE"))?;
    if !confidence.is_finite() {
        return Err(ParseError::Incomplete("CONFIDENCE"));
    }

    let reasoning = raw[..answer_offset].trim().to_string();
    Ok(AgentOutput::new(reasoning, answer, confidence))
}

/// Extract a debate argument: leading `KIND:` line, a `TARGET: A<j>` line
/// for rebuttals, and the remainder as argument text.
pub fn parse_debate_output(raw: &str, peer_ids: &[usize]) -> Result<DebateArgument, ParseError> {
    let mut kind: Option<DebateKind> = None;
    let mut target: Option<usize> = None;
    let mut body_start = 0;

    for line in raw.split('\n') {
        let consumed = body_start + line.len() + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() && kind.is_none() {
            body_start = consumed;
            continue;
        }
        if kind.is_none() {
            let value = field_value(line, "KIND").ok_or(ParseError::Incomplete("KIND"))?;
            kind = Some(match value.to_ascii_lowercase().as_str() {
                "rebuttal" => DebateKind::Rebuttal,
                "defense" => DebateKind::Defense,
                "proposal" => DebateKind::Proposal,
                _ => return Err(ParseError::UnknownKind(value.to_string())),
            });
            body_start = consumed;
            continue;
        }
        if kind == Some(DebateKind::Rebuttal) && target.is_none() {
            let value = field_value(line, "TARGET").ok_or(ParseError::Incomplete("TARGET"))?;
            let id_text = value.trim().trim_start_matches(['A', 'a']);
            let id: usize = id_text
                .parse()
                .map_err(|_| ParseError::UnknownTarget(value.to_string()))?;
            if !peer_ids.contains(&id) {
                return Err(ParseError::UnknownTarget(value.to_string()));
            }
            target = Some(id);
            body_start = consumed;
        }
        break;
    }

    let kind = kind.ok_or(ParseError::Incomplete("KIND"))?;
    if kind == DebateKind::Rebuttal && target.is_none() {
        return Err(ParseError::Incomplete("TARGET"));
    }
    let argument = raw
        .get(body_start.min(raw.len())..)
        .unwrap_or("")
        .trim()
        .to_string();
    Ok(DebateArgument {
        kind,
        target,
        argument,
    })
}

/// Extract a role statement: a `ROLE:` line names the specialty, the rest is
/// the stated grounds. Roles are free text, so parsing stays lenient: without
/// a `ROLE:` line the first non-empty line is taken as the name.
pub fn parse_role_output(raw: &str) -> (String, String) {
    for line in raw.split('\n') {
        if let Some(value) = field_value(line, "ROLE") {
            let rest: String = raw
                .split('\n')
                .filter(|l| field_value(l, "ROLE").is_none())
                .collect::<Vec<_>>()
                .join("\n");
            let rest = rest.trim();
            let rest = ["REASONING", "RATIONALE"]
                .iter()
                .find_map(|p| field_value(rest, p))
                .unwrap_or(rest);
            return (value.to_string(), rest.trim().to_string());
        }
    }
    let mut nonempty = raw.split('\n').filter(|l| !l.trim().is_empty());
    let name = nonempty
        .next()
        .unwrap_or("Medical Expert")
        .trim()
        .to_string();
    let rest = nonempty.collect::<Vec<_>>().join("\n");
    let name = if name.is_empty() {
        "Medical Expert".into()
    } else {
        name
    };
    (name, rest.trim().to_string())
}
