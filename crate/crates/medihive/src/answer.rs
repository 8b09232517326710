//! Answer labels, answer domains, and the (reasoning, answer, confidence)
//! triple agents emit at analysis and every fusion round.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Reserved label recorded for an agent whose output could not be parsed
/// into its question's answer domain. Counts in tally denominators but can
/// never win a vote.
pub const INVALID_LABEL: &str = "INVALID";

/// An answer label from a question's domain, or the reserved invalid sentinel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Answer {
    /// A normalized label from the answer domain, e.g. `"C"` or `"yes"`.
    Label(String),
    /// Sentinel for unparseable output; never a vote winner.
    Invalid,
}

impl Answer {
    pub fn label(text: impl Into<String>) -> Self {
        Answer::Label(text.into())
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, Answer::Label(_))
    }

    /// The label text, or `None` for the invalid sentinel.
    pub fn as_label(&self) -> Option<&str> {
        match self {
            Answer::Label(text) => Some(text),
            Answer::Invalid => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Label(text) => f.write_str(text),
            Answer::Invalid => f.write_str(INVALID_LABEL),
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        if text == INVALID_LABEL {
            Ok(Answer::Invalid)
        } else {
            Ok(Answer::Label(text))
        }
    }
}

/// The ordered set of labels a question admits: option letters for
/// multiple-choice, or `yes`/`no`/`maybe` for literature questions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerDomain {
    labels: Vec<String>,
}

impl AnswerDomain {
    pub fn new(labels: Vec<String>) -> Self {
        AnswerDomain { labels }
    }

    /// The `yes`/`no`/`maybe` domain.
    pub fn yes_no_maybe() -> Self {
        AnswerDomain::new(vec!["yes".into(), "no".into(), "maybe".into()])
    }

    /// Option-letter domain `A..` of the given size (at most 26).
    pub fn letters(count: usize) -> Self {
        let labels = (0..count)
            .map(|i| ((b'A' + i as u8) as char).to_string())
            .collect();
        AnswerDomain::new(labels)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Map raw model or config text onto a domain label.
    ///
    /// Case-insensitive; strips surrounding punctuation and an `option`/
    /// `answer` prefix, so `"(c)"`, `"Option C."` and `"c"` all normalize to
    /// `"C"`. Returns `None` when nothing in the domain matches.
    pub fn normalize(&self, raw: &str) -> Option<Answer> {
        let cleaned = raw
            .trim()
            .trim_matches(|c: char| "()[]{}.:*\"'`".contains(c))
            .trim();
        let cleaned = cleaned
            .strip_prefix("option ")
            .or_else(|| cleaned.strip_prefix("Option "))
            .or_else(|| cleaned.strip_prefix("OPTION "))
            .unwrap_or(cleaned)
            .trim()
            .trim_matches(|c: char| "()[]{}.:*\"'`".contains(c));
        if cleaned.is_empty() {
            return None;
        }
        self.labels
            .iter()
            .find(|label| label.eq_ignore_ascii_case(cleaned))
            .map(|label| Answer::Label(label.clone()))
    }

    /// First label in domain order that differs from `exclude`.
    pub fn first_other(&self, exclude: &str) -> Option<&str> {
        self.labels
            .iter()
            .map(String::as_str)
            .find(|label| *label != exclude)
    }
}

impl fmt::Display for AnswerDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.labels.join(", "))
    }
}

/// Self-assessed conviction in `[0, 1]`. A heuristic weight, not a
/// calibrated probability.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Confidence(f64);

impl Confidence {
    /// Clamp an arbitrary value into `[0, 1]`; non-finite values become 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_finite() {
            Confidence(value.clamp(0.0, 1.0))
        } else {
            Confidence(0.0)
        }
    }

    pub const ZERO: Confidence = Confidence(0.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Confidence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(D::Error::custom(format!(
                "confidence {value} outside [0, 1]"
            )));
        }
        Ok(Confidence(value))
    }
}

/// One agent's formal position: reasoning trace, answer, and confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub reasoning: String,
    pub answer: Answer,
    pub confidence: Confidence,
}

impl AgentOutput {
    pub fn new(reasoning: impl Into<String>, answer: Answer, confidence: f64) -> Self {
        AgentOutput {
            reasoning: reasoning.into(),
            answer,
            confidence: Confidence::clamped(confidence),
        }
    }

    /// The output recorded when parsing failed past the retry policy.
    pub fn invalid(reasoning: impl Into<String>) -> Self {
        AgentOutput {
            reasoning: reasoning.into(),
            answer: Answer::Invalid,
            confidence: Confidence::ZERO,
        }
    }
}
