//! The normalized task a run operates on: question text, answer domain,
//! optional context passages, optional gold label.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::answer::{Answer, AnswerDomain};

/// A single question instance, normalized from whichever dataset it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub id: String,
    pub question: String,
    /// Ordered answer domain.
    pub labels: AnswerDomain,
    /// Label -> option text, for multiple-choice questions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, String>,
    /// Context passages supplied by the dataset instance (e.g. an abstract).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contexts: Vec<String>,
    /// Gold answer, when the record carries one. Scoring skips questions
    /// without it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Answer>,
}

impl QuestionInstance {
    pub fn new(id: impl Into<String>, question: impl Into<String>, labels: AnswerDomain) -> Self {
        QuestionInstance {
            id: id.into(),
            question: question.into(),
            labels,
            options: BTreeMap::new(),
            contexts: Vec::new(),
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: Answer) -> Self {
        self.gold = Some(gold);
        self
    }

    pub fn with_options(mut self, options: BTreeMap<String, String>) -> Self {
        self.options = options;
        self
    }

    pub fn with_contexts(mut self, contexts: Vec<String>) -> Self {
        self.contexts = contexts;
        self
    }

    /// Render the option list as prompt-ready lines, one `(label) text` per
    /// option, or a plain statement of the admissible labels when the
    /// question has no option texts.
    pub fn options_block(&self) -> String {
        if self.options.is_empty() {
            format!("Answer with one of: {}", self.labels)
        } else {
            let mut lines = vec!["Options:".to_string()];
            for label in self.labels.labels() {
                if let Some(text) = self.options.get(label) {
                    lines.push(format!("({label}) {text}"));
                }
            }
            lines.join("\n")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_round_trip_preserves_all_fields() {
        let mut options = BTreeMap::new();
        options.insert("A".to_string(), "Appendicitis".to_string());
        options.insert("B".to_string(), "Colorectal cancer".to_string());
        let q = QuestionInstance::new("q1", "What is the diagnosis?", AnswerDomain::letters(2))
            .with_options(options)
            .with_contexts(vec!["an abstract".into()])
            .with_gold(Answer::label("A"));
        let json = serde_json::to_string(&q).unwrap();
        let back: QuestionInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn options_block_lists_labels_in_domain_order() {
        let mut options = BTreeMap::new();
        options.insert("A".to_string(), "first".to_string());
        options.insert("B".to_string(), "second".to_string());
        let q = QuestionInstance::new("q", "?", AnswerDomain::letters(2)).with_options(options);
        assert_eq!(q.options_block(), "Options:\n(A) first\n(B) second");

        let bare = QuestionInstance::new("q", "?", AnswerDomain::yes_no_maybe());
        assert_eq!(bare.options_block(), "Answer with one of: yes, no, maybe");
    }
}
