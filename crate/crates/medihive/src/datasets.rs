//! Benchmark ingestion and scoring: loaders for the MedQA and PubMedQA
//! line-delimited record formats, answer normalization into
//! [`QuestionInstance`], and accuracy / macro-F1 computation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::answer::{Answer, AnswerDomain};
use crate::question::QuestionInstance;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown label {label:?} at line {line}")]
    UnknownLabel { line: usize, label: String },
    #[error("no scorable records")]
    EmptyInput,
}

/// Which record format a dataset file uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Medqa,
    Pubmedqa,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "medqa" => Ok(DatasetKind::Medqa),
            "pubmedqa" => Ok(DatasetKind::Pubmedqa),
            other => Err(format!(
                "unknown dataset kind {other:?} (expected medqa or pubmedqa)"
            )),
        }
    }
}

/// Option map that rejects duplicate labels instead of silently keeping the
/// last one.
#[derive(Debug, Default)]
struct OptionPairs(Vec<(String, String)>);

impl<'de> Deserialize<'de> for OptionPairs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = OptionPairs;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map of option label to option text")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs: Vec<(String, String)> = Vec::new();
                while let Some((key, value)) = map.next_entry::<String, String>()? {
                    if pairs.iter().any(|(k, _)| *k == key) {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate option label {key:?}"
                        )));
                    }
                    pairs.push((key, value));
                }
                Ok(OptionPairs(pairs))
            }
        }

        deserializer.deserialize_map(PairsVisitor)
    }
}

fn id_text(raw: Option<serde_json::Value>, fallback: String) -> String {
    match raw {
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
        None => fallback,
    }
}

#[derive(Deserialize)]
struct MedqaRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: String,
    options: OptionPairs,
    #[serde(default)]
    answer_idx: Option<String>,
}

#[derive(Deserialize)]
struct PubmedqaRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: String,
    #[serde(default)]
    contexts: Vec<String>,
    #[serde(default)]
    final_decision: Option<String>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((idx + 1, line));
        }
    }
    Ok(lines)
}

/// Parse one MedQA-style record line:
/// `{question, options: {label: text}, answer_idx}`.
pub fn parse_medqa_line(line: &str, line_no: usize) -> Result<QuestionInstance, DatasetError> {
    let record: MedqaRecord =
        serde_json::from_str(line).map_err(|e| DatasetError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
    let mut labels: Vec<String> = Vec::new();
    let mut options = BTreeMap::new();
    for (label, text) in record.options.0 {
        let label = label.trim().to_uppercase();
        if label.len() != 1 || !("A".."F").contains(&label.as_str()) {
            return Err(DatasetError::UnknownLabel {
                line: line_no,
                label,
            });
        }
        labels.push(label.clone());
        options.insert(label, text);
    }
    labels.sort();
    if !(3..=5).contains(&labels.len()) {
        return Err(DatasetError::MalformedRecord {
            line: line_no,
            reason: format!("expected 3-5 options, found {}", labels.len()),
        });
    }
    let domain = AnswerDomain::new(labels);
    let gold = match record.answer_idx {
        Some(raw) => Some(domain.normalize(&raw).ok_or(DatasetError::UnknownLabel {
            line: line_no,
            label: raw,
        })?),
        None => None,
    };
    let mut instance = QuestionInstance::new(
        id_text(record.id, format!("medqa-{line_no}")),
        record.question,
        domain,
    )
    .with_options(options);
    instance.gold = gold;
    Ok(instance)
}

/// Parse one PubMedQA-style record line:
/// `{question, contexts: [text], final_decision}`. `final_decision` is
/// case-normalized.
pub fn parse_pubmedqa_line(line: &str, line_no: usize) -> Result<QuestionInstance, DatasetError> {
    let record: PubmedqaRecord =
        serde_json::from_str(line).map_err(|e| DatasetError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
    let domain = AnswerDomain::yes_no_maybe();
    let gold = match record.final_decision {
        Some(raw) => Some(domain.normalize(&raw).ok_or(DatasetError::UnknownLabel {
            line: line_no,
            label: raw,
        })?),
        None => None,
    };
    let mut instance = QuestionInstance::new(
        id_text(record.id, format!("pubmedqa-{line_no}")),
        record.question,
        domain,
    )
    .with_contexts(record.contexts);
    instance.gold = gold;
    Ok(instance)
}

/// Load MedQA-style records, one JSON object per line. The answer domain is
/// the sorted option labels; a record without `answer_idx` loads with no
/// gold answer and is skipped by scoring.
pub fn load_medqa(path: &Path) -> Result<Vec<QuestionInstance>, DatasetError> {
    let lines = read_lines(path)?;
    let instances = lines
        .iter()
        .map(|(line_no, line)| parse_medqa_line(line, *line_no))
        .collect::<Result<Vec<_>, _>>()?;
    if instances.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    Ok(instances)
}

/// Load PubMedQA-style records, one JSON object per line.
pub fn load_pubmedqa(path: &Path) -> Result<Vec<QuestionInstance>, DatasetError> {
    let lines = read_lines(path)?;
    let instances = lines
        .iter()
        .map(|(line_no, line)| parse_pubmedqa_line(line, *line_no))
        .collect::<Result<Vec<_>, _>>()?;
    if instances.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    Ok(instances)
}

pub fn load(kind: DatasetKind, path: &Path) -> Result<Vec<QuestionInstance>, DatasetError> {
    match kind {
        DatasetKind::Medqa => load_medqa(path),
        DatasetKind::Pubmedqa => load_pubmedqa(path),
    }
}

/// Desk-scale subsampling: first `limit` records, or a seeded random
/// `limit`-subset preserving file order.
pub fn subsample(
    mut instances: Vec<QuestionInstance>,
    limit: Option<usize>,
    sample_seed: Option<u64>,
) -> Vec<QuestionInstance> {
    let Some(limit) = limit else {
        return instances;
    };
    if limit >= instances.len() {
        return instances;
    }
    match sample_seed {
        None => {
            instances.truncate(limit);
            instances
        }
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut indices: Vec<usize> = (0..instances.len()).collect();
            for i in 0..limit {
                let j = rng.gen_range(i..indices.len());
                indices.swap(i, j);
            }
            let mut chosen: Vec<usize> = indices[..limit].to_vec();
            chosen.sort_unstable();
            let chosen_set: std::collections::BTreeSet<usize> = chosen.into_iter().collect();
            instances
                .into_iter()
                .enumerate()
                .filter(|(i, _)| chosen_set.contains(i))
                .map(|(_, q)| q)
                .collect()
        }
    }
}

/// Precision, recall, and F1 for one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub predicted_count: usize,
}

/// Aggregate scoring output over `(gold, predicted)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scored: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Unweighted mean of per-label F1 over labels that occur in gold or in
    /// predictions; the INVALID sentinel is never a label.
    pub macro_f1: f64,
    pub per_label: Vec<LabelMetrics>,
}

/// Score predictions against gold labels. Pairs are `(gold, predicted)`.
pub fn compute_metrics(pairs: &[(Answer, Answer)]) -> Result<Metrics, DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let correct = pairs.iter().filter(|(gold, pred)| gold == pred).count();
    let accuracy = correct as f64 / pairs.len() as f64;

    let mut labels: Vec<&str> = pairs
        .iter()
        .flat_map(|(gold, pred)| [gold.as_label(), pred.as_label()])
        .flatten()
        .collect();
    labels.sort_unstable();
    labels.dedup();

    let mut per_label = Vec::with_capacity(labels.len());
    for label in labels {
        let tp = pairs
            .iter()
            .filter(|(g, p)| g.as_label() == Some(label) && p.as_label() == Some(label))
            .count() as f64;
        let gold_count = pairs
            .iter()
            .filter(|(g, _)| g.as_label() == Some(label))
            .count();
        let predicted_count = pairs
            .iter()
            .filter(|(_, p)| p.as_label() == Some(label))
            .count();
        let fp = predicted_count as f64 - tp;
        let fn_ = gold_count as f64 - tp;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_label.push(LabelMetrics {
            label: label.to_string(),
            precision,
            recall,
            f1,
            gold_count,
            predicted_count,
        });
    }
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|m| m.f1).sum::<f64>() / per_label.len() as f64
    };
    Ok(Metrics {
        scored: pairs.len(),
        correct,
        accuracy,
        macro_f1,
        per_label,
    })
}
