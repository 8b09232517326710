//! Pure decision mathematics over round ballots: agreement level, debate
//! gating, stable-termination check, majority answer, and
//! confidence-weighted voting.
//!
//! Every operation is a deterministic function of its inputs, so evaluating
//! them independently per agent over the same snapshot trivially yields the
//! same result for everyone.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::answer::{Answer, Confidence};

/// The set of `(answer, confidence)` positions posted by a round's cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundBallot {
    pub round: u32,
    /// Exactly one entry per participating agent.
    pub votes: Vec<BallotEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallotEntry {
    pub agent_id: usize,
    pub answer: Answer,
    pub confidence: Confidence,
}

impl RoundBallot {
    pub fn new(round: u32, votes: Vec<BallotEntry>) -> Self {
        RoundBallot { round, votes }
    }

    /// Cohort size: the denominator of every agreement computation.
    pub fn cohort(&self) -> usize {
        self.votes.len()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("no answer holds a majority of the ballot")]
    NoMajority,
    #[error("every answer on the ballot is INVALID")]
    AllInvalid,
}

/// Per-label counts of valid answers, in label order.
fn tally(ballot: &RoundBallot) -> BTreeMap<&str, usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for vote in &ballot.votes {
        if let Some(label) = vote.answer.as_label() {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    counts
}

/// `(count of the most frequent valid answer) / cohort`. Zero when every
/// answer is invalid or the ballot is empty.
pub fn agreement_level(ballot: &RoundBallot) -> f64 {
    let top = tally(ballot).values().copied().max().unwrap_or(0);
    if ballot.cohort() == 0 {
        return 0.0;
    }
    top as f64 / ballot.cohort() as f64
}

/// Debate activates only when agreement falls strictly below the threshold;
/// agreement exactly at the threshold skips it.
pub fn should_debate(ballot: &RoundBallot, tau_agree: f64) -> bool {
    agreement_level(ballot) < tau_agree
}

/// Stable consensus requires the threshold to hold for two consecutive
/// rounds. `prev_agreement` starts at 0 before the first fusion round, so
/// the earliest possible stop is after round 3.
pub fn stable_termination(prev_agreement: f64, curr_agreement: f64, tau_agree: f64) -> bool {
    prev_agreement >= tau_agree && curr_agreement >= tau_agree
}

/// The answer held by a strict majority of the cohort.
///
/// Under the confirmatory precondition (agreement at or above a threshold
/// greater than 0.5) this is the unique supermajority answer.
pub fn majority_answer(ballot: &RoundBallot) -> Result<Answer, ConsensusError> {
    let counts = tally(ballot);
    let (label, count) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .ok_or(ConsensusError::AllInvalid)?;
    if 2 * count > ballot.cohort() {
        Ok(Answer::label(label))
    } else {
        Err(ConsensusError::NoMajority)
    }
}

/// Plurality winner among valid answers, ties broken by the
/// lexicographically smallest label.
pub fn plurality_answer(ballot: &RoundBallot) -> Result<Answer, ConsensusError> {
    let counts = tally(ballot);
    counts
        .into_iter()
        // BTreeMap iterates labels ascending, so `>` keeps the earlier
        // (smaller) label on ties.
        .fold(None::<(&str, usize)>, |best, (label, count)| match best {
            Some((_, best_count)) if count <= best_count => best,
            _ => Some((label, count)),
        })
        .map(|(label, _)| Answer::label(label))
        .ok_or(ConsensusError::AllInvalid)
}

/// Confidence-weighted vote: `S(a)` sums the confidences of agents whose
/// answer matches `a`; the winner is `argmax S(a)`, ties broken by the
/// lexicographically smallest label. Invalid answers never become
/// candidates.
pub fn weighted_vote(
    ballot: &RoundBallot,
) -> Result<(Answer, BTreeMap<String, f64>), ConsensusError> {
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for vote in &ballot.votes {
        if let Some(label) = vote.answer.as_label() {
            *scores.entry(label.to_string()).or_insert(0.0) += vote.confidence.value();
        }
    }
    let winner = scores
        .iter()
        // Ascending label order plus strict `>` gives the lexicographic
        // tie-break for free.
        .fold(None::<(&String, f64)>, |best, (label, &score)| match best {
            Some((_, best_score)) if score <= best_score => best,
            _ => Some((label, score)),
        })
        .map(|(label, _)| Answer::Label(label.clone()))
        .ok_or(ConsensusError::AllInvalid)?;
    Ok((winner, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ballot(round: u32, votes: &[(&str, f64)]) -> RoundBallot {
        RoundBallot::new(
            round,
            votes
                .iter()
                .enumerate()
                .map(|(agent_id, (label, confidence))| BallotEntry {
                    agent_id,
                    answer: if *label == "INVALID" {
                        Answer::Invalid
                    } else {
                        Answer::label(*label)
                    },
                    confidence: Confidence::clamped(*confidence),
                })
                .collect(),
        )
    }

    #[test]
    fn agreement_examples() {
        let unanimous = ballot(1, &[("C", 0.7); 5]);
        assert_eq!(agreement_level(&unanimous), 1.0);

        let split = ballot(
            1,
            &[("C", 0.7), ("C", 0.7), ("C", 0.7), ("B", 0.7), ("A", 0.7)],
        );
        assert!((agreement_level(&split) - 0.6).abs() < 1e-12);

        let with_invalid = ballot(
            1,
            &[
                ("C", 0.7),
                ("C", 0.7),
                ("INVALID", 0.0),
                ("B", 0.7),
                ("A", 0.7),
            ],
        );
        assert!((agreement_level(&with_invalid) - 0.4).abs() < 1e-12);

        let all_invalid = ballot(1, &[("INVALID", 0.0); 3]);
        assert_eq!(agreement_level(&all_invalid), 0.0);
    }

    #[test]
    fn debate_gate_is_strict() {
        let split = ballot(
            1,
            &[("C", 0.7), ("C", 0.7), ("C", 0.7), ("B", 0.7), ("A", 0.7)],
        );
        assert!(should_debate(&split, 0.8));

        let four_one = ballot(
            1,
            &[("C", 0.7), ("C", 0.7), ("C", 0.7), ("C", 0.7), ("B", 0.7)],
        );
        assert!(!should_debate(&four_one, 0.8));

        let unanimous = ballot(1, &[("C", 0.7); 5]);
        assert!(!should_debate(&unanimous, 0.8));
    }

    #[test]
    fn stable_termination_requires_two_rounds() {
        assert!(!stable_termination(0.0, 0.9, 0.8));
        assert!(stable_termination(0.9, 0.85, 0.8));
        assert!(!stable_termination(0.85, 0.6, 0.8));
    }

    #[test]
    fn majority_answer_examples() {
        let four_one = ballot(
            5,
            &[("C", 0.7), ("C", 0.7), ("C", 0.7), ("C", 0.7), ("B", 0.7)],
        );
        assert_eq!(majority_answer(&four_one).unwrap(), Answer::label("C"));

        let unanimous = ballot(3, &[("yes", 0.7); 3]);
        assert_eq!(majority_answer(&unanimous).unwrap(), Answer::label("yes"));

        let scattered = ballot(
            5,
            &[("A", 0.7), ("A", 0.7), ("B", 0.7), ("B", 0.7), ("C", 0.7)],
        );
        assert_eq!(majority_answer(&scattered), Err(ConsensusError::NoMajority));
    }

    #[test]
    fn weighted_vote_examples() {
        let single = ballot(2, &[("A", 0.9)]);
        let (winner, scores) = weighted_vote(&single).unwrap();
        assert_eq!(winner, Answer::label("A"));
        assert!((scores["A"] - 0.9).abs() < 1e-12);

        let summed = ballot(2, &[("A", 0.9), ("B", 0.8), ("B", 0.4)]);
        let (winner, scores) = weighted_vote(&summed).unwrap();
        assert_eq!(winner, Answer::label("B"));
        assert!((scores["B"] - 1.2).abs() < 1e-12);
        assert!((scores["A"] - 0.9).abs() < 1e-12);

        let tied = ballot(2, &[("A", 0.5), ("B", 0.5)]);
        let (winner, _) = weighted_vote(&tied).unwrap();
        assert_eq!(winner, Answer::label("A"));
    }

    #[test]
    fn invalid_cannot_win_and_all_invalid_errors() {
        let mixed = ballot(2, &[("INVALID", 1.0), ("INVALID", 1.0), ("B", 0.1)]);
        let (winner, scores) = weighted_vote(&mixed).unwrap();
        assert_eq!(winner, Answer::label("B"));
        assert!(!scores.contains_key("INVALID"));

        let hopeless = ballot(2, &[("INVALID", 1.0); 2]);
        assert_eq!(weighted_vote(&hopeless), Err(ConsensusError::AllInvalid));
        assert_eq!(plurality_answer(&hopeless), Err(ConsensusError::AllInvalid));
    }

    #[test]
    fn zero_confidence_votes_still_elect_a_cast_answer() {
        // Candidacy requires at least one cast vote, so an all-zero score
        // table resolves among the voted labels, never to an unvoted one.
        let flat = ballot(2, &[("C", 0.0), ("B", 0.0)]);
        let (winner, scores) = weighted_vote(&flat).unwrap();
        assert_eq!(winner, Answer::label("B"));
        assert_eq!(scores.len(), 2);
    }

    #[test]
    fn plurality_breaks_ties_lexicographically() {
        let tied = ballot(
            2,
            &[("C", 0.7), ("C", 0.7), ("B", 0.7), ("B", 0.7), ("A", 0.7)],
        );
        assert_eq!(plurality_answer(&tied).unwrap(), Answer::label("B"));
        let clear = ballot(
            2,
            &[("C", 0.7), ("C", 0.7), ("C", 0.7), ("B", 0.7), ("A", 0.7)],
        );
        assert_eq!(plurality_answer(&clear).unwrap(), Answer::label("C"));
    }
}
