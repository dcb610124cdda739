//! Entropy-based output uncertainty and the original-vs-reformed input
//! uncertainty comparison. All entropies are in nats.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterAssignment;

pub const LOG_BASE: &str = "e";
pub const INVALID_LABEL: &str = "invalid";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Original,
    Reformed,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Original => "original",
            Arm::Reformed => "reformed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Property,
    Reaction,
}

/// One parsed model answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    Smiles(String),
    Invalid,
}

impl Answer {
    /// Class label used by class entropy and majority voting.
    pub fn label(&self) -> &str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
            Answer::Smiles(s) => s,
            Answer::Invalid => INVALID_LABEL,
        }
    }

    pub fn is_valid(&self) -> bool {
        !matches!(self, Answer::Invalid)
    }
}

/// The `m` sampled responses to one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub task: TaskKind,
    /// Canonical SMILES of the item.
    pub item: String,
    pub prompt_variant: Arm,
    /// The SMILES string actually placed in the prompt.
    pub prompt_smiles: String,
    pub responses: Vec<String>,
    pub parsed: Vec<Answer>,
}

impl SampleSet {
    pub fn m(&self) -> usize {
        self.responses.len()
    }

    /// The first `m` samples, used when scoring several sample counts from
    /// one set of draws.
    pub fn prefix(&self, m: usize) -> SampleSet {
        SampleSet {
            responses: self.responses[..m.min(self.responses.len())].to_vec(),
            parsed: self.parsed[..m.min(self.parsed.len())].to_vec(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    ClassEntropy,
    ClusterEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRecord {
    pub item: String,
    pub score: f64,
    pub kind: UncertaintyKind,
    pub correct: bool,
    pub m: usize,
}

/// Shannon entropy of a frequency table over `m` observations.
pub fn entropy_from_counts(counts: impl IntoIterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let m: usize = counts.iter().sum();
    if counts.len() <= 1 {
        return 0.0;
    }
    let total = m as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    h.clamp(0.0, total.ln())
}

/// Entropy of the empirical class distribution of `labels`.
///
/// # Panics
/// On an empty slice.
pub fn class_entropy<T: Hash + Eq>(labels: &[T]) -> f64 {
    assert!(!labels.is_empty(), "class entropy needs at least one label");
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    entropy_from_counts(counts.into_values())
}

/// Class entropy over parsed answers; unparseable answers form the class
/// `"invalid"`.
pub fn answer_entropy(answers: &[Answer]) -> f64 {
    let labels: Vec<&str> = answers.iter().map(Answer::label).collect();
    class_entropy(&labels)
}

/// Entropy of the cluster-size distribution.
pub fn cluster_entropy(assignment: &ClusterAssignment) -> f64 {
    entropy_from_counts(assignment.sizes())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UqError {
    #[error("item {0} has no counterpart in the other arm")]
    ItemMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "↑")]
    Up,
    #[serde(rename = "↓")]
    Down,
    #[serde(rename = "=")]
    Unchanged,
}

impl Direction {
    pub fn of(delta: f64) -> Direction {
        if delta > 0.0 {
            Direction::Up
        } else if delta < 0.0 {
            Direction::Down
        } else {
            Direction::Unchanged
        }
    }

    pub fn arrow(self) -> &'static str {
        match self {
            Direction::Up => "↑",
            Direction::Down => "↓",
            Direction::Unchanged => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub items: usize,
    pub accuracy: f64,
    pub mean_entropy: f64,
}

impl ArmSummary {
    pub fn from_records(records: &[&UncertaintyRecord]) -> ArmSummary {
        let n = records.len();
        if n == 0 {
            return ArmSummary {
                items: 0,
                accuracy: 0.0,
                mean_entropy: 0.0,
            };
        }
        ArmSummary {
            items: n,
            accuracy: records.iter().filter(|r| r.correct).count() as f64 / n as f64,
            mean_entropy: records.iter().map(|r| r.score).sum::<f64>() / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDelta {
    pub item: String,
    pub u_original: f64,
    pub u_reformed: f64,
    pub delta_u: f64,
    pub correct_original: bool,
    pub correct_reformed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputUncertaintyReport {
    pub original: ArmSummary,
    pub reformed: ArmSummary,
    pub accuracy_delta: f64,
    pub accuracy_direction: Direction,
    pub entropy_delta: f64,
    pub entropy_direction: Direction,
    pub log_base: String,
    /// Per-item deltas. An extension: the aggregate rows are the primary
    /// comparison.
    pub per_item_extension: Vec<ItemDelta>,
}

impl InputUncertaintyReport {
    pub fn from_summaries(original: ArmSummary, reformed: ArmSummary) -> InputUncertaintyReport {
        let accuracy_delta = reformed.accuracy - original.accuracy;
        let entropy_delta = reformed.mean_entropy - original.mean_entropy;
        InputUncertaintyReport {
            original,
            reformed,
            accuracy_delta,
            accuracy_direction: Direction::of(accuracy_delta),
            entropy_delta,
            entropy_direction: Direction::of(entropy_delta),
            log_base: LOG_BASE.to_string(),
            per_item_extension: Vec::new(),
        }
    }
}

/// Compares matched items across the two arms. Items are matched by the
/// canonical SMILES stored in each record.
pub fn input_uncertainty_report(
    original: &[(SampleSet, UncertaintyRecord)],
    reformed: &[(SampleSet, UncertaintyRecord)],
) -> Result<InputUncertaintyReport, UqError> {
    let by_item = |arm: &[(SampleSet, UncertaintyRecord)]| -> BTreeMap<String, UncertaintyRecord> {
        arm.iter().map(|(_, r)| (r.item.clone(), r.clone())).collect()
    };
    let orig = by_item(original);
    let reform = by_item(reformed);
    if let Some(missing) = orig.keys().find(|k| !reform.contains_key(*k)) {
        return Err(UqError::ItemMismatch(missing.clone()));
    }
    if let Some(missing) = reform.keys().find(|k| !orig.contains_key(*k)) {
        return Err(UqError::ItemMismatch(missing.clone()));
    }

    let per_item: Vec<ItemDelta> = orig
        .iter()
        .map(|(item, o)| {
            let r = &reform[item];
            ItemDelta {
                item: item.clone(),
                u_original: o.score,
                u_reformed: r.score,
                delta_u: r.score - o.score,
                correct_original: o.correct,
                correct_reformed: r.correct,
            }
        })
        .collect();
    let o_refs: Vec<&UncertaintyRecord> = orig.values().collect();
    let r_refs: Vec<&UncertaintyRecord> = reform.values().collect();
    let mut report = InputUncertaintyReport::from_summaries(
        ArmSummary::from_records(&o_refs),
        ArmSummary::from_records(&r_refs),
    );
    report.per_item_extension = per_item;
    Ok(report)
}
