//! Prompt templates, in-context example selection and answer parsing.
//!
//! Templates are plain text with `{{name}}` placeholders. Property and
//! reaction templates must contain `{{icl}}` and `{{target}}` exactly once;
//! everything from the `{{target}}` line onwards is the question block.
//! The ranking template must contain `{{variants}}` once.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{circular_fingerprint, tanimoto, Fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH};
use crate::molgraph::{parse_smiles, VariantList};
use crate::uq::Answer;

pub const DEFAULT_K: usize = 4;

const PROPERTY_TEMPLATE: &str = include_str!("../templates/property.txt");
const REACTION_TEMPLATE: &str = include_str!("../templates/reaction.txt");
const RANK_TEMPLATE: &str = include_str!("../templates/rank.txt");

const PROPERTY_ROLE: &str = "You are an expert chemist specializing in chemical property prediction.";
const PROPERTY_TASK: &str = "Given the SMILES of a molecule, use your expertise to predict the molecular properties based on its structure.";
const REACTION_ROLE: &str = "You are an expert chemist specializing in chemical reaction prediction.";
const REACTION_TASK: &str = "Given the SMILES of the reactants of a chemical reaction, use your expertise to predict the SMILES of the major product.";
const RANK_ROLE: &str = "As an expert in chemistry with a thorough understanding of SMILES notation.";
const RANK_TASK: &str = "Can you rank your confidence score in the following smiles for interpreting its structures?  [please output the exact smile string]:";
pub const STRICT_YES_NO: &str = "Please strictly answer with \"Yes\" or \"No\".";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no in-context examples available")]
    EmptyPool,
    #[error("template must contain {{{{{0}}}}} exactly once")]
    BadTemplate(String),
    #[error("ranking needs at least two variants, got {0}")]
    TooFewVariants(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    YesNo,
    Smiles,
    Ranking,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub role_preamble: String,
    pub task_instruction: String,
    pub icl_block: Vec<(String, String)>,
    pub question_block: String,
    pub answer_format: AnswerFormat,
    /// The SMILES the question is about; `None` for ranking prompts.
    pub target: Option<String>,
    /// Fully rendered text sent to the model.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
    anchor: &'static str,
}

impl Template {
    fn validated(text: String, required: &[&'static str], anchor: &'static str) -> Result<Template, PromptError> {
        for name in required {
            let needle = format!("{{{{{name}}}}}");
            if text.matches(&needle).count() != 1 {
                return Err(PromptError::BadTemplate(name.to_string()));
            }
        }
        Ok(Template { text, anchor })
    }

    pub fn property(text: impl Into<String>) -> Result<Template, PromptError> {
        Self::validated(text.into(), &["icl", "target"], "target")
    }

    pub fn reaction(text: impl Into<String>) -> Result<Template, PromptError> {
        Self::validated(text.into(), &["icl", "target"], "target")
    }

    pub fn rank(text: impl Into<String>) -> Result<Template, PromptError> {
        Self::validated(text.into(), &["variants"], "variants")
    }

    pub fn default_property() -> Template {
        Self::property(PROPERTY_TEMPLATE).expect("built-in template")
    }

    pub fn default_reaction() -> Template {
        Self::reaction(REACTION_TEMPLATE).expect("built-in template")
    }

    pub fn default_rank() -> Template {
        Self::rank(RANK_TEMPLATE).expect("built-in template")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Renders the whole template and, separately, the question block that
    /// starts at the anchor line.
    fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        let anchor = format!("{{{{{}}}}}", self.anchor);
        let split = self.text.find(&anchor).map_or(0, |at| {
            self.text[..at].rfind('\n').map_or(0, |nl| nl + 1)
        });
        let full = substitute(&self.text, vars);
        let question = substitute(&self.text[split..], vars);
        (full.trim_end().to_string(), question.trim_end().to_string())
    }
}

/// Single-pass `{{name}}` substitution; substituted text is not rescanned
/// and unknown placeholders are left verbatim.
fn substitute(text: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Wording for one binary property task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyTask {
    pub name: String,
    /// Completes "determine if each molecule ...".
    pub question: String,
    /// Line label preceding each answer.
    pub label: String,
}

impl PropertyTask {
    /// Wording for the standard benchmark tasks; unknown names get a
    /// generic phrasing built from the name.
    pub fn named(name: &str) -> PropertyTask {
        let (question, label) = match name.to_ascii_lowercase().as_str() {
            "tox21" | "toxicity" => ("contains a toxicity compound", "Contain toxicity compound"),
            "bbbp" => ("can penetrate the blood-brain barrier", "Penetrate blood-brain barrier"),
            "hiv" => ("can inhibit HIV replication", "Inhibit HIV replication"),
            "bace" => ("can inhibit human beta-secretase 1 (BACE-1)", "Inhibit BACE-1"),
            "clintox" => ("failed clinical trials for toxicity reasons", "Clinical trial toxicity"),
            _ => {
                return PropertyTask {
                    name: name.to_string(),
                    question: format!("has the property {name}"),
                    label: name.to_string(),
                }
            }
        };
        PropertyTask {
            name: name.to_string(),
            question: question.to_string(),
            label: label.to_string(),
        }
    }
}

pub fn render_property_prompt(
    template: &Template,
    target: &str,
    icl: &[(String, String)],
    task: &PropertyTask,
) -> Prompt {
    let icl_text = icl
        .iter()
        .map(|(s, a)| format!("SMILES: {s}\n{}: {a}", task.label))
        .collect::<Vec<_>>()
        .join("\n");
    let (text, question_block) = template.render(&[
        ("role", PROPERTY_ROLE),
        ("task", PROPERTY_TASK),
        ("property", &task.question),
        ("label", &task.label),
        ("icl", &icl_text),
        ("target", target),
    ]);
    Prompt {
        role_preamble: PROPERTY_ROLE.to_string(),
        task_instruction: PROPERTY_TASK.to_string(),
        icl_block: icl.to_vec(),
        question_block,
        answer_format: AnswerFormat::YesNo,
        target: Some(target.to_string()),
        text,
    }
}

pub fn render_reaction_prompt(template: &Template, reactants: &str, icl: &[(String, String)]) -> Prompt {
    let icl_text = icl
        .iter()
        .map(|(r, p)| format!("Reactants: {r}\nProduct: {p}"))
        .collect::<Vec<_>>()
        .join("\n");
    let (text, question_block) = template.render(&[
        ("role", REACTION_ROLE),
        ("task", REACTION_TASK),
        ("icl", &icl_text),
        ("target", reactants),
    ]);
    Prompt {
        role_preamble: REACTION_ROLE.to_string(),
        task_instruction: REACTION_TASK.to_string(),
        icl_block: icl.to_vec(),
        question_block,
        answer_format: AnswerFormat::Smiles,
        target: Some(reactants.to_string()),
        text,
    }
}

pub fn render_rank_prompt(template: &Template, variants: &VariantList) -> Result<Prompt, PromptError> {
    if variants.len() < 2 {
        return Err(PromptError::TooFewVariants(variants.len()));
    }
    let lines = variants.variants.join("\n");
    let (text, question_block) = template.render(&[
        ("role", RANK_ROLE),
        ("task", RANK_TASK),
        ("variants", &lines),
    ]);
    Ok(Prompt {
        role_preamble: RANK_ROLE.to_string(),
        task_instruction: RANK_TASK.to_string(),
        icl_block: Vec::new(),
        question_block,
        answer_format: AnswerFormat::Ranking,
        target: None,
        text,
    })
}

/// Extracts an answer from raw model text.
///
/// Yes/No: the last standalone "yes" or "no", case-insensitive. SMILES: the
/// longest whitespace-delimited token (with wrapping quotes and trailing
/// punctuation removed) that parses; later tokens win ties.
pub fn parse_answer(text: &str, format: AnswerFormat) -> Answer {
    match format {
        AnswerFormat::YesNo => text
            .split(|c: char| !c.is_alphanumeric())
            .filter_map(|w| {
                if w.eq_ignore_ascii_case("yes") {
                    Some(Answer::Yes)
                } else if w.eq_ignore_ascii_case("no") {
                    Some(Answer::No)
                } else {
                    None
                }
            })
            .last()
            .unwrap_or(Answer::Invalid),
        AnswerFormat::Smiles | AnswerFormat::Ranking => {
            let mut best: Option<&str> = None;
            for token in text.split_whitespace() {
                let Some(candidate) = smiles_candidate(token) else { continue };
                if best.is_none_or(|b| candidate.len() >= b.len()) {
                    best = Some(candidate);
                }
            }
            best.map_or(Answer::Invalid, |s| Answer::Smiles(s.to_string()))
        }
    }
}

fn smiles_candidate(token: &str) -> Option<&str> {
    if parse_smiles(token).is_ok() {
        return Some(token);
    }
    let stripped = token
        .trim_start_matches(['"', '\'', '`', '*', '<'])
        .trim_end_matches(['"', '\'', '`', '*', '>', ',', ';', '.', ':', '!', '?']);
    (!stripped.is_empty() && stripped != token && parse_smiles(stripped).is_ok()).then_some(stripped)
}

/// Result of matching a ranking reply back to the offered variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub ordered: Vec<String>,
    pub best: String,
    /// True when no reply line named any variant.
    pub fallback: bool,
}

/// Matches reply lines to variants by exact string equality after trimming
/// whitespace, list markers and wrapping punctuation. Variants never named
/// keep their input order at the tail.
pub fn parse_ranking(reply: &str, variants: &[String]) -> Ranking {
    let mut ordered: Vec<String> = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        let mut candidates = vec![line];
        for token in line.split_whitespace() {
            candidates.push(
                token
                    .trim_start_matches(['"', '\'', '`', '*', '-', '(', '['])
                    .trim_end_matches(['"', '\'', '`', '*', ',', ';', ':', ']']),
            );
        }
        let hit = candidates
            .iter()
            .find_map(|c| variants.iter().find(|v| v.as_str() == *c && !ordered.contains(v)));
        if let Some(v) = hit {
            ordered.push(v.clone());
        }
    }
    let fallback = ordered.is_empty();
    for v in variants {
        if !ordered.contains(v) {
            ordered.push(v.clone());
        }
    }
    let best = ordered.first().cloned().unwrap_or_default();
    Ranking {
        ordered,
        best,
        fallback,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IclStrategy {
    /// Label-stratified greedy max-min fingerprint diversity.
    #[default]
    Diverse,
    Random,
}

impl FromStr for IclStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diverse" => Ok(IclStrategy::Diverse),
            "random" => Ok(IclStrategy::Random),
            other => Err(format!("unknown ICL strategy '{other}'")),
        }
    }
}

/// One labeled candidate for in-context examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IclRecord {
    /// Text shown as the example input.
    pub input: String,
    /// Text shown as the example answer.
    pub answer: String,
    /// Identity used to exclude the target.
    pub canonical: String,
    /// Stratum; `None` puts every record in one stratum.
    pub label: Option<String>,
}

/// A candidate pool with fingerprints computed once up front.
#[derive(Debug, Clone)]
pub struct IclPool {
    records: Vec<IclRecord>,
    fingerprints: Vec<Option<Fingerprint>>,
}

impl IclPool {
    pub fn new(records: Vec<IclRecord>) -> IclPool {
        let fingerprints = records
            .iter()
            .map(|r| {
                parse_smiles(&r.input)
                    .ok()
                    .and_then(|m| circular_fingerprint(&m, DEFAULT_RADIUS, DEFAULT_WIDTH).ok())
            })
            .collect();
        IclPool {
            records,
            fingerprints,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IclRecord] {
        &self.records
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        match (&self.fingerprints[a], &self.fingerprints[b]) {
            (Some(x), Some(y)) => 1.0 - tanimoto(x, y).unwrap_or(0.0),
            _ => 1.0,
        }
    }

    /// Picks up to `k` examples, never one whose canonical form equals
    /// `exclude_canonical`. Strata get quotas as equal as their sizes
    /// allow; the result interleaves strata in label order.
    pub fn select(
        &self,
        k: usize,
        seed: u64,
        exclude_canonical: &str,
        strategy: IclStrategy,
    ) -> Result<Vec<IclRecord>, PromptError> {
        let mut strata: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.canonical != exclude_canonical {
                strata.entry(r.label.as_deref()).or_default().push(i);
            }
        }
        if strata.is_empty() {
            return Err(PromptError::EmptyPool);
        }
        let strata: Vec<Vec<usize>> = strata.into_values().collect();

        let mut quota = vec![0usize; strata.len()];
        let mut remaining = k;
        while remaining > 0 {
            let mut progressed = false;
            for (s, members) in strata.iter().enumerate() {
                if remaining > 0 && quota[s] < members.len() {
                    quota[s] += 1;
                    remaining -= 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: Vec<usize> = Vec::new();
        let mut per_stratum: Vec<Vec<usize>> = Vec::new();
        for (s, members) in strata.iter().enumerate() {
            let picks = match strategy {
                IclStrategy::Random => {
                    let mut m = members.clone();
                    m.shuffle(&mut rng);
                    m.truncate(quota[s]);
                    m
                }
                IclStrategy::Diverse => self.max_min(members, quota[s], &chosen, &mut rng),
            };
            chosen.extend(&picks);
            per_stratum.push(picks);
        }

        let mut out = Vec::with_capacity(chosen.len());
        for round in 0.. {
            let before = out.len();
            for picks in &per_stratum {
                if let Some(&i) = picks.get(round) {
                    out.push(self.records[i].clone());
                }
            }
            if out.len() == before {
                break;
            }
        }
        Ok(out)
    }

    fn max_min<R: Rng>(&self, members: &[usize], quota: usize, already: &[usize], rng: &mut R) -> Vec<usize> {
        let mut picks: Vec<usize> = Vec::new();
        if quota == 0 {
            return picks;
        }
        // Nearest-selected distance per member.
        let mut nearest: Vec<f64> = members
            .iter()
            .map(|&m| already.iter().map(|&a| self.distance(m, a)).fold(f64::INFINITY, f64::min))
            .collect();
        let mut taken = vec![false; members.len()];
        let first = if already.is_empty() {
            rng.gen_range(0..members.len())
        } else {
            argmax(&nearest, &taken)
        };
        let mut next = first;
        loop {
            taken[next] = true;
            picks.push(members[next]);
            if picks.len() == quota {
                break;
            }
            for (j, &m) in members.iter().enumerate() {
                if !taken[j] {
                    nearest[j] = nearest[j].min(self.distance(m, members[next]));
                }
            }
            next = argmax(&nearest, &taken);
        }
        picks
    }
}

fn argmax(values: &[f64], taken: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if taken[i] {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best.expect("a member is still available")
}

/// Convenience wrapper over [`IclPool::select`] for one-off calls.
pub fn select_icl(
    pool: &[IclRecord],
    k: usize,
    seed: u64,
    exclude_canonical: &str,
    strategy: IclStrategy,
) -> Result<Vec<IclRecord>, PromptError> {
    IclPool::new(pool.to_vec()).select(k, seed, exclude_canonical, strategy)
}
