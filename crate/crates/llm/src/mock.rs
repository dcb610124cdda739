//! Seeded in-process stand-in for a chat model.
//!
//! The oracle reads the target back out of the rendered prompt (the last
//! `SMILES: ` or `Reactants: ` line), looks the molecule up by canonical
//! form, and decides the arm by comparing the prompt's string with the
//! item's original writing.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rephrase_core::molgraph::{canonical_smiles, parse_smiles};
use rephrase_core::uq::Answer;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::endpoint::{ChatEndpoint, Completion, LlmError};

const RANK_MARKER: &str = "[please output the exact smile string]";
const NO_IDEA: &str = "I cannot determine this.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPreference {
    #[default]
    Shortest,
    InputOrder,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockItem {
    /// The item as written in the dataset.
    pub smiles: String,
    pub gold: Answer,
    pub p_err_original: f64,
    pub p_err_reformed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockReaction {
    pub reactants: String,
    pub product: String,
    pub p_err_original: f64,
    pub p_err_reformed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    /// Sample `i` of any prompt answers `answers[i % len]`.
    FixedAnswers(Vec<String>),
    /// Answers the gold label, flipped independently per sample with the
    /// item's error rate for the arm.
    NoisyClassifier(HashMap<String, MockItem>),
    /// Answers the gold product, or with the error rate a corrupted one
    /// (half unparseable, half a different molecule).
    TemplateReactor(HashMap<String, MockReaction>),
}

#[derive(Debug, Clone)]
pub struct MockOracle {
    behavior: MockBehavior,
    rank: RankPreference,
    seed: u64,
    name: String,
}

fn canonical(s: &str) -> Option<String> {
    parse_smiles(s).ok().map(|m| canonical_smiles(&m))
}

impl MockOracle {
    pub fn fixed_answers(answers: Vec<String>, seed: u64) -> MockOracle {
        Self::new(MockBehavior::FixedAnswers(answers), seed)
    }

    /// Items whose SMILES does not parse are ignored.
    pub fn noisy_classifier(items: Vec<MockItem>, seed: u64) -> MockOracle {
        let map = items
            .into_iter()
            .filter_map(|it| Some((canonical(&it.smiles)?, it)))
            .collect();
        Self::new(MockBehavior::NoisyClassifier(map), seed)
    }

    pub fn template_reactor(reactions: Vec<MockReaction>, seed: u64) -> MockOracle {
        let map = reactions
            .into_iter()
            .filter_map(|r| Some((canonical(&r.reactants)?, r)))
            .collect();
        Self::new(MockBehavior::TemplateReactor(map), seed)
    }

    fn new(behavior: MockBehavior, seed: u64) -> MockOracle {
        MockOracle {
            behavior,
            rank: RankPreference::default(),
            seed,
            name: "mock".to_string(),
        }
    }

    pub fn with_rank_preference(mut self, rank: RankPreference) -> MockOracle {
        self.rank = rank;
        self
    }

    pub fn with_name(mut self, name: &str) -> MockOracle {
        self.name = name.to_string();
        self
    }

    fn rng(&self, prompt: &str, index: usize) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((index as u64).to_le_bytes());
        h.update(prompt.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn rank_reply(&self, prompt: &str) -> Option<String> {
        let at = prompt.find(RANK_MARKER)?;
        let after = &prompt[at + RANK_MARKER.len()..];
        let mut variants: Vec<&str> = after.lines().skip(1).map(str::trim).filter(|l| !l.is_empty()).collect();
        match self.rank {
            RankPreference::Shortest => variants.sort_by_key(|v| v.len()),
            RankPreference::InputOrder => {}
            RankPreference::Reverse => variants.reverse(),
        }
        Some(variants.join("\n"))
    }
}

fn last_field<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
}

fn error_rate(target: &str, original: &str, p_orig: f64, p_reform: f64) -> f64 {
    if target == original { p_orig } else { p_reform }
}

fn corrupt<R: Rng>(product: &str, rng: &mut R) -> String {
    if rng.gen_bool(0.5) {
        return format!("{product}(");
    }
    match rng.gen_range(0..3) {
        0 => format!("{product}C"),
        1 => format!("{product}O"),
        _ => format!("C{product}"),
    }
}

impl ChatEndpoint for MockOracle {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, _temperature: f64, index: usize) -> Result<Completion, LlmError> {
        if let Some(reply) = self.rank_reply(prompt) {
            return Ok(Completion { text: reply, usage: None });
        }
        let mut rng = self.rng(prompt, index);
        let text = match &self.behavior {
            MockBehavior::FixedAnswers(answers) if answers.is_empty() => NO_IDEA.to_string(),
            MockBehavior::FixedAnswers(answers) => answers[index % answers.len()].clone(),
            MockBehavior::NoisyClassifier(items) => {
                let hit = last_field(prompt, "SMILES: ").and_then(|t| Some((t, items.get(&canonical(t)?)?)));
                match hit {
                    Some((target, item)) => {
                        let p = error_rate(target, &item.smiles, item.p_err_original, item.p_err_reformed);
                        let flip = rng.gen_bool(p.clamp(0.0, 1.0));
                        let answer = match (&item.gold, flip) {
                            (Answer::Yes, false) | (Answer::No, true) => "Yes",
                            _ => "No",
                        };
                        answer.to_string()
                    }
                    None => NO_IDEA.to_string(),
                }
            }
            MockBehavior::TemplateReactor(reactions) => {
                let hit = last_field(prompt, "Reactants: ").and_then(|t| Some((t, reactions.get(&canonical(t)?)?)));
                match hit {
                    Some((target, r)) => {
                        let p = error_rate(target, &r.reactants, r.p_err_original, r.p_err_reformed);
                        if rng.gen_bool(p.clamp(0.0, 1.0)) {
                            corrupt(&r.product, &mut rng)
                        } else {
                            r.product.clone()
                        }
                    }
                    None => NO_IDEA.to_string(),
                }
            }
        };
        Ok(Completion { text, usage: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(target: &str) -> String {
        format!("intro\nSMILES: CCN\nLabel: No\n\nSMILES: {target}\nLabel: [Provide an answer based on analysis]")
    }

    fn item(smiles: &str, p: f64) -> MockItem {
        MockItem {
            smiles: smiles.into(),
            gold: Answer::Yes,
            p_err_original: p,
            p_err_reformed: 1.0 - p,
        }
    }

    #[test]
    fn noiseless_classifier_returns_gold() {
        let m = MockOracle::noisy_classifier(vec![item("CCO", 0.0)], 1);
        for i in 0..20 {
            assert_eq!(m.complete(&prompt("CCO"), 1.0, i).unwrap().text, "Yes");
        }
    }

    #[test]
    fn reformed_writing_uses_the_other_error_rate() {
        let m = MockOracle::noisy_classifier(vec![item("CCO", 0.0)], 1);
        for i in 0..20 {
            assert_eq!(m.complete(&prompt("OCC"), 1.0, i).unwrap().text, "No");
        }
    }

    #[test]
    fn unknown_targets_get_a_refusal() {
        let m = MockOracle::noisy_classifier(vec![item("CCO", 0.0)], 1);
        assert_eq!(m.complete(&prompt("CCCC"), 1.0, 0).unwrap().text, NO_IDEA);
    }

    #[test]
    fn draws_are_seeded() {
        let a = MockOracle::noisy_classifier(vec![item("CCO", 0.5)], 7);
        let b = MockOracle::noisy_classifier(vec![item("CCO", 0.5)], 7);
        let run = |m: &MockOracle| (0..50).map(|i| m.complete(&prompt("CCO"), 1.0, i).unwrap().text).collect::<Vec<_>>();
        assert_eq!(run(&a), run(&b));
        let c = MockOracle::noisy_classifier(vec![item("CCO", 0.5)], 8);
        assert_ne!(run(&a), run(&c));
    }

    #[test]
    fn ranking_preferences() {
        let p = "role\n\nCan you rank ... [please output the exact smile string]:\nC(C)O\nOCC\nC(O)C\n";
        let m = MockOracle::fixed_answers(vec![], 0);
        assert_eq!(m.complete(p, 0.0, 0).unwrap().text, "OCC\nC(C)O\nC(O)C");
        let m = m.with_rank_preference(RankPreference::Reverse);
        assert_eq!(m.complete(p, 0.0, 0).unwrap().text, "C(O)C\nOCC\nC(C)O");
    }

    #[test]
    fn reactor_corrupts_at_the_error_rate() {
        let r = MockReaction {
            reactants: "CCO.CC(=O)O".into(),
            product: "CCOC(C)=O".into(),
            p_err_original: 1.0,
            p_err_reformed: 0.0,
        };
        let m = MockOracle::template_reactor(vec![r], 3);
        let p = "x\nReactants: CCO.CC(=O)O\nProduct: [Provide an answer based on analysis]";
        for i in 0..20 {
            assert_ne!(m.complete(p, 1.0, i).unwrap().text, "CCOC(C)=O");
        }
        let p = "x\nReactants: OCC.CC(O)=O\nProduct: [Provide an answer based on analysis]";
        assert_eq!(m.complete(p, 1.0, 0).unwrap().text, "CCOC(C)=O");
    }
}
