//! Synthetic datasets and a request-counting endpoint for pipeline tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rephrase_core::molgraph::{canonical_smiles, parse_smiles};
use rephrase_llm::{ChatEndpoint, Completion, LlmError};

const TAILS: [&str; 12] = ["O", "N", "Cl", "F", "C(=O)O", "c1ccccc1", "Br", "C#N", "S", "OC", "C(N)=O", "C1CC1"];

fn canon(s: &str) -> String {
    canonical_smiles(&parse_smiles(s).unwrap())
}

/// `count` distinct molecules written canonically, alternating labels.
pub fn molecules(count: usize) -> Vec<String> {
    let mut out = Vec::new();
    'outer: for chain in 1..40 {
        for tail in TAILS {
            let branch = if chain % 3 == 0 { "C(C)" } else { "" };
            let s = canon(&format!("{}{branch}{tail}", "C".repeat(chain)));
            if !out.contains(&s) {
                out.push(s);
            }
            if out.len() == count {
                break 'outer;
            }
        }
    }
    assert_eq!(out.len(), count);
    out
}

pub fn write_property_csv(path: &Path, count: usize) {
    let mut text = String::from("smiles,label\n");
    for (i, m) in molecules(count).iter().enumerate() {
        writeln!(text, "{m},{}", (i / 2) % 2).unwrap();
    }
    std::fs::write(path, text).unwrap();
}

/// Esterifications, amidations and halide substitutions over the
/// generated alcohols, amines and acids.
pub fn write_reactions(path: &Path, count: usize) {
    let mut lines = Vec::new();
    for chain in 1..60 {
        let r = "C".repeat(chain);
        lines.push(format!("{r}O.CC(=O)O>>{}", canon(&format!("{r}OC(C)=O"))));
        lines.push(format!("{r}N.CC(=O)Cl>>{}", canon(&format!("{r}NC(C)=O"))));
        lines.push(format!("{r}Br.[Na+].[OH-]>>{}", canon(&format!("{r}O"))));
        if lines.len() >= count {
            break;
        }
    }
    lines.truncate(count);
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Fails every call and counts how often it was asked.
pub struct Counting {
    pub name: String,
    pub calls: AtomicUsize,
}

impl Counting {
    pub fn new(name: &str) -> Counting {
        Counting { name: name.to_string(), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatEndpoint for Counting {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn complete(&self, _: &str, _: f64, _: usize) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(LlmError::EndpointUnreachable { attempts: 1, message: "offline".into() })
    }
}
