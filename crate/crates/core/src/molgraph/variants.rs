use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::canon::canonical_smiles;
use super::write::{write_smiles_rooted, NeighborOrder};
use super::MolGraph;

/// Distinct non-canonical SMILES writings of one molecule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantList {
    pub variants: Vec<String>,
    pub seed: u64,
    pub parent_canonical: String,
}

impl VariantList {
    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }
}

/// Up to `n` distinct randomized writings of `mol`, excluding its canonical
/// string. Each attempt picks a uniform start atom, shuffles every neighbor
/// list and shuffles the order of disconnected components. Gives up after
/// `10 * n` attempts.
pub fn enumerate_variants(mol: &MolGraph, n: usize, seed: u64) -> VariantList {
    let parent_canonical = canonical_smiles(mol);
    let mut variants = Vec::new();
    let atoms = mol.atom_count();
    if atoms > 0 && n > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: HashSet<String> = HashSet::new();
        seen.insert(parent_canonical.clone());
        for _ in 0..n.saturating_mul(10) {
            let start = rng.gen_range(0..atoms);
            let order = NeighborOrder::shuffled(mol, &mut rng);
            let roots = component_roots(mol, start, &mut rng);
            let s = write_smiles_rooted(mol, &roots, &order);
            if seen.insert(s.clone()) {
                variants.push(s);
                if variants.len() == n {
                    break;
                }
            }
        }
    }
    VariantList {
        variants,
        seed,
        parent_canonical,
    }
}

fn component_roots<R: Rng>(mol: &MolGraph, start: usize, rng: &mut R) -> Vec<usize> {
    if mol.component_count() == 1 {
        return vec![start];
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); mol.component_count()];
    for atom in 0..mol.atom_count() {
        members[mol.component_of(atom)].push(atom);
    }
    let mut roots: Vec<usize> = members
        .iter()
        .map(|m| m[rng.gen_range(0..m.len())])
        .collect();
    roots.shuffle(rng);
    roots
}
