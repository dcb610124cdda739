use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rephrase_core::molgraph::{
    canonical_smiles, enumerate_variants, parse_smiles, write_smiles, MolGraph, NeighborOrder,
};

fn corpus() -> Vec<(String, String)> {
    include_str!("data/corpus.smi")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut parts = l.split_whitespace();
            (parts.next().unwrap().to_string(), parts.next().unwrap_or("").to_string())
        })
        .collect()
}

/// Sorted (element, charge, hydrogens, aromatic, degree) labels: a cheap
/// isomorphism invariant that does not go through canonical ranking.
fn label_multiset(m: &MolGraph) -> Vec<(u8, i8, u8, bool, usize)> {
    let mut v: Vec<_> = (0..m.atom_count())
        .map(|i| {
            let a = &m.atoms()[i];
            (a.element.atomic_number(), a.charge, m.hydrogen_count(i), a.aromatic, m.degree(i))
        })
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn corpus_parses() {
    let c = corpus();
    assert!(c.len() >= 50);
    for (s, name) in &c {
        parse_smiles(s).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn canonical_form_is_stable_under_enumeration() {
    let mut cases = 0;
    for (seed, (s, name)) in corpus().iter().enumerate() {
        let mol = parse_smiles(s).unwrap();
        let parent = canonical_smiles(&mol);
        let variants = enumerate_variants(&mol, 20, seed as u64);
        assert_eq!(variants.parent_canonical, parent);
        for v in &variants.variants {
            let c = canonical_smiles(&parse_smiles(v).unwrap());
            assert_eq!(c, parent, "{name}: variant {v}");
            cases += 1;
        }
    }
    assert!(cases >= 1000, "only {cases} variant cases");
}

#[test]
fn random_writes_round_trip_on_aspirin() {
    let mol = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
    let canon = canonical_smiles(&mol);
    let labels = label_multiset(&mol);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let start = rng.gen_range(0..mol.atom_count());
        let order = NeighborOrder::shuffled(&mol, &mut rng);
        let text = write_smiles(&mol, start, &order);
        let back = parse_smiles(&text).unwrap();
        assert_eq!(back.bond_count(), mol.bond_count(), "{text}");
        assert_eq!(label_multiset(&back), labels, "{text}");
        assert_eq!(canonical_smiles(&back), canon, "{text}");
    }
}

#[test]
fn random_writes_round_trip_on_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (s, _) in corpus() {
        let mol = parse_smiles(&s).unwrap();
        let canon = canonical_smiles(&mol);
        for _ in 0..10 {
            let start = rng.gen_range(0..mol.atom_count());
            let text = write_smiles(&mol, start, &NeighborOrder::shuffled(&mol, &mut rng));
            let back = parse_smiles(&text).unwrap();
            assert_eq!(label_multiset(&back), label_multiset(&mol));
            assert_eq!(canonical_smiles(&back), canon);
        }
    }
}

#[test]
fn canonical_is_idempotent_and_injective_on_corpus() {
    let mut seen = HashSet::new();
    for (s, name) in corpus() {
        let c = canonical_smiles(&parse_smiles(&s).unwrap());
        assert_eq!(canonical_smiles(&parse_smiles(&c).unwrap()), c, "{name}");
        assert!(seen.insert(c), "{name} collides with another corpus molecule");
    }
}

#[test]
fn canonical_smiles_snapshot() {
    // Frozen outputs; any change here is a canonical-format change.
    let cases = [
        ("OCC", "CCO"),
        ("C", "C"),
    ];
    for (input, expected) in cases {
        assert_eq!(canonical_smiles(&parse_smiles(input).unwrap()), expected);
    }
}

proptest! {
    #[test]
    fn parser_is_total_on_arbitrary_text(s in ".{0,64}") {
        let _ = parse_smiles(&s);
    }

    #[test]
    fn parser_is_total_on_smiles_alphabet(s in "[CNOSPFIclnosBr()\\[\\]=#:/\\\\@+\\-%.0-9H]{0,40}") {
        if let Ok(m) = parse_smiles(&s) {
            // Anything that parses must survive canonical write-out.
            let c = canonical_smiles(&m);
            let back = parse_smiles(&c).unwrap();
            prop_assert_eq!(canonical_smiles(&back), c);
        }
    }

    #[test]
    fn enumerated_variants_share_the_parent_form(idx in 0usize..81, seed in any::<u64>()) {
        let corpus = corpus();
        let (s, _) = &corpus[idx % corpus.len()];
        let mol = parse_smiles(s).unwrap();
        let v = enumerate_variants(&mol, 5, seed);
        prop_assert_eq!(&v, &enumerate_variants(&mol, 5, seed));
        for variant in &v.variants {
            prop_assert_eq!(canonical_smiles(&parse_smiles(variant).unwrap()), v.parent_canonical.clone());
        }
    }
}
