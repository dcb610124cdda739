//! AUC against brute-force pair counting, metric properties against a
//! confusion-matrix oracle.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rephrase_core::eval::{classification_metrics, exact_match, roc_auc, MatchMode};
use rephrase_core::uq::{Answer, UncertaintyKind, UncertaintyRecord};

fn record(score: f64, correct: bool) -> UncertaintyRecord {
    UncertaintyRecord {
        item: String::new(),
        score,
        kind: UncertaintyKind::ClusterEntropy,
        correct,
        m: 10,
    }
}

fn brute_force_auc(records: &[UncertaintyRecord]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for w in records.iter().filter(|r| !r.correct) {
        for c in records.iter().filter(|r| r.correct) {
            pairs += 1.0;
            if w.score > c.score {
                wins += 1.0;
            } else if w.score == c.score {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn random_instance(seed: u64) -> Vec<UncertaintyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=50);
    let mut out: Vec<UncertaintyRecord> = (0..n)
        // Scores on a coarse grid so ties are common.
        .map(|_| record(rng.gen_range(0..12) as f64 / 7.0, rng.gen_bool(0.5)))
        .collect();
    out[0].correct = true;
    out[1].correct = false;
    out
}

#[test]
fn auc_matches_brute_force_on_200_instances() {
    for seed in 0..200 {
        let recs = random_instance(seed);
        let roc = roc_auc(&recs).unwrap();
        assert!((roc.auc - brute_force_auc(&recs)).abs() <= 1e-12, "seed {seed}");
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}

#[test]
fn auc_is_invariant_to_monotone_transforms() {
    for seed in 0..50 {
        let recs = random_instance(seed);
        let base = roc_auc(&recs).unwrap().auc;
        let transformed: Vec<_> = recs.iter().map(|r| record((3.0 * r.score).exp() - 2.0, r.correct)).collect();
        assert!((roc_auc(&transformed).unwrap().auc - base).abs() < 1e-12);
    }
}

fn label(b: bool) -> Answer {
    if b { Answer::Yes } else { Answer::No }
}

proptest! {
    #[test]
    fn metrics_match_confusion_matrix(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let pred: Vec<Answer> = pairs.iter().map(|p| label(p.0)).collect();
        let gold: Vec<Answer> = pairs.iter().map(|p| label(p.1)).collect();
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for &(p, g) in &pairs {
            match (p, g) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let m = classification_metrics(&pred, &gold).unwrap();
        prop_assert!((m.accuracy - (tp + tn) / pairs.len() as f64).abs() < 1e-12);
        prop_assert!((m.f1 - f1).abs() < 1e-12);
    }

    #[test]
    fn canonical_match_is_reflexive_and_symmetric(a in 0usize..8, b in 0usize..8) {
        const S: [&str; 8] = ["CCO", "OCC", "C(O)C", "c1ccccc1", "C1=CC=CC=C1", "CCN", "xyz", "C(=O)O"];
        prop_assert_eq!(exact_match(S[a], S[b], MatchMode::Canonical), exact_match(S[b], S[a], MatchMode::Canonical));
        if S[a] != "xyz" {
            prop_assert!(exact_match(S[a], S[a], MatchMode::Canonical));
        }
        if exact_match(S[a], S[b], MatchMode::Raw) && S[a] != "xyz" {
            prop_assert!(exact_match(S[a], S[b], MatchMode::Canonical));
        }
    }
}
