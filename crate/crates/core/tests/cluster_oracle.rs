//! Agglomeration against a naive re-implementation that recomputes every
//! linkage from member lists, plus partition properties.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rephrase_core::cluster::{agglomerate, response_distance_matrix, DistanceMatrix, Linkage};
use rephrase_core::fingerprint::{circular_fingerprint, tanimoto};
use rephrase_core::molgraph::parse_smiles;

fn naive(size: usize, dist: &[f64], linkage: Linkage, threshold: f64) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..size).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let pairs: Vec<f64> = clusters[a]
                    .iter()
                    .flat_map(|&x| clusters[b].iter().map(move |&y| dist[x * size + y]))
                    .collect();
                let v = match linkage {
                    Linkage::Single => pairs.iter().cloned().fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pairs.iter().cloned().fold(0.0, f64::max),
                    Linkage::Average => pairs.iter().sum::<f64>() / pairs.len() as f64,
                };
                // Clusters stay sorted by their smallest member, so (a, b)
                // order is the cluster-id order.
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, a, b));
                }
            }
        }
        match best {
            Some((v, a, b)) if v <= threshold => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort();
            }
            _ => break,
        }
    }
    let mut labels = vec![0; size];
    let mut order: Vec<&Vec<usize>> = clusters.iter().collect();
    order.sort_by_key(|c| c[0]);
    for (id, c) in order.iter().enumerate() {
        for &x in c.iter() {
            labels[x] = id;
        }
    }
    labels
}

fn random_matrix(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut m = vec![0.0; size * size];
    for i in 0..size {
        for j in (i + 1)..size {
            let d: f64 = rng.gen();
            m[i * size + j] = d;
            m[j * size + i] = d;
        }
    }
    m
}

#[test]
fn matches_naive_agglomeration_on_100_seeded_matrices() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 8);
        let d = DistanceMatrix::from_dense(8, &m);
        let got = agglomerate(&d, Linkage::Average, 0.3);
        assert_eq!(got.labels, naive(8, &m, Linkage::Average, 0.3), "seed {seed}");
    }
}

#[test]
fn other_linkages_match_the_naive_version() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = random_matrix(&mut rng, 7);
        let d = DistanceMatrix::from_dense(7, &m);
        for linkage in [Linkage::Single, Linkage::Complete] {
            for t in [0.1, 0.3, 0.6] {
                assert_eq!(agglomerate(&d, linkage, t).labels, naive(7, &m, linkage, t));
            }
        }
    }
}

#[test]
fn small_alkane_matrix_matches_fingerprint_distances() {
    let smiles = ["C", "CC", "CCC"];
    let d = response_distance_matrix(&smiles);
    let fps: Vec<_> = smiles
        .iter()
        .map(|s| circular_fingerprint(&parse_smiles(s).unwrap(), 2, 2048).unwrap())
        .collect();
    for i in 0..3 {
        assert_eq!(d.get(i, i), 0.0);
        for j in 0..3 {
            if i != j {
                assert_eq!(d.get(i, j), 1.0 - tanimoto(&fps[i], &fps[j]).unwrap());
            }
        }
    }
}

const POOL: &[&str] = &[
    "CCO", "OCC", "CCN", "CCCO", "c1ccccc1", "c1ccccc1O", "CC(=O)O", "C1CC1", "not smiles", "C(",
    "CCCCCC", "CC(C)C",
];

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

proptest! {
    #[test]
    fn partition_properties(
        picks in prop::collection::vec(0..POOL.len(), 1..10),
        t in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let responses: Vec<&str> = picks.iter().map(|&i| POOL[i]).collect();
        let d = response_distance_matrix(&responses);
        let a = agglomerate(&d, Linkage::Average, t);
        prop_assert_eq!(a.labels.len(), responses.len());
        prop_assert!(a.g >= 1 && a.g <= responses.len());
        let mut seen = vec![false; a.g];
        for &l in &a.labels {
            seen[l] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
        let sizes = a.sizes();
        for &pos in d.invalid_indices() {
            prop_assert_eq!(sizes[a.labels[pos]], 1);
        }

        // Raising the threshold never splits clusters.
        let higher = agglomerate(&d, Linkage::Average, (t + 0.2).min(1.0));
        prop_assert!(higher.g <= a.g);

        // Permuting the responses permutes the partition.
        let mut perm: Vec<usize> = (0..responses.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<&str> = perm.iter().map(|&p| responses[p]).collect();
        let b = agglomerate(&response_distance_matrix(&shuffled), Linkage::Average, t);
        let unshuffled: Vec<usize> = {
            let mut out = vec![0; perm.len()];
            for (k, &p) in perm.iter().enumerate() {
                out[p] = b.labels[k];
            }
            out
        };
        prop_assert_eq!(a.g, b.g);
        prop_assert!(same_partition(&a.labels, &unshuffled));
    }
}
