//! Agglomerative clustering of sampled SMILES by Tanimoto distance.
//!
//! Responses that fail to parse never join a cluster: their similarity to
//! anything is taken as vanishingly small, so each one becomes a singleton.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fingerprint::{circular_fingerprint, tanimoto, DEFAULT_RADIUS, DEFAULT_WIDTH};
use crate::molgraph::parse_smiles;

pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    #[default]
    Average,
    Complete,
}

impl FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Linkage::Single),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(format!("unknown linkage '{other}'")),
        }
    }
}

/// Pairwise distances over the valid responses of one sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    /// Response positions of the matrix rows, in order.
    valid_indices: Vec<usize>,
    invalid_indices: Vec<usize>,
    /// Row-major `size × size`.
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix over all positions from a dense row-major array.
    /// Entries are clamped into `[0, 1]`, the diagonal is zeroed and the
    /// upper triangle is mirrored.
    pub fn from_dense(size: usize, entries: &[f64]) -> DistanceMatrix {
        assert_eq!(entries.len(), size * size);
        let mut m = vec![0.0; size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                let d = entries[i * size + j].clamp(0.0, 1.0);
                m[i * size + j] = d;
                m[j * size + i] = d;
            }
        }
        DistanceMatrix {
            valid_indices: (0..size).collect(),
            invalid_indices: Vec::new(),
            entries: m,
        }
    }

    pub fn size(&self) -> usize {
        self.valid_indices.len()
    }

    /// Total number of response positions, valid or not.
    pub fn positions(&self) -> usize {
        self.valid_indices.len() + self.invalid_indices.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size() + j]
    }

    pub fn valid_indices(&self) -> &[usize] {
        &self.valid_indices
    }

    pub fn invalid_indices(&self) -> &[usize] {
        &self.invalid_indices
    }
}

/// Parses each response, fingerprints the valid ones and fills in
/// `1 − Tanimoto`. Unparseable responses are listed in `invalid_indices`.
pub fn response_distance_matrix<S: AsRef<str>>(smiles: &[S]) -> DistanceMatrix {
    let mut valid_indices = Vec::new();
    let mut invalid_indices = Vec::new();
    let mut fps = Vec::new();
    for (pos, s) in smiles.iter().enumerate() {
        let fp = parse_smiles(s.as_ref().trim())
            .ok()
            .and_then(|m| circular_fingerprint(&m, DEFAULT_RADIUS, DEFAULT_WIDTH).ok());
        match fp {
            Some(fp) => {
                valid_indices.push(pos);
                fps.push(fp);
            }
            None => invalid_indices.push(pos),
        }
    }
    let n = fps.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 1.0 - tanimoto(&fps[i], &fps[j]).expect("uniform width");
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix {
        valid_indices,
        invalid_indices,
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster id per response position.
    pub labels: Vec<usize>,
    pub g: usize,
}

impl ClusterAssignment {
    /// Cluster sizes indexed by cluster id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.g];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Agglomerative clustering with a distance cut.
///
/// Starting from singletons over the valid responses, the closest pair of
/// clusters is merged while its linkage distance is at most `threshold`.
/// Ties go to the lexicographically smallest pair of cluster ids, where a
/// merged cluster keeps the smaller id. Invalid responses are appended as
/// singletons afterwards. Labels are numbered by first appearance among the
/// valid responses, then invalid positions in order.
pub fn agglomerate(d: &DistanceMatrix, linkage: Linkage, threshold: f64) -> ClusterAssignment {
    let n = d.size();
    // Linkage state on the condensed upper triangle. For average linkage
    // the matrix holds sums of member distances, divided on comparison.
    let mut sum = d.entries.clone();
    let mut members: Vec<usize> = vec![1; n];
    let mut alive: Vec<bool> = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();

    let linkage_value = |sum: &[f64], members: &[usize], i: usize, j: usize| -> f64 {
        let v = sum[i * n + j];
        match linkage {
            Linkage::Average => v / (members[i] * members[j]) as f64,
            Linkage::Single | Linkage::Complete => v,
        }
    };

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let v = linkage_value(&sum, &members, i, j);
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((v, i, j)) = best else { break };
        if v > threshold {
            break;
        }
        // Merge j into i.
        for k in 0..n {
            if !alive[k] || k == i || k == j {
                continue;
            }
            let (ik, jk) = (sum[i * n + k], sum[j * n + k]);
            let merged = match linkage {
                Linkage::Single => ik.min(jk),
                Linkage::Complete => ik.max(jk),
                Linkage::Average => ik + jk,
            };
            sum[i * n + k] = merged;
            sum[k * n + i] = merged;
        }
        members[i] += members[j];
        alive[j] = false;
        parent[j] = i;
    }

    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let mut labels = vec![usize::MAX; d.positions()];
    let mut id_of_root: Vec<Option<usize>> = vec![None; n];
    let mut g = 0;
    for row in 0..n {
        let r = root(row);
        let id = *id_of_root[r].get_or_insert_with(|| {
            g += 1;
            g - 1
        });
        labels[d.valid_indices[row]] = id;
    }
    for &pos in &d.invalid_indices {
        labels[pos] = g;
        g += 1;
    }
    ClusterAssignment { labels, g }
}
