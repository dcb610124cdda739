//! Loaders for binary-property CSV files and reaction SMILES files, plus
//! seeded test/pool splitting.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{canonical_smiles, parse_smiles};
use crate::uq::Answer;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {message}")]
    FileError { path: PathBuf, message: String },
    #[error("{path}: column '{column}' not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("asked for {requested} test records but only {available} exist")]
    TooFewRecords { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub smiles: String,
    /// `Answer::Yes` or `Answer::No`.
    pub label: Answer,
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionRecord {
    /// Dot-separated reactants, with any reagents merged in.
    pub reactants: String,
    pub product: String,
    pub canonical_product: String,
    pub canonical_reactants: String,
}

/// Anything that can be split by canonical identity.
pub trait CanonicalKey {
    fn canonical_key(&self) -> &str;
}

impl CanonicalKey for ClassificationRecord {
    fn canonical_key(&self) -> &str {
        &self.canonical
    }
}

impl CanonicalKey for ReactionRecord {
    fn canonical_key(&self) -> &str {
        &self.canonical_reactants
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub rows: usize,
    pub skipped_smiles: usize,
    pub skipped_labels: usize,
    /// Records whose canonical form already appeared earlier in the file.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub stats: LoadStats,
}

/// Column names for the standard benchmark files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPreset {
    pub name: String,
    pub smiles_column: String,
    pub label_column: String,
}

impl DatasetPreset {
    pub fn named(name: &str) -> Option<DatasetPreset> {
        let (s, l) = match name.to_ascii_lowercase().as_str() {
            "bace" => ("mol", "Class"),
            "bbbp" => ("smiles", "p_np"),
            "hiv" => ("smiles", "HIV_active"),
            "clintox" => ("smiles", "CT_TOX"),
            "tox21" => ("smiles", "NR-AR"),
            _ => return None,
        };
        Some(DatasetPreset {
            name: name.to_ascii_lowercase(),
            smiles_column: s.to_string(),
            label_column: l.to_string(),
        })
    }
}

fn file_error(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::FileError {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn binary_label(raw: &str) -> Option<Answer> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Some(Answer::Yes),
        "0" | "0.0" | "false" | "no" => Some(Answer::No),
        _ => None,
    }
}

/// Reads a comma-separated file with a header row. Rows whose SMILES does
/// not parse or whose label is blank or not binary are skipped and counted.
pub fn load_classification_csv(
    path: &Path,
    smiles_column: &str,
    label_column: &str,
) -> Result<Loaded<ClassificationRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| file_error(path, e))?;
    let headers = reader.headers().map_err(|e| file_error(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (si, li) = (column(smiles_column)?, column(label_column)?);

    let mut stats = LoadStats::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| file_error(path, e))?;
        stats.rows += 1;
        let smiles = row.get(si).unwrap_or("").trim();
        let Some(label) = binary_label(row.get(li).unwrap_or("")) else {
            stats.skipped_labels += 1;
            continue;
        };
        let Ok(mol) = parse_smiles(smiles) else {
            stats.skipped_smiles += 1;
            continue;
        };
        let canonical = canonical_smiles(&mol);
        if !seen.insert(canonical.clone()) {
            stats.duplicates += 1;
        }
        records.push(ClassificationRecord {
            smiles: smiles.to_string(),
            label,
            canonical,
        });
    }
    if stats.duplicates > 0 {
        warn!("{}: {} rows repeat an earlier molecule", path.display(), stats.duplicates);
    }
    Ok(Loaded { records, stats })
}

/// Parses one `reactants>>product` or `reactants>reagents>product` string.
pub fn parse_reaction(text: &str) -> Option<ReactionRecord> {
    let parts: Vec<&str> = text.split('>').collect();
    let [reactants, reagents, product] = parts[..] else { return None };
    let reactants = if reagents.is_empty() {
        reactants.to_string()
    } else if reactants.is_empty() {
        reagents.to_string()
    } else {
        format!("{reactants}.{reagents}")
    };
    let r = parse_smiles(&reactants).ok()?;
    let p = parse_smiles(product).ok()?;
    if p.component_count() != 1 || r.atom_count() == 0 {
        return None;
    }
    Some(ReactionRecord {
        canonical_reactants: canonical_smiles(&r),
        canonical_product: canonical_smiles(&p),
        reactants,
        product: product.to_string(),
    })
}

/// One reaction per line; only the first whitespace-separated field is
/// read, so trailing columns are ignored. Blank lines are not counted.
pub fn load_reactions(path: &Path) -> Result<Loaded<ReactionRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let mut stats = LoadStats::default();
    let mut records = Vec::new();
    for line in text.lines() {
        let Some(token) = line.split_whitespace().next() else { continue };
        stats.rows += 1;
        match parse_reaction(token) {
            Some(r) => records.push(r),
            None => stats.skipped_smiles += 1,
        }
    }
    Ok(Loaded { records, stats })
}

/// Seeded uniform sample of `test_size` records without replacement. Test
/// records keep file order; the pool is the remainder minus anything that
/// shares a canonical form with a test record.
pub fn split_test<T: CanonicalKey + Clone>(
    records: &[T],
    test_size: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if test_size > records.len() {
        return Err(DatasetError::TooFewRecords {
            requested: test_size,
            available: records.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, records.len(), test_size).into_vec();
    picked.sort_unstable();
    let in_test: HashSet<usize> = picked.iter().copied().collect();
    let test: Vec<T> = picked.iter().map(|&i| records[i].clone()).collect();
    let test_keys: HashSet<&str> = test.iter().map(CanonicalKey::canonical_key).collect();
    let pool = records
        .iter()
        .enumerate()
        .filter(|(i, r)| !in_test.contains(i) && !test_keys.contains(r.canonical_key()))
        .map(|(_, r)| r.clone())
        .collect();
    Ok((test, pool))
}

/// Row counts, label balance and skip counts for a classification file.
pub fn describe_classification(name: &str, loaded: &Loaded<ClassificationRecord>) -> String {
    let yes = loaded.records.iter().filter(|r| r.label == Answer::Yes).count();
    let s = &loaded.stats;
    format!(
        "{name}: {} rows, {} records ({} Yes / {} No), skipped {} bad SMILES and {} bad labels, {} duplicates",
        s.rows,
        loaded.records.len(),
        yes,
        loaded.records.len() - yes,
        s.skipped_smiles,
        s.skipped_labels,
        s.duplicates
    )
}

pub fn describe_reactions(name: &str, loaded: &Loaded<ReactionRecord>) -> String {
    format!(
        "{name}: {} lines, {} reactions, skipped {}",
        loaded.stats.rows,
        loaded.records.len(),
        loaded.stats.skipped_smiles
    )
}
