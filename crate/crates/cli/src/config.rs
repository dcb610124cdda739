//! Run configuration: a TOML file overridden by command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rephrase_core::cluster::{Linkage, DEFAULT_THRESHOLD};
use rephrase_core::datasets::DatasetPreset;
use rephrase_core::prompts::{IclStrategy, Template, DEFAULT_K};
pub use rephrase_core::uq::TaskKind;
use rephrase_llm::{EndpointConfig, RankPreference};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, String),
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmChoice {
    Original,
    Reformed,
    #[default]
    Both,
}

impl ArmChoice {
    pub fn original(self) -> bool {
        matches!(self, ArmChoice::Original | ArmChoice::Both)
    }

    pub fn reformed(self) -> bool {
        matches!(self, ArmChoice::Reformed | ArmChoice::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyChoice {
    Class,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub icl: u64,
    pub enumeration: u64,
    pub mock: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 42,
            icl: 7,
            enumeration: 11,
            mock: 1234,
        }
    }
}

impl Seeds {
    pub fn as_map(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("split".to_string(), self.split),
            ("icl".to_string(), self.icl),
            ("enumeration".to_string(), self.enumeration),
            ("mock".to_string(), self.mock),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub threshold: f64,
    pub linkage: Linkage,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            threshold: DEFAULT_THRESHOLD,
            linkage: Linkage::Average,
        }
    }
}

/// Offline oracle settings. Error rates are assigned to test items
/// round-robin in canonical-SMILES order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub p_err: Vec<f64>,
    /// Defaults to `p_err`.
    pub p_err_reformed: Option<Vec<f64>>,
    pub rank_preference: RankPreference,
    pub model_name: String,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            p_err: vec![0.1],
            p_err_reformed: None,
            rank_preference: RankPreference::Shortest,
            model_name: "mock".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    pub dataset: PathBuf,
    /// Preset name (bace, bbbp, hiv, clintox, tox21) or free text; also
    /// chooses the property wording in prompts.
    pub dataset_name: String,
    pub smiles_column: Option<String>,
    pub label_column: Option<String>,
    pub arm: ArmChoice,
    pub m: Vec<usize>,
    pub n: usize,
    pub k: usize,
    pub test_size: usize,
    pub icl_strategy: IclStrategy,
    /// Defaults to class entropy for property tasks and cluster entropy
    /// for reactions.
    pub uncertainty: Option<UncertaintyChoice>,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache.jsonl`.
    pub cache: Option<PathBuf>,
    pub property_template: Option<PathBuf>,
    pub reaction_template: Option<PathBuf>,
    pub rank_template: Option<PathBuf>,
    pub seeds: Seeds,
    pub cluster: ClusterConfig,
    pub endpoint: EndpointConfig,
    /// When present the run uses the offline oracle instead of `endpoint`.
    pub mock: Option<MockConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Property,
            dataset: PathBuf::new(),
            dataset_name: String::new(),
            smiles_column: None,
            label_column: None,
            arm: ArmChoice::Both,
            m: vec![5],
            n: 5,
            k: DEFAULT_K,
            test_size: 100,
            icl_strategy: IclStrategy::Diverse,
            uncertainty: None,
            output_dir: PathBuf::from("out"),
            cache: None,
            property_template: None,
            reaction_template: None,
            rank_template: None,
            seeds: Seeds::default(),
            cluster: ClusterConfig::default(),
            endpoint: EndpointConfig::default(),
            mock: None,
        }
    }
}

/// Relative paths in a config file are taken relative to the file.
fn rebase(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.dataset);
        rebase(base, &mut cfg.output_dir);
        for p in [&mut cfg.cache, &mut cfg.property_template, &mut cfg.reaction_template, &mut cfg.rank_template]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        Ok(cfg)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.output_dir.join("cache.jsonl"))
    }

    pub fn uncertainty_kind(&self) -> UncertaintyChoice {
        self.uncertainty.unwrap_or(match self.task {
            TaskKind::Property => UncertaintyChoice::Class,
            TaskKind::Reaction => UncertaintyChoice::Cluster,
        })
    }

    /// Column names from explicit settings, else from the dataset preset.
    pub fn columns(&self) -> Result<(String, String), ConfigError> {
        let preset = DatasetPreset::named(&self.dataset_name);
        let smiles = self
            .smiles_column
            .clone()
            .or_else(|| preset.as_ref().map(|p| p.smiles_column.clone()))
            .unwrap_or_else(|| "smiles".to_string());
        let label = self
            .label_column
            .clone()
            .or_else(|| preset.map(|p| p.label_column))
            .ok_or_else(|| ConfigError::Invalid(format!("no label_column and no preset named '{}'", self.dataset_name)))?;
        Ok((smiles, label))
    }

    pub fn max_m(&self) -> usize {
        self.m.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !self.dataset.is_file() {
            return bad(format!("dataset {} does not exist", self.dataset.display()));
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("m must list sample counts ≥ 1".into());
        }
        if self.n == 0 || self.k == 0 || self.test_size == 0 {
            return bad("n, k and test_size must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.cluster.threshold) {
            return bad("cluster.threshold must lie in [0, 1]".into());
        }
        if self.task == TaskKind::Property {
            self.columns()?;
            if self.uncertainty_kind() == UncertaintyChoice::Cluster {
                return bad("cluster entropy needs SMILES answers; use class entropy for property tasks".into());
            }
        }
        for p in [&self.property_template, &self.reaction_template, &self.rank_template].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("template {} does not exist", p.display()));
            }
        }
        self.templates()?;
        if let Some(mock) = &self.mock {
            let all = mock.p_err.iter().chain(mock.p_err_reformed.iter().flatten());
            if mock.p_err.is_empty() || all.clone().any(|p| !(0.0..=1.0).contains(p)) {
                return bad("mock error rates must be a non-empty list within [0, 1]".into());
            }
        } else {
            self.endpoint.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// The question template for the task and the ranking template.
    pub fn templates(&self) -> Result<(Template, Template), ConfigError> {
        let read = |p: &PathBuf| fs::read_to_string(p).map_err(|e| ConfigError::Read(p.clone(), e.to_string()));
        let invalid = |e: rephrase_core::prompts::PromptError| ConfigError::Invalid(e.to_string());
        let question = match (self.task, &self.property_template, &self.reaction_template) {
            (TaskKind::Property, Some(p), _) => Template::property(read(p)?).map_err(invalid)?,
            (TaskKind::Property, None, _) => Template::default_property(),
            (TaskKind::Reaction, _, Some(p)) => Template::reaction(read(p)?).map_err(invalid)?,
            (TaskKind::Reaction, _, None) => Template::default_reaction(),
        };
        let rank = match &self.rank_template {
            Some(p) => Template::rank(read(p)?).map_err(invalid)?,
            None => Template::default_rank(),
        };
        Ok((question, rank))
    }
}
