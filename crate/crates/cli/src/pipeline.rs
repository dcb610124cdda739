//! The five-step run: prompt, reformulate, sample, score, compare.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use log::{info, warn};
use rephrase_core::cluster::{agglomerate, response_distance_matrix};
use rephrase_core::datasets::{
    load_classification_csv, load_reactions, split_test, DatasetError, LoadStats,
};
use rephrase_core::eval::{
    classification_metrics, majority_vote, responses_digest, roc_auc, write_report, EvalError, LedgerEntry,
    ReportMetadata, RunReport, AUC_ORIENTATION,
};
use rephrase_core::fingerprint::{fnv1a64, DEFAULT_RADIUS, DEFAULT_WIDTH, FORMAT_VERSION};
use rephrase_core::molgraph::{canonical_smiles, enumerate_variants, parse_smiles};
use rephrase_core::prompts::{
    parse_answer, render_property_prompt, AnswerFormat, render_reaction_prompt, IclPool, IclRecord, PropertyTask, Template,
};
use rephrase_core::uq::{
    answer_entropy, cluster_entropy, input_uncertainty_report, Answer, Arm, InputUncertaintyReport, SampleSet,
    UncertaintyKind, UncertaintyRecord, LOG_BASE,
};
use rephrase_llm::{
    ChatEndpoint, HttpEndpoint, LlmError, MockItem, MockOracle, MockReaction, ResponseCache, Sampler,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, TaskKind, UncertaintyChoice};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Configuration and input problems found before any sampling.
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Dataset(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Gold {
    Label(Answer),
    Product { raw: String, canonical: String },
}

#[derive(Debug, Clone)]
struct Item {
    /// Canonical form of the molecule or reactant set.
    key: String,
    /// As written in the dataset.
    text: String,
    gold: Gold,
}

#[derive(Debug, Clone, Serialize)]
struct ArmRun {
    arm: Arm,
    prompt_smiles: String,
    flags: Vec<String>,
    responses: Result<Vec<String>, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub test_items: usize,
    pub pool_size: usize,
    pub dataset_stats: LoadStats,
    pub failed_items: Vec<String>,
    pub invalid_only_items: BTreeMap<String, usize>,
}

pub struct PipelineOutcome {
    pub reports: Vec<RunReport>,
    pub ledger: Vec<LedgerEntry>,
    /// Keyed by sample count; empty unless both arms ran.
    pub input_uncertainty: BTreeMap<usize, InputUncertaintyReport>,
    pub summary: RunSummary,
    pub requests: usize,
    pub cache_hits: usize,
    pub output_dir: PathBuf,
}

impl PipelineOutcome {
    pub fn has_failures(&self) -> bool {
        !self.summary.failed_items.is_empty()
    }
}

struct Loaded {
    test: Vec<Item>,
    pool: Vec<IclRecord>,
    stats: LoadStats,
}

fn load(cfg: &RunConfig) -> Result<Loaded, PipelineError> {
    match cfg.task {
        TaskKind::Property => {
            let (smiles_col, label_col) = cfg.columns()?;
            let loaded = load_classification_csv(&cfg.dataset, &smiles_col, &label_col)?;
            let records = dedupe(loaded.records, |r| r.canonical.clone());
            let (test, pool) = split_test(&records, cfg.test_size, cfg.seeds.split)?;
            Ok(Loaded {
                test: test
                    .into_iter()
                    .map(|r| Item {
                        key: r.canonical,
                        text: r.smiles,
                        gold: Gold::Label(r.label),
                    })
                    .collect(),
                pool: pool
                    .into_iter()
                    .map(|r| IclRecord {
                        answer: r.label.label().to_string(),
                        label: Some(r.label.label().to_string()),
                        input: r.smiles,
                        canonical: r.canonical,
                    })
                    .collect(),
                stats: loaded.stats,
            })
        }
        TaskKind::Reaction => {
            let loaded = load_reactions(&cfg.dataset)?;
            let records = dedupe(loaded.records, |r| r.canonical_reactants.clone());
            let (test, pool) = split_test(&records, cfg.test_size, cfg.seeds.split)?;
            Ok(Loaded {
                test: test
                    .into_iter()
                    .map(|r| Item {
                        key: r.canonical_reactants,
                        text: r.reactants,
                        gold: Gold::Product {
                            raw: r.product,
                            canonical: r.canonical_product,
                        },
                    })
                    .collect(),
                pool: pool
                    .into_iter()
                    .map(|r| IclRecord {
                        input: r.reactants,
                        answer: r.product,
                        canonical: r.canonical_reactants,
                        label: None,
                    })
                    .collect(),
                stats: loaded.stats,
            })
        }
    }
}

/// Keeps the first record per canonical key so every test item has a
/// unique identity across arms.
fn dedupe<T>(records: Vec<T>, key: impl Fn(&T) -> String) -> Vec<T> {
    let before = records.len();
    let mut seen = HashSet::new();
    let out: Vec<T> = records.into_iter().filter(|r| seen.insert(key(r))).collect();
    if out.len() < before {
        info!("dropped {} repeated molecules before splitting", before - out.len());
    }
    out
}

fn mock_endpoint(cfg: &RunConfig, items: &[Item]) -> Option<Arc<dyn ChatEndpoint>> {
    let mock = cfg.mock.as_ref()?;
    let reformed = mock.p_err_reformed.as_ref().unwrap_or(&mock.p_err);
    let rate = |list: &[f64], i: usize| list[i % list.len()];
    let oracle = match cfg.task {
        TaskKind::Property => MockOracle::noisy_classifier(
            items
                .iter()
                .enumerate()
                .filter_map(|(i, it)| match &it.gold {
                    Gold::Label(label) => Some(MockItem {
                        smiles: it.text.clone(),
                        gold: label.clone(),
                        p_err_original: rate(&mock.p_err, i),
                        p_err_reformed: rate(reformed, i),
                    }),
                    Gold::Product { .. } => None,
                })
                .collect(),
            cfg.seeds.mock,
        ),
        TaskKind::Reaction => MockOracle::template_reactor(
            items
                .iter()
                .enumerate()
                .filter_map(|(i, it)| match &it.gold {
                    Gold::Product { raw, .. } => Some(MockReaction {
                        reactants: it.text.clone(),
                        product: raw.clone(),
                        p_err_original: rate(&mock.p_err, i),
                        p_err_reformed: rate(reformed, i),
                    }),
                    Gold::Label(_) => None,
                })
                .collect(),
            cfg.seeds.mock,
        ),
    };
    Some(Arc::new(
        oracle.with_rank_preference(mock.rank_preference).with_name(&mock.model_name),
    ))
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    sampler: Sampler,
    question: Template,
    rank: Template,
    pool: IclPool,
    property: PropertyTask,
}

impl Runner<'_> {
    fn prompt_text(&self, item: &Item, target: &str) -> Result<String, String> {
        let seed = self.cfg.seeds.icl ^ fnv1a64(item.key.as_bytes());
        let icl = self
            .pool
            .select(self.cfg.k, seed, &item.key, self.cfg.icl_strategy)
            .map_err(|e| e.to_string())?;
        let pairs: Vec<(String, String)> = icl.into_iter().map(|r| (r.input, r.answer)).collect();
        Ok(match self.cfg.task {
            TaskKind::Property => render_property_prompt(&self.question, target, &pairs, &self.property).text,
            TaskKind::Reaction => render_reaction_prompt(&self.question, target, &pairs).text,
        })
    }

    /// Picks the reformulated input: the best-ranked variant when there are
    /// several, the only one when there is one, the original otherwise.
    fn reformulate(&self, item: &Item, flags: &mut Vec<String>) -> Result<String, String> {
        let mol = parse_smiles(&item.text).map_err(|e| e.to_string())?;
        let seed = self.cfg.seeds.enumeration ^ fnv1a64(item.key.as_bytes());
        let variants = enumerate_variants(&mol, self.cfg.n, seed);
        match variants.len() {
            0 => {
                flags.push("variant_fallback".into());
                Ok(item.text.clone())
            }
            1 => {
                flags.push("single_variant".into());
                Ok(variants.variants[0].clone())
            }
            _ => {
                let ranked = self.sampler.rank_variants(&variants, &self.rank).map_err(|e| e.to_string())?;
                if ranked.rank_fallback {
                    flags.push("rank_fallback".into());
                }
                Ok(ranked.best)
            }
        }
    }

    fn run_arm(&self, item: &Item, arm: Arm) -> ArmRun {
        let mut flags = Vec::new();
        let target = match arm {
            Arm::Original => Ok(item.text.clone()),
            Arm::Reformed => self.reformulate(item, &mut flags),
        };
        let prompt_smiles = target.clone().unwrap_or_else(|_| item.text.clone());
        let responses = target
            .and_then(|t| self.prompt_text(item, &t))
            .and_then(|p| self.sampler.sample(&p, self.cfg.max_m()).map_err(|e| e.to_string()));
        if let Err(e) = &responses {
            warn!("item {} ({arm}) failed: {e}", item.key);
        }
        ArmRun {
            arm,
            prompt_smiles,
            flags,
            responses,
        }
    }
}

struct Scored {
    parsed: Vec<Answer>,
    prediction: Answer,
    correct: bool,
    raw_correct: Option<bool>,
    score: f64,
    cluster_sizes: Option<Vec<usize>>,
}

fn canonical_answer(a: &Answer) -> Answer {
    match a {
        Answer::Smiles(s) => parse_smiles(s).map_or(Answer::Invalid, |m| Answer::Smiles(canonical_smiles(&m))),
        other => other.clone(),
    }
}

fn score(cfg: &RunConfig, item: &Item, responses: &[String]) -> Scored {
    match &item.gold {
        Gold::Label(gold) => {
            let parsed: Vec<Answer> = responses.iter().map(|r| parse_answer(r, AnswerFormat::YesNo)).collect();
            let prediction = majority_vote(&parsed);
            Scored {
                correct: &prediction == gold,
                score: answer_entropy(&parsed),
                parsed,
                prediction,
                raw_correct: None,
                cluster_sizes: None,
            }
        }
        Gold::Product { raw, canonical } => {
            let parsed: Vec<Answer> = responses.iter().map(|r| parse_answer(r, AnswerFormat::Smiles)).collect();
            let canon: Vec<Answer> = parsed.iter().map(canonical_answer).collect();
            let prediction = majority_vote(&canon);
            let raw_prediction = majority_vote(&parsed);
            let (score, cluster_sizes) = match cfg.uncertainty_kind() {
                UncertaintyChoice::Class => (answer_entropy(&canon), None),
                UncertaintyChoice::Cluster => {
                    let texts: Vec<&str> = parsed
                        .iter()
                        .map(|a| match a {
                            Answer::Smiles(s) => s.as_str(),
                            _ => "",
                        })
                        .collect();
                    let d = response_distance_matrix(&texts);
                    let assignment = agglomerate(&d, cfg.cluster.linkage, cfg.cluster.threshold);
                    (cluster_entropy(&assignment), Some(assignment.sizes()))
                }
            };
            Scored {
                correct: prediction == Answer::Smiles(canonical.clone()),
                raw_correct: Some(raw_prediction == Answer::Smiles(raw.clone())),
                prediction,
                parsed,
                score,
                cluster_sizes,
            }
        }
    }
}

struct ArmRow<'a> {
    item: &'a Item,
    run: &'a ArmRun,
    scored: Scored,
}

pub fn run_pipeline(cfg: &RunConfig, endpoint: Option<Arc<dyn ChatEndpoint>>) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let (question, rank) = cfg.templates()?;
    let Loaded { mut test, pool, stats } = load(cfg)?;
    test.sort_by(|a, b| a.key.cmp(&b.key));
    info!("{} test items, {} pool records", test.len(), pool.len());

    let endpoint: Arc<dyn ChatEndpoint> = match endpoint.or_else(|| mock_endpoint(cfg, &test)) {
        Some(e) => e,
        None => Arc::new(HttpEndpoint::new(&cfg.endpoint)?),
    };
    let cache = Arc::new(ResponseCache::open(&cfg.cache_path())?);
    let runner = Runner {
        cfg,
        sampler: Sampler::new(Arc::clone(&endpoint), cache, cfg.endpoint.clone())?,
        question,
        rank,
        pool: IclPool::new(pool),
        property: PropertyTask::named(&cfg.dataset_name),
    };

    let arms: Vec<Arm> = [(cfg.arm.original(), Arm::Original), (cfg.arm.reformed(), Arm::Reformed)]
        .into_iter()
        .filter_map(|(on, arm)| on.then_some(arm))
        .collect();
    let mut ms = cfg.m.clone();
    ms.sort_unstable();
    ms.dedup();

    let runs: Vec<(usize, ArmRun)> = test
        .iter()
        .enumerate()
        .flat_map(|(i, item)| arms.iter().map(move |&arm| (i, item, arm)))
        .map(|(i, item, arm)| (i, runner.run_arm(item, arm)))
        .collect();
    let failed: BTreeSet<&str> = runs
        .iter()
        .filter(|(_, r)| r.responses.is_err())
        .map(|(i, _)| test[*i].key.as_str())
        .collect();

    let mut ledger = Vec::new();
    let mut rows: BTreeMap<(Arm, usize), Vec<ArmRow>> = BTreeMap::new();
    for (i, run) in &runs {
        let item = &test[*i];
        for &m in &ms {
            let responses = match &run.responses {
                Ok(r) => r,
                Err(e) => {
                    ledger.push(LedgerEntry {
                        item: item.key.clone(),
                        arm: run.arm,
                        m,
                        responses_digest: String::new(),
                        parsed_answers: Vec::new(),
                        cluster_sizes: None,
                        u: None,
                        correct: None,
                        prompt_smiles: run.prompt_smiles.clone(),
                        flags: run.flags.clone(),
                        error: Some(e.clone()),
                    });
                    continue;
                }
            };
            let prefix = &responses[..m];
            let scored = score(cfg, item, prefix);
            ledger.push(LedgerEntry {
                item: item.key.clone(),
                arm: run.arm,
                m,
                responses_digest: responses_digest(prefix),
                parsed_answers: scored.parsed.iter().map(|a| a.label().to_string()).collect(),
                cluster_sizes: scored.cluster_sizes.clone(),
                u: Some(scored.score),
                correct: Some(scored.correct),
                prompt_smiles: run.prompt_smiles.clone(),
                flags: run.flags.clone(),
                error: None,
            });
            if !failed.contains(item.key.as_str()) {
                rows.entry((run.arm, m)).or_default().push(ArmRow { item, run, scored });
            }
        }
    }

    let kind = match cfg.uncertainty_kind() {
        UncertaintyChoice::Class => UncertaintyKind::ClassEntropy,
        UncertaintyChoice::Cluster => UncertaintyKind::ClusterEntropy,
    };
    let records = |arm: Arm, m: usize| -> Vec<UncertaintyRecord> {
        rows.get(&(arm, m))
            .map(|rs| {
                rs.iter()
                    .map(|r| UncertaintyRecord {
                        item: r.item.key.clone(),
                        score: r.scored.score,
                        kind,
                        correct: r.scored.correct,
                        m,
                    })
                    .collect()
            })
            .unwrap_or_default()
    };

    let model = runner.sampler.model_name().to_string();
    let metadata = metadata(cfg, &model);
    let dataset = if cfg.dataset_name.is_empty() {
        cfg.dataset.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
    } else {
        cfg.dataset_name.clone()
    };
    let mut reports = Vec::new();
    let mut invalid_only_items = BTreeMap::new();
    for &arm in &arms {
        let auc_by_m: BTreeMap<usize, Option<f64>> =
            ms.iter().map(|&m| (m, roc_auc(&records(arm, m)).ok().map(|r| r.auc))).collect();
        for &m in &ms {
            let empty = Vec::new();
            let arm_rows = rows.get(&(arm, m)).unwrap_or(&empty);
            let n = arm_rows.len();
            let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
            let invalid_only = arm_rows.iter().filter(|r| r.scored.parsed.iter().all(|a| !a.is_valid())).count();
            invalid_only_items.insert(format!("{arm}-m{m}"), invalid_only);
            let f1 = match cfg.task {
                TaskKind::Property => {
                    let preds: Vec<Answer> = arm_rows.iter().map(|r| r.scored.prediction.clone()).collect();
                    let gold: Vec<Answer> = arm_rows
                        .iter()
                        .map(|r| match &r.item.gold {
                            Gold::Label(a) => a.clone(),
                            Gold::Product { .. } => Answer::Invalid,
                        })
                        .collect();
                    Some(classification_metrics(&preds, &gold)?.f1)
                }
                TaskKind::Reaction => None,
            };
            let raw_accuracy = match cfg.task {
                TaskKind::Reaction => Some(rate(arm_rows.iter().filter(|r| r.scored.raw_correct == Some(true)).count())),
                TaskKind::Property => None,
            };
            reports.push(RunReport {
                dataset: dataset.clone(),
                arm,
                method: format!("{model} + {}", if arm == Arm::Original { "Orig." } else { "Reform." }),
                m,
                items: n,
                accuracy: rate(arm_rows.iter().filter(|r| r.scored.correct).count()),
                raw_accuracy,
                f1,
                mean_entropy: if n == 0 { 0.0 } else { arm_rows.iter().map(|r| r.scored.score).sum::<f64>() / n as f64 },
                invalid_only_items: invalid_only,
                auc_by_m: auc_by_m.clone(),
                roc: roc_auc(&records(arm, m)).ok(),
                metadata: metadata.clone(),
            });
        }
    }

    let mut input_uncertainty = BTreeMap::new();
    if arms.len() == 2 {
        for &m in &ms {
            let pairs = |arm: Arm| -> Vec<(SampleSet, UncertaintyRecord)> {
                let recs = records(arm, m);
                rows.get(&(arm, m))
                    .map(|rs| {
                        rs.iter()
                            .zip(recs)
                            .map(|(r, rec)| {
                                let responses = r.run.responses.as_ref().map(|v| v[..m].to_vec()).unwrap_or_default();
                                let set = SampleSet {
                                    task: cfg.task,
                                    item: r.item.key.clone(),
                                    prompt_variant: arm,
                                    prompt_smiles: r.run.prompt_smiles.clone(),
                                    responses,
                                    parsed: r.scored.parsed.clone(),
                                };
                                (set, rec)
                            })
                            .collect()
                    })
                    .unwrap_or_default()
            };
            match input_uncertainty_report(&pairs(Arm::Original), &pairs(Arm::Reformed)) {
                Ok(report) => {
                    input_uncertainty.insert(m, report);
                }
                Err(e) => warn!("no input-uncertainty report at m={m}: {e}"),
            }
        }
    }

    let summary = RunSummary {
        test_items: test.len(),
        pool_size: runner.pool.len(),
        dataset_stats: stats,
        failed_items: failed.iter().map(|s| s.to_string()).collect(),
        invalid_only_items,
    };
    let run_json = serde_json::json!({
        "config": cfg,
        "summary": summary,
        "input_uncertainty": input_uncertainty,
    });
    write_report(&cfg.output_dir, &reports, &ledger, &run_json)?;
    std::fs::write(
        cfg.output_dir.join("input_uncertainty.json"),
        serde_json::to_string_pretty(&input_uncertainty).map_err(|e| EvalError::Io(std::io::Error::other(e)))? + "\n",
    )
    .map_err(EvalError::Io)?;
    std::fs::write(cfg.output_dir.join("tables.txt"), crate::render_tables(&reports, &input_uncertainty))
        .map_err(EvalError::Io)?;

    Ok(PipelineOutcome {
        reports,
        ledger,
        input_uncertainty,
        summary,
        requests: runner.sampler.requests(),
        cache_hits: runner.sampler.cache_hits(),
        output_dir: cfg.output_dir.clone(),
    })
}

fn metadata(cfg: &RunConfig, model: &str) -> ReportMetadata {
    let clustered = cfg.uncertainty_kind() == UncertaintyChoice::Cluster;
    let mut extra = BTreeMap::new();
    extra.insert("task".to_string(), format!("{:?}", cfg.task).to_lowercase());
    extra.insert("icl_strategy".to_string(), format!("{:?}", cfg.icl_strategy).to_lowercase());
    extra.insert("k".to_string(), cfg.k.to_string());
    extra.insert("n".to_string(), cfg.n.to_string());
    extra.insert("test_size".to_string(), cfg.test_size.to_string());
    extra.insert("rank_temperature".to_string(), cfg.endpoint.rank_temperature.to_string());
    extra.insert("prediction".to_string(), "majority vote over samples, ties invalid".to_string());
    if let Ok((s, l)) = cfg.columns() {
        if cfg.task == TaskKind::Property {
            extra.insert("smiles_column".to_string(), s);
            extra.insert("label_column".to_string(), l);
        }
    }
    if cfg.mock.is_some() {
        extra.insert("endpoint".to_string(), "mock oracle".to_string());
    }
    ReportMetadata {
        model: model.to_string(),
        temperature: cfg.endpoint.temperature,
        seeds: cfg.seeds.as_map(),
        log_base: LOG_BASE.to_string(),
        auc_orientation: AUC_ORIENTATION.to_string(),
        uncertainty: if clustered { "cluster_entropy" } else { "class_entropy" }.to_string(),
        cluster_threshold: clustered.then_some(cfg.cluster.threshold),
        linkage: clustered.then(|| format!("{:?}", cfg.cluster.linkage).to_lowercase()),
        fingerprint_format: clustered.then(|| format!("{FORMAT_VERSION}:{DEFAULT_RADIUS}:{DEFAULT_WIDTH}")),
        extra,
    }
}
