//! Bookkeeping, replay, fallback and resume behavior of full runs.

mod common;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rephrase_cli::{run_pipeline, ArmChoice, MockConfig, RunConfig, TaskKind};
use rephrase_core::uq::Arm;
use rephrase_llm::{ChatEndpoint, Completion, LlmError, MockItem, MockOracle};

fn property_config(dir: &Path, items: usize) -> RunConfig {
    let data = dir.join("data.csv");
    common::write_property_csv(&data, items + 20);
    RunConfig {
        dataset: data,
        label_column: Some("label".into()),
        dataset_name: "bbbp".into(),
        test_size: items,
        m: vec![5],
        output_dir: dir.join("out"),
        mock: Some(MockConfig { p_err: vec![0.1, 0.3], ..Default::default() }),
        ..Default::default()
    }
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "cache.jsonl")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn ten_items_two_arms_give_twenty_sample_sets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = property_config(dir.path(), 10);
    let out = run_pipeline(&cfg, None).unwrap();
    assert_eq!(out.ledger.len(), 20);
    assert_eq!(out.ledger.iter().filter(|e| e.arm == Arm::Reformed).count(), 10);
    assert_eq!(out.reports.len(), 2);
    assert!(out.input_uncertainty.contains_key(&5));
    assert!(!out.has_failures());
    // 5 samples per arm plus at most one ranking request per item.
    assert!(out.requests <= 10 * (5 + 1) * 2);
    for f in ["report.json", "report.csv", "ledger.jsonl", "input_uncertainty.json", "tables.txt"] {
        assert!(cfg.output_dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn rerun_replays_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = property_config(dir.path(), 10);
    run_pipeline(&cfg, None).unwrap();
    let first = outputs(&cfg.output_dir);
    let offline = Arc::new(common::Counting::new("mock"));
    let again = run_pipeline(&cfg, Some(offline.clone())).unwrap();
    assert_eq!(offline.calls(), 0);
    assert_eq!(again.requests, 0);
    assert_eq!(outputs(&cfg.output_dir), first);
}

#[test]
fn single_atom_item_falls_back_to_its_original_writing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    fs::write(&data, "smiles,label\nC,1\nCCO,0\nCCN,1\nCCCl,0\n").unwrap();
    let cfg = RunConfig {
        dataset: data,
        label_column: Some("label".into()),
        test_size: 1,
        n: 1,
        arm: ArmChoice::Reformed,
        output_dir: dir.path().join("out"),
        mock: Some(MockConfig::default()),
        ..Default::default()
    };
    // Pick the split seed that puts methane in the test set.
    let cfg = (0..200)
        .map(|s| RunConfig { seeds: rephrase_cli::Seeds { split: s, ..cfg.seeds }, ..cfg.clone() })
        .find(|c| run_pipeline(c, None).unwrap().ledger[0].item == "C")
        .expect("some seed selects methane");
    let out = run_pipeline(&cfg, None).unwrap();
    let entry = &out.ledger[0];
    assert_eq!(entry.prompt_smiles, "C");
    assert_eq!(entry.flags, vec!["variant_fallback"]);
}

/// Fails after a fixed number of calls, as if the process had died.
struct Flaky {
    inner: MockOracle,
    budget: AtomicUsize,
}

impl ChatEndpoint for Flaky {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn complete(&self, prompt: &str, t: f64, i: usize) -> Result<Completion, LlmError> {
        if self.budget.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |b| b.checked_sub(1)).is_err() {
            return Err(LlmError::EndpointUnreachable { attempts: 1, message: "killed".into() });
        }
        self.inner.complete(prompt, t, i)
    }
}

#[test]
fn interrupted_run_converges_after_restart() {
    let clean_dir = tempfile::tempdir().unwrap();
    let clean_cfg = property_config(clean_dir.path(), 8);
    let clean = run_pipeline(&clean_cfg, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cfg = property_config(dir.path(), 8);
    let flaky = Arc::new(Flaky {
        inner: oracle_for(&cfg),
        budget: AtomicUsize::new(23),
    });
    let partial = run_pipeline(&cfg, Some(flaky)).unwrap();
    assert!(partial.has_failures());
    let resumed = run_pipeline(&cfg, None).unwrap();
    assert!(!resumed.has_failures());
    let strip = |p: &Path| fs::read_to_string(p.join("ledger.jsonl")).unwrap();
    assert_eq!(strip(&cfg.output_dir), strip(&clean_cfg.output_dir));
    assert_eq!(resumed.reports.len(), clean.reports.len());
}

/// Rebuilds the oracle the pipeline would construct from the config.
fn oracle_for(cfg: &RunConfig) -> MockOracle {
    let probe = run_pipeline(
        &RunConfig { output_dir: cfg.output_dir.join("probe"), ..cfg.clone() },
        None,
    )
    .unwrap();
    let mut items = Vec::new();
    let rates = &cfg.mock.as_ref().unwrap().p_err;
    let text = fs::read_to_string(&cfg.dataset).unwrap();
    let mut keys: Vec<String> = probe.ledger.iter().map(|e| e.item.clone()).collect();
    keys.dedup();
    for (i, key) in keys.iter().enumerate() {
        let line = text.lines().find(|l| l.split(',').next() == Some(key.as_str())).unwrap();
        let label = if line.ends_with(",1") { rephrase_core::uq::Answer::Yes } else { rephrase_core::uq::Answer::No };
        let p = rates[i % rates.len()];
        items.push(MockItem { smiles: key.clone(), gold: label, p_err_original: p, p_err_reformed: p });
    }
    fs::remove_dir_all(cfg.output_dir.join("probe")).unwrap();
    MockOracle::noisy_classifier(items, cfg.seeds.mock)
}

#[test]
fn reaction_run_uses_cluster_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rxn.txt");
    common::write_reactions(&data, 40);
    let cfg = RunConfig {
        task: TaskKind::Reaction,
        dataset: data,
        test_size: 10,
        m: vec![3, 10],
        output_dir: dir.path().join("out"),
        mock: Some(MockConfig { p_err: vec![0.0, 0.6], ..Default::default() }),
        ..Default::default()
    };
    let out = run_pipeline(&cfg, None).unwrap();
    assert_eq!(out.reports.len(), 4);
    assert!(out.ledger.iter().all(|e| e.cluster_sizes.is_some()));
    let r = &out.reports[0];
    assert!(r.raw_accuracy.is_some() && r.f1.is_none());
    assert_eq!(r.auc_by_m.keys().copied().collect::<Vec<_>>(), vec![3, 10]);
    assert_eq!(r.metadata.uncertainty, "cluster_entropy");
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_rephrase");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "dataset = \"missing.csv\"\nlabel_column = \"y\"\n[mock]\np_err = [0.1]\n").unwrap();
    let status = std::process::Command::new(exe).args(["uq", "run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(status.status.code(), Some(2));

    let cfg = property_config(dir.path(), 6);
    let good = dir.path().join("good.toml");
    fs::write(&good, toml_for(&cfg)).unwrap();
    let out = std::process::Command::new(exe).args(["uq", "run", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("AUC-5"));

    let canon = std::process::Command::new(exe).args(["smiles", "canon", "OCC"]).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&canon.stdout).trim(), "CCO");
}

fn toml_for(cfg: &RunConfig) -> String {
    format!(
        "dataset = {:?}\nlabel_column = \"label\"\ntest_size = {}\noutput_dir = {:?}\nm = [5]\n[mock]\np_err = [0.1, 0.3]\n",
        cfg.dataset, cfg.test_size, cfg.output_dir
    )
}
