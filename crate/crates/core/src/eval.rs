//! Accuracy, F1, exact match, ROC/AUC of uncertainty scores, and report
//! files in the two result-table shapes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::molgraph::{canonical_smiles, parse_smiles};
use crate::uq::{Answer, Arm, UncertaintyRecord};

/// Positive class for ROC: the answer was wrong.
pub const AUC_ORIENTATION: &str = "uncertainty predicts incorrectness";
pub const TABLE4_AUC_COLUMNS: [usize; 4] = [3, 10, 15, 20];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions ({0}) and gold labels ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("AUC is not defined: all {0} records are {1}")]
    DegenerateLabels(usize, &'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Most frequent answer; a tie for first place yields `Invalid`.
pub fn majority_vote(answers: &[Answer]) -> Answer {
    let mut counts: HashMap<&Answer, usize> = HashMap::new();
    for a in answers {
        *counts.entry(a).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let mut leaders = counts.into_iter().filter(|&(_, c)| c == top);
    match (leaders.next(), leaders.next()) {
        (Some((a, _)), None) => a.clone(),
        _ => Answer::Invalid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// F1 of the `Yes` class.
    pub f1: f64,
}

pub fn classification_metrics(predictions: &[Answer], gold: &[Answer]) -> Result<ClassificationMetrics, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), gold.len()));
    }
    let n = gold.len();
    let (mut correct, mut tp, mut fp, mut fn_) = (0, 0, 0, 0);
    for (p, g) in predictions.iter().zip(gold) {
        correct += usize::from(p == g);
        match (p == &Answer::Yes, g == &Answer::Yes) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(ClassificationMetrics { accuracy, f1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Raw,
    Canonical,
}

pub fn exact_match(predicted: &str, gold: &str, mode: MatchMode) -> bool {
    match mode {
        MatchMode::Raw => predicted == gold,
        MatchMode::Canonical => match (parse_smiles(predicted), parse_smiles(gold)) {
            (Ok(p), Ok(g)) => canonical_smiles(&p) == canonical_smiles(&g),
            _ => false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC of the uncertainty score as a detector of wrong answers.
///
/// AUC is the Mann–Whitney statistic computed from mid-ranks; the curve
/// sweeps a threshold down through the distinct scores.
pub fn roc_auc(records: &[UncertaintyRecord]) -> Result<RocCurve, EvalError> {
    let wrong = records.iter().filter(|r| !r.correct).count();
    let right = records.len() - wrong;
    if wrong == 0 {
        return Err(EvalError::DegenerateLabels(records.len(), "correct"));
    }
    if right == 0 {
        return Err(EvalError::DegenerateLabels(records.len(), "incorrect"));
    }

    let mut sorted: Vec<&UncertaintyRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut rank_sum_wrong = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].score == sorted[i].score {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum_wrong += mid * sorted[i..=j].iter().filter(|r| !r.correct).count() as f64;
        i = j + 1;
    }
    let (nw, nr) = (wrong as f64, right as f64);
    let auc = (rank_sum_wrong - nw * (nw + 1.0) / 2.0) / (nw * nr);

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = sorted.len();
    while k > 0 {
        let score = sorted[k - 1].score;
        while k > 0 && sorted[k - 1].score == score {
            if sorted[k - 1].correct {
                fp += 1;
            } else {
                tp += 1;
            }
            k -= 1;
        }
        points.push((fp as f64 / nr, tp as f64 / nw));
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model: String,
    pub temperature: f64,
    pub seeds: BTreeMap<String, u64>,
    pub log_base: String,
    pub auc_orientation: String,
    pub uncertainty: String,
    pub cluster_threshold: Option<f64>,
    pub linkage: Option<String>,
    pub fingerprint_format: Option<String>,
    /// Anything else worth stamping, e.g. the dataset task column.
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub arm: Arm,
    /// Row label, e.g. "gpt-4 + Orig.".
    pub method: String,
    pub m: usize,
    pub items: usize,
    /// Canonical exact match for reactions, majority-vote accuracy otherwise.
    pub accuracy: f64,
    /// Raw string exact match; reactions only.
    pub raw_accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub mean_entropy: f64,
    /// Items whose every sample was unparseable.
    pub invalid_only_items: usize,
    /// `None` where AUC is undefined because every item had the same
    /// correctness.
    pub auc_by_m: BTreeMap<usize, Option<f64>>,
    pub roc: Option<RocCurve>,
    pub metadata: ReportMetadata,
}

/// One JSON-lines ledger row per (item, arm, m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub item: String,
    pub arm: Arm,
    pub m: usize,
    pub responses_digest: String,
    pub parsed_answers: Vec<String>,
    pub cluster_sizes: Option<Vec<usize>>,
    #[serde(rename = "U")]
    pub u: Option<f64>,
    pub correct: Option<bool>,
    /// The SMILES placed in the prompt.
    pub prompt_smiles: String,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

/// SHA-256 over the responses, each prefixed by its byte length.
pub fn responses_digest<S: AsRef<str>>(responses: &[S]) -> String {
    let mut h = Sha256::new();
    for r in responses {
        let r = r.as_ref().as_bytes();
        h.update((r.len() as u64).to_le_bytes());
        h.update(r);
    }
    hex::encode(h.finalize())
}

fn auc_columns(reports: &[RunReport]) -> Vec<usize> {
    let set: BTreeSet<usize> = reports.iter().flat_map(|r| r.auc_by_m.keys().copied()).collect();
    if set.is_empty() {
        TABLE4_AUC_COLUMNS.to_vec()
    } else {
        set.into_iter().collect()
    }
}

fn fmt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

pub fn reports_to_csv(reports: &[RunReport]) -> String {
    let columns = auc_columns(reports);
    let mut out = String::from("dataset,arm,method,m,acc,acc_raw,f1,mean_entropy");
    for m in &columns {
        write!(out, ",AUC-{m}").unwrap();
    }
    out.push('\n');
    for r in reports {
        let cells = [
            csv_cell(&r.dataset),
            r.arm.to_string(),
            csv_cell(&r.method),
            r.m.to_string(),
            fmt3(Some(r.accuracy)),
            fmt3(r.raw_accuracy),
            fmt3(r.f1),
            fmt3(Some(r.mean_entropy)),
        ];
        out.push_str(&cells.join(","));
        for m in &columns {
            out.push(',');
            out.push_str(&fmt3(r.auc_by_m.get(m).copied().flatten()));
        }
        out.push('\n');
    }
    out
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// "method, acc, AUC-3, AUC-10, ..." with three decimals.
pub fn table4_row(report: &RunReport, columns: &[usize]) -> String {
    let mut cells = vec![report.method.clone(), fmt3(Some(report.accuracy))];
    cells.extend(columns.iter().map(|m| {
        let v = report.auc_by_m.get(m).copied().flatten();
        if v.is_some() { fmt3(v) } else { "n/a".to_string() }
    }));
    cells.join(", ")
}

/// "dataset, arm, Acc, F1, C.E." with three decimals.
pub fn table3_row(report: &RunReport) -> String {
    [
        report.dataset.clone(),
        report.arm.to_string(),
        fmt3(Some(report.accuracy)),
        report.f1.map_or_else(|| "n/a".to_string(), |f| format!("{f:.3}")),
        fmt3(Some(report.mean_entropy)),
    ]
    .join(", ")
}

pub fn roc_svg(report: &RunReport) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let span = SIZE - 2.0 * PAD;
    let x = |v: f64| PAD + v * span;
    let y = |v: f64| SIZE - PAD - v * span;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{span}" height="{span}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    )
    .unwrap();
    let title = match (&report.roc, report.auc_by_m.get(&report.m).copied().flatten()) {
        (Some(_), Some(auc)) => format!("{} {} m={} AUC={auc:.3}", report.dataset, report.arm, report.m),
        _ => format!("{} {} m={} AUC n/a", report.dataset, report.arm, report.m),
    };
    writeln!(s, r#"<text x="{PAD}" y="{}" font-size="14">{}</text>"#, PAD - 12.0, xml_escape(&title)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">false positive rate</text>"#, SIZE / 2.0, SIZE - 10.0).unwrap();
    writeln!(
        s,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">true positive rate</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    )
    .unwrap();
    if let Some(roc) = &report.roc {
        let pts: Vec<String> = roc.points.iter().map(|&(f, t)| format!("{:.2},{:.2}", x(f), y(t))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" ")).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `report.json`, `report.csv`, `ledger.jsonl` and one
/// `roc-<dataset>-<arm>-m<m>.svg` per report into `dir`.
pub fn write_report(
    dir: &Path,
    reports: &[RunReport],
    ledger: &[LedgerEntry],
    extra_json: &serde_json::Value,
) -> Result<(), EvalError> {
    fs::create_dir_all(dir)?;
    let json = serde_json::json!({
        "reports": reports,
        "run": extra_json,
        "ledger": ledger,
    });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&json).map_err(io::Error::other)? + "\n")?;
    fs::write(dir.join("report.csv"), reports_to_csv(reports))?;
    let mut lines = String::new();
    for e in ledger {
        lines.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
        lines.push('\n');
    }
    fs::write(dir.join("ledger.jsonl"), lines)?;
    for r in reports {
        let name = format!("roc-{}-{}-m{}.svg", file_stem(&r.dataset), r.arm, r.m);
        fs::write(dir.join(name), roc_svg(r))?;
    }
    Ok(())
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uq::UncertaintyKind;

    fn recs(pairs: &[(f64, bool)]) -> Vec<UncertaintyRecord> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(score, correct))| UncertaintyRecord {
                item: i.to_string(),
                score,
                kind: UncertaintyKind::ClassEntropy,
                correct,
                m: 5,
            })
            .collect()
    }

    fn metadata() -> ReportMetadata {
        ReportMetadata {
            model: "gpt-4".into(),
            temperature: 1.0,
            seeds: BTreeMap::new(),
            log_base: "e".into(),
            auc_orientation: AUC_ORIENTATION.into(),
            uncertainty: "cluster_entropy".into(),
            cluster_threshold: Some(0.2),
            linkage: Some("average".into()),
            fingerprint_format: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn metrics_examples() {
        use Answer::{No, Yes};
        let m = classification_metrics(&[Yes, No], &[Yes, No]).unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
        let m = classification_metrics(&[Yes, No, No, No], &[Yes, Yes, No, No]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        let m = classification_metrics(&[No, No], &[Yes, Yes]).unwrap();
        assert_eq!((m.accuracy, m.f1), (0.0, 0.0));
        assert!(matches!(classification_metrics(&[Yes], &[]), Err(EvalError::LengthMismatch(1, 0))));
    }

    #[test]
    fn majority_vote_ties_are_invalid() {
        use Answer::{Invalid, No, Yes};
        assert_eq!(majority_vote(&[Yes, Yes, No]), Yes);
        assert_eq!(majority_vote(&[Yes, No]), Invalid);
        assert_eq!(majority_vote(&[Invalid, Invalid, No]), Invalid);
        assert_eq!(majority_vote(&[]), Invalid);
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("CCO", "CCO", MatchMode::Raw));
        assert!(exact_match("CCO", "CCO", MatchMode::Canonical));
        assert!(!exact_match("OCC", "CCO", MatchMode::Raw));
        assert!(exact_match("OCC", "CCO", MatchMode::Canonical));
        assert!(!exact_match("xyz", "CCO", MatchMode::Raw));
        assert!(!exact_match("xyz", "CCO", MatchMode::Canonical));
    }

    #[test]
    fn auc_examples() {
        let perfect = roc_auc(&recs(&[(0.1, true), (0.2, true), (0.8, false), (0.9, false)])).unwrap();
        assert_eq!(perfect.auc, 1.0);
        let flat = roc_auc(&recs(&[(0.3, true), (0.3, false), (0.3, true)])).unwrap();
        assert_eq!(flat.auc, 0.5);
        // Pairs (wrong, correct): (0.9,0.1) (0.9,0.5) (0.5,0.1) win, (0.5,0.5) ties.
        let mixed = roc_auc(&recs(&[(0.1, true), (0.9, false), (0.5, true), (0.5, false)])).unwrap();
        assert_eq!(mixed.auc, 3.5 / 4.0);
        assert_eq!(mixed.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(mixed.points.last(), Some(&(1.0, 1.0)));
        assert!(matches!(roc_auc(&recs(&[(0.1, true)])), Err(EvalError::DegenerateLabels(1, "correct"))));
    }

    fn report(method: &str, acc: f64, aucs: &[(usize, f64)]) -> RunReport {
        RunReport {
            dataset: "uspto".into(),
            arm: Arm::Original,
            method: method.into(),
            m: 20,
            items: 100,
            accuracy: acc,
            raw_accuracy: Some(acc),
            f1: None,
            mean_entropy: 0.5,
            invalid_only_items: 0,
            auc_by_m: aucs.iter().map(|&(m, a)| (m, Some(a))).collect(),
            roc: None,
            metadata: metadata(),
        }
    }

    #[test]
    fn table4_row_shape() {
        let r = report("GPT-4 + Orig.", 0.250, &[(3, 0.864), (10, 0.919), (15, 0.915), (20, 0.927)]);
        assert_eq!(table4_row(&r, &TABLE4_AUC_COLUMNS), "GPT-4 + Orig., 0.250, 0.864, 0.919, 0.915, 0.927");
        let csv = reports_to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("dataset,arm,method,m,acc,acc_raw,f1,mean_entropy,AUC-3,AUC-10,AUC-15,AUC-20"));
        assert_eq!(lines.next(), Some("uspto,original,GPT-4 + Orig.,20,0.250,0.250,,0.500,0.864,0.919,0.915,0.927"));
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(reports_to_csv(&[]), "dataset,arm,method,m,acc,acc_raw,f1,mean_entropy,AUC-3,AUC-10,AUC-15,AUC-20\n");
    }

    #[test]
    fn report_files_are_deterministic() {
        let mut r = report("mock + Orig.", 0.5, &[(5, 0.75)]);
        r.m = 5;
        r.roc = Some(roc_auc(&recs(&[(0.1, true), (0.9, false), (0.5, true), (0.5, false)])).unwrap());
        let ledger = vec![LedgerEntry {
            item: "CCO".into(),
            arm: Arm::Original,
            m: 5,
            responses_digest: responses_digest(&["Yes", "No"]),
            parsed_answers: vec!["Yes".into(), "No".into()],
            cluster_sizes: None,
            u: Some(0.69),
            correct: Some(false),
            prompt_smiles: "CCO".into(),
            flags: vec![],
            error: None,
        }];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            write_report(d.path(), &[r.clone()], &ledger, &serde_json::json!({"k": 1})).unwrap();
        }
        for f in ["report.json", "report.csv", "ledger.jsonl", "roc-uspto-original-m5.svg"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let line = fs::read_to_string(a.path().join("ledger.jsonl")).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        for key in ["item", "arm", "m", "responses_digest", "parsed_answers", "cluster_sizes", "U", "correct"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let svg = fs::read_to_string(a.path().join("roc-uspto-original-m5.svg")).unwrap();
        assert!(svg.contains("stroke-dasharray") && svg.contains("<polyline"));
    }

    #[test]
    fn digest_separates_boundaries() {
        assert_ne!(responses_digest(&["ab", "c"]), responses_digest(&["a", "bc"]));
        assert_eq!(responses_digest(&["x"]).len(), 64);
    }
}
