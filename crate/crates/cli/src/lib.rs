//! Configuration, the end-to-end run and text rendering of result tables.

pub mod config;
pub mod pipeline;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rephrase_core::eval::{table3_row, table4_row, RunReport};
use rephrase_core::uq::InputUncertaintyReport;

pub use config::{ArmChoice, ConfigError, MockConfig, RunConfig, Seeds, TaskKind, UncertaintyChoice};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutcome};

/// Accuracy/F1/entropy rows per sample count, the arm comparison, and
/// AUC rows at the largest sample count of each arm.
pub fn render_tables(reports: &[RunReport], input: &BTreeMap<usize, InputUncertaintyReport>) -> String {
    let mut out = String::new();
    let mut ms: Vec<usize> = reports.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    for m in &ms {
        writeln!(out, "# m = {m}\ndataset, arm, Acc, F1, C.E.").unwrap();
        for r in reports.iter().filter(|r| r.m == *m) {
            writeln!(out, "{}", table3_row(r)).unwrap();
        }
        if let Some(iu) = input.get(m) {
            writeln!(
                out,
                "reformed vs original: Acc {:.3} -> {:.3} ({} {:+.3}), C.E. {:.3} -> {:.3} ({} {:+.3})",
                iu.original.accuracy,
                iu.reformed.accuracy,
                iu.accuracy_direction.arrow(),
                iu.accuracy_delta,
                iu.original.mean_entropy,
                iu.reformed.mean_entropy,
                iu.entropy_direction.arrow(),
                iu.entropy_delta,
            )
            .unwrap();
        }
        out.push('\n');
    }
    let columns: Vec<usize> = {
        let mut c: Vec<usize> = reports.iter().flat_map(|r| r.auc_by_m.keys().copied()).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if !reports.is_empty() {
        let header: Vec<String> = columns.iter().map(|m| format!("AUC-{m}")).collect();
        writeln!(out, "# uncertainty AUC\nmethod, Top-1 Acc, {}", header.join(", ")).unwrap();
        let mut last_per_arm: BTreeMap<_, &RunReport> = BTreeMap::new();
        for r in reports {
            let slot = last_per_arm.entry(r.arm).or_insert(r);
            if r.m > slot.m {
                *slot = r;
            }
        }
        for r in last_per_arm.values() {
            writeln!(out, "{}", table4_row(r, &columns)).unwrap();
        }
    }
    out
}
