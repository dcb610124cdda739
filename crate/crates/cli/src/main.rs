use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rephrase_cli::{render_tables, run_pipeline, ArmChoice, RunConfig};
use rephrase_core::datasets::{
    describe_classification, describe_reactions, load_classification_csv, load_reactions, DatasetPreset,
};
use rephrase_core::eval::RunReport;
use rephrase_core::fingerprint::{circular_fingerprint, tanimoto, DEFAULT_RADIUS, DEFAULT_WIDTH};
use rephrase_core::molgraph::{canonical_smiles, enumerate_variants, parse_smiles};
use rephrase_core::uq::InputUncertaintyReport;

#[derive(Parser)]
#[command(name = "rephrase", version, about = "Input and output uncertainty of LLMs on SMILES tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, canonicalize or enumerate SMILES.
    #[command(subcommand)]
    Smiles(SmilesCmd),
    /// Fingerprint utilities.
    #[command(subcommand)]
    Fp(FpCmd),
    /// Run the uncertainty pipeline or print a finished run.
    #[command(subcommand)]
    Uq(UqCmd),
    /// Dataset inspection.
    #[command(subcommand)]
    Datasets(DatasetsCmd),
}

#[derive(Subcommand)]
enum SmilesCmd {
    /// Print a summary of the parsed graph.
    Parse { smiles: String },
    /// Print the canonical form of each input.
    Canon { smiles: Vec<String> },
    /// Print up to n distinct equivalent writings.
    Enum {
        smiles: String,
        #[arg(short, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum FpCmd {
    /// Tanimoto similarity of two molecules.
    Sim {
        a: String,
        b: String,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u32,
        #[arg(long, default_value_t = DEFAULT_WIDTH)]
        width: usize,
    },
}

#[derive(Subcommand)]
enum UqCmd {
    /// Run the full pipeline from a TOML config.
    Run(RunArgs),
    /// Print the result tables of a finished run directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Sample counts; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long, value_parser = parse_arm)]
    arm: Option<ArmChoice>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    base_url: Option<String>,
}

fn parse_arm(s: &str) -> Result<ArmChoice, String> {
    match s {
        "original" => Ok(ArmChoice::Original),
        "reformed" => Ok(ArmChoice::Reformed),
        "both" => Ok(ArmChoice::Both),
        _ => Err(format!("unknown arm '{s}' (original, reformed, both)")),
    }
}

#[derive(Subcommand)]
enum DatasetsCmd {
    /// Row counts, label balance and skip counts.
    Describe {
        path: PathBuf,
        /// Preset name: bace, bbbp, hiv, clintox, tox21.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        smiles_column: Option<String>,
        #[arg(long)]
        label_column: Option<String>,
        /// Treat the file as reaction SMILES lines.
        #[arg(long)]
        reactions: bool,
    },
}

fn mol(s: &str) -> Result<rephrase_core::molgraph::MolGraph> {
    parse_smiles(s).with_context(|| format!("cannot parse '{s}'"))
}

fn apply_overrides(cfg: &mut RunConfig, a: RunArgs) {
    if let Some(v) = a.dataset {
        cfg.dataset = v;
    }
    if let Some(v) = a.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = a.cache {
        cfg.cache = Some(v);
    }
    if !a.m.is_empty() {
        cfg.m = a.m;
    }
    if let Some(v) = a.arm {
        cfg.arm = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.test_size {
        cfg.test_size = v;
    }
    if let Some(v) = a.threshold {
        cfg.cluster.threshold = v;
    }
    if let Some(v) = a.model {
        cfg.endpoint.model_name = v;
    }
    if let Some(v) = a.base_url {
        cfg.endpoint.base_url = v;
    }
}

fn uq_run(args: RunArgs) -> ExitCode {
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    apply_overrides(&mut cfg, args);
    match run_pipeline(&cfg, None) {
        Ok(outcome) => {
            print!("{}", render_tables(&outcome.reports, &outcome.input_uncertainty));
            eprintln!(
                "wrote {} ({} requests, {} cache hits)",
                outcome.output_dir.display(),
                outcome.requests,
                outcome.cache_hits
            );
            if outcome.has_failures() {
                eprintln!("{} items failed; see ledger.jsonl", outcome.summary.failed_items.len());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn uq_report(dir: PathBuf) -> Result<()> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let reports: Vec<RunReport> = serde_json::from_value(v["reports"].clone())?;
    let input: std::collections::BTreeMap<usize, InputUncertaintyReport> =
        serde_json::from_value(v["run"]["input_uncertainty"].clone()).unwrap_or_default();
    print!("{}", render_tables(&reports, &input));
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Smiles(SmilesCmd::Parse { smiles }) => {
            let m = mol(&smiles)?;
            let summary = serde_json::json!({
                "atoms": m.atom_count(),
                "bonds": m.bond_count(),
                "aromatic_atoms": m.aromatic_atom_count(),
                "components": m.component_count(),
                "implicit_hydrogens": (0..m.atom_count()).map(|i| m.hydrogen_count(i)).collect::<Vec<_>>(),
                "stereo_dropped": m.had_stereo(),
                "canonical": canonical_smiles(&m),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Smiles(SmilesCmd::Canon { smiles }) => {
            if smiles.is_empty() {
                bail!("no SMILES given");
            }
            for s in smiles {
                println!("{}", canonical_smiles(&mol(&s)?));
            }
        }
        Command::Smiles(SmilesCmd::Enum { smiles, n, seed }) => {
            for v in enumerate_variants(&mol(&smiles)?, n, seed).variants {
                println!("{v}");
            }
        }
        Command::Fp(FpCmd::Sim { a, b, radius, width }) => {
            let fa = circular_fingerprint(&mol(&a)?, radius, width)?;
            let fb = circular_fingerprint(&mol(&b)?, radius, width)?;
            println!("{:.6}", tanimoto(&fa, &fb)?);
        }
        Command::Uq(UqCmd::Report { dir }) => uq_report(dir)?,
        Command::Uq(UqCmd::Run(_)) => unreachable!("handled in main"),
        Command::Datasets(DatasetsCmd::Describe { path, name, smiles_column, label_column, reactions }) => {
            let label = name.clone().unwrap_or_else(|| path.display().to_string());
            if reactions {
                println!("{}", describe_reactions(&label, &load_reactions(&path)?));
            } else {
                let preset = name.as_deref().and_then(DatasetPreset::named);
                let smiles_col = smiles_column
                    .or_else(|| preset.as_ref().map(|p| p.smiles_column.clone()))
                    .unwrap_or_else(|| "smiles".into());
                let Some(label_col) = label_column.or_else(|| preset.map(|p| p.label_column)) else {
                    bail!("pass --label-column or a known --name");
                };
                println!("{}", describe_classification(&label, &load_classification_csv(&path, &smiles_col, &label_col)?));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Uq(UqCmd::Run(args)) => uq_run(args),
        other => match run(other) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
