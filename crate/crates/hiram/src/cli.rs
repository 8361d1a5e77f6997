//! Argument parsing and verb dispatch.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use hiram_core::Preset;

use crate::error::{AppError, Result};
use crate::pipeline;
use crate::settings::Settings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    /// Generate a synthetic corpus into the output directory.
    Synth,
    /// Train on `data.train`.
    Train,
    /// Score `data.test` with the model in the output directory.
    Eval,
    /// Run finite-difference gradient checks.
    Gradcheck,
    /// Write the PR curve of an existing prediction file.
    ExportPr,
}

#[derive(Debug, Parser)]
#[command(
    name = "hiram",
    version,
    about = "Type-enriched relation extraction: synth, train, eval, gradcheck, export-pr"
)]
pub struct Cli {
    pub verb: Verb,
    /// Option overrides as KEY=VALUE, e.g. `train.epochs=5`.
    pub overrides: Vec<String>,
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for initialization, shuffling and synthesis.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Ablation preset: full, no-hierarchy, no-cfte, no-guidance or type-concat.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Also write per-sentence alignment distributions during eval.
    #[arg(long)]
    pub dump_align: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

/// Configuration file, then preset, then overrides, then `--seed`.
pub fn resolve(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(name) = &cli.preset {
        let preset: Preset = name.parse().map_err(|_| AppError::Usage(format!("unknown preset `{name}`")))?;
        s.train.model.apply_preset(preset);
    }
    for o in &cli.overrides {
        s.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        s.train.seed = seed;
    }
    s.train.validate()?;
    Ok(s)
}

pub fn run(cli: &Cli) -> Result<()> {
    let settings = resolve(cli)?;
    pipeline::log_settings(&settings);
    match cli.verb {
        Verb::Synth => {
            pipeline::synth(&settings, settings.train.seed, &cli.out)?;
        }
        Verb::Train => {
            let outcome = pipeline::train(&settings, &cli.out)?;
            if let Some(last) = outcome.reports.last() {
                println!(
                    "trained {} epochs; best epoch {}; final train accuracy {:.4}",
                    last.epoch, outcome.best_epoch, last.train_accuracy
                );
            }
        }
        Verb::Eval => {
            let ev = pipeline::evaluate(&settings, &cli.out, cli.dump_align)?;
            for line in &ev.summary {
                println!("{}", serde_json::to_string(line).map_err(|e| AppError::Format(e.to_string()))?);
            }
        }
        Verb::Gradcheck => {
            let entries = pipeline::gradcheck(settings.train.seed, 1e-4);
            let mut failed = 0;
            for e in &entries {
                match &e.report {
                    Ok(r) => println!(
                        "{} {} max_rel_error={:.3e} coordinates={}",
                        if r.passed { "PASS" } else { "FAIL" },
                        e.name,
                        r.max_rel_error,
                        r.coordinates
                    ),
                    Err(err) => println!("FAIL {} error={err}", e.name),
                }
                failed += usize::from(!e.passed());
            }
            if failed > 0 {
                return Err(AppError::Numeric(format!("{failed} of {} gradient checks failed", entries.len())));
            }
        }
        Verb::ExportPr => {
            let path = pipeline::export_pr(&cli.out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
