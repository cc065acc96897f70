//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use clinannot::pipeline::{demo, emit_report, run_experiment, Phase, RunConfig, Strategy};
use clinannot::prompt::PromptLevel;
use clinannot::taxonomy::GuidelineSchema;

#[derive(Parser)]
#[command(name = "clinannot", version, about = "Multi-agent annotation and evaluation of clinical diary transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Never contact live endpoints; serve from cache or fixtures only.
    #[arg(long)]
    offline: bool,
    /// Prompt levels, e.g. `1,4`.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u8>>,
    /// Adjudication strategies: majority, direct_judge, debate.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    /// Run directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and its guideline without calling any model.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Annotate every transcript with every annotating agent.
    Annotate(RunArgs),
    /// Annotate, then resolve disagreements with each strategy.
    Adjudicate(RunArgs),
    /// Full run: annotate, adjudicate, and score against gold.
    Evaluate(RunArgs),
    /// Re-render the text tables of a finished run.
    Report {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline run over the bundled synthetic corpus with scripted agents.
    Demo {
        #[arg(long, default_value = "demo-run")]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if args.offline {
        cfg.offline = true;
    }
    if let Some(levels) = &args.levels {
        cfg.levels = levels.iter().map(|&l| PromptLevel::new(l)).collect::<Result<_, _>>()?;
    }
    if let Some(strategies) = &args.strategies {
        cfg.strategies = strategies.iter().map(|s| s.parse::<Strategy>()).collect::<Result<_, _>>()?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let panel = cfg.validate()?;
            let schema = match &cfg.guideline {
                Some(p) => GuidelineSchema::from_path(p)?,
                None => GuidelineSchema::bundled(),
            };
            println!(
                "ok: guideline {} | annotators {}, {} | tiebreaker {} | judge {}",
                schema.version,
                panel.annotator_a.id,
                panel.annotator_b.id,
                panel.tiebreaker.as_ref().map_or("-", |a| a.id.as_str()),
                panel.judge.as_ref().map_or("-", |a| a.id.as_str()),
            );
        }
        Command::Annotate(args) => {
            let out = run_experiment(&load(&args)?, Phase::Annotate)?;
            println!("annotations written to {}", out.run_dir.display());
        }
        Command::Adjudicate(args) => {
            let out = run_experiment(&load(&args)?, Phase::Adjudicate)?;
            println!("resolutions written to {}", out.run_dir.display());
        }
        Command::Evaluate(args) => {
            let out = run_experiment(&load(&args)?, Phase::Evaluate)?;
            print!("{}", std::fs::read_to_string(out.run_dir.join("reports/tables.txt"))?);
        }
        Command::Report { out } => {
            print!("{}", emit_report(&out)?);
        }
        Command::Demo { out } => {
            let outcome = demo::run_demo(&out).context("demo run failed")?;
            let tables = outcome.run_dir.join("reports/tables.txt");
            if !tables.exists() {
                bail!("demo produced no report");
            }
            print!("{}", std::fs::read_to_string(tables)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
