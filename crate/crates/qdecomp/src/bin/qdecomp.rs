//! Command-line entry point wiring the pipeline commands together.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qdecomp::pipeline::{
    cmd_answer, cmd_decompose, cmd_eval, cmd_gradcheck, cmd_kbgen, cmd_supervise, cmd_train,
    BackendKind, DecomposerKind, PipelineError, RunConfig,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendFlag {
    Fixture,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecomposerFlag {
    Rule,
    Model,
}

/// Decompose complex questions, answer them against a QA backend, and run
/// the synthetic-data / supervision / training pipeline.
#[derive(Debug, Parser)]
#[command(name = "qdecomp", version, about)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the QA backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendFlag>,

    /// Override the decomposer (rule-based splitter or trained model).
    #[arg(long, global = true, value_enum)]
    decomposer: Option<DecomposerFlag>,

    /// Output path for the subcommand's primary artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset from the KB, seeds, and templates.
    Kbgen,
    /// Produce noisy decomposition labels by MG/NL alignment.
    Supervise,
    /// Train the pointer-network decomposer.
    Train,
    /// Print (and optionally write) decomposition programs for questions.
    Decompose,
    /// Answer questions end to end and report the winning strategy.
    Answer,
    /// Score a predictions file against the gold dataset.
    Eval,
    /// Verify analytic gradients against finite differences.
    Gradcheck,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(backend) = cli.backend {
        config.backend = match backend {
            BackendFlag::Fixture => BackendKind::Fixture,
            BackendFlag::Http => BackendKind::Http,
        };
    }
    if let Some(decomposer) = cli.decomposer {
        config.decomposer = match decomposer {
            DecomposerFlag::Rule => DecomposerKind::Rule,
            DecomposerFlag::Model => DecomposerKind::Model,
        };
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Kbgen => {
            let stats = cmd_kbgen(&config, out)?;
            println!(
                "emitted {} records in {} attempts",
                stats.emitted.values().sum::<usize>(),
                stats.attempts
            );
            for (comp_type, n) in &stats.emitted {
                println!("  {comp_type}: {n}");
            }
        }
        Command::Supervise => {
            let stats = cmd_supervise(&config, out)?;
            println!(
                "emitted {} labels ({} dropped: {} short, {} degenerate)",
                stats.emitted,
                stats.dropped(),
                stats.dropped_short,
                stats.dropped_degenerate
            );
        }
        Command::Train => {
            let final_loss = cmd_train(&config, out)?;
            println!("trained; final epoch loss {final_loss:.6}");
        }
        Command::Decompose => {
            for o in cmd_decompose(&config, out)? {
                println!("{}\t{}", o.question, o.program);
            }
        }
        Command::Answer => {
            for o in cmd_answer(&config, out)? {
                let answer = o
                    .answer
                    .as_ref()
                    .map(|a| a.surface())
                    .unwrap_or_else(|| "(no answer)".to_string());
                let strategy = match o.strategy {
                    Some(s) => format!("{s:?}"),
                    None => "None".to_string(),
                };
                println!("{}\t{}\t{}\t{}", o.question, o.program, answer, strategy);
            }
        }
        Command::Eval => {
            let rep = cmd_eval(&config, out)?;
            print!("{}", rep.to_table());
        }
        Command::Gradcheck => {
            let err = cmd_gradcheck(&config)?;
            println!("max relative gradient error: {err:.3e}");
            if err >= 1e-4 {
                return Err(PipelineError::Contract(format!(
                    "gradient check failed: {err:.3e} >= 1e-4"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
