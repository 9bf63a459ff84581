//! `tp run --config <file> [--stage <name>] [--seed N]`
//!
//! Exit status 0 on success, 2 for configuration problems (including
//! missing inputs), 3 when a stage fails. Failures are reported on stderr
//! as one JSON object naming the stage and the cause.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use traffic_primitives::pipeline::{run_pipeline, PipelineConfig, PipelineError, Stage, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "tp", version, about = "Traffic interaction primitives pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all stages, or a single one.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// ingest, track, field, encode, segment or report
        #[arg(long)]
        stage: Option<String>,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides paths.output_dir.
        #[arg(long = "output-dir", env = OUTPUT_DIR_ENV, hide_env_values = true)]
        output_dir: Option<PathBuf>,
    },
}

fn fail(err: PipelineError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        stage,
        seed,
        output_dir,
    } = Cli::parse().command;

    let config_error = |error| PipelineError { stage: None, error };
    let stage = match stage.map(|s| s.parse::<Stage>()).transpose() {
        Ok(s) => s,
        Err(e) => return fail(config_error(e)),
    };
    let mut cfg = match PipelineConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(config_error(e)),
    };
    cfg.apply_overrides(output_dir, seed);

    match run_pipeline(&cfg, stage) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            let names: Vec<&str> = outcome.stages.iter().map(|s| s.name()).collect();
            println!("ran {} -> {}", names.join(", "), cfg.paths.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
