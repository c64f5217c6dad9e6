use std::path::PathBuf;
use std::process::ExitCode;

use aubrylab_cli::{execute, write_outputs, Command, ExperimentConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Run an aubrylab experiment. Exit code 0 on pass, 2 on a failed
/// criterion, 1 on error.
#[derive(Debug, Parser)]
#[command(name = "aubrylab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to AUBRYLAB_THREADS, then to all cores.
    #[arg(long, env = "AUBRYLAB_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `json` writes the record; `csv` also writes plot data.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global()?;
    }
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    let result = execute(cli.command, cfg)?;
    let dir = PathBuf::from(&result.record.config.output_dir);
    let written = write_outputs(&result, &dir, cli.format == Format::Csv)?;
    let summary = serde_json::json!({
        "subcommand": result.record.subcommand,
        "pass": result.record.pass,
        "failures": result.record.failures,
        "written": written,
    });
    println!("{summary}");
    Ok(result.record.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
