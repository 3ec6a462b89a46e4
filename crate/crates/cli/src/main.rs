use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use cellfree_cli::manifest::{manifest, CONFIG_NAME, MANIFEST_NAME};
use cellfree_cli::settings::DEFAULT_CONFIG;
use cellfree_cli::{run_experiment, CliError, Experiment, RunOptions, Settings};
use cellfree_core::dnn::Allocator;
use cellfree_core::Error;
use clap::{Parser, Subcommand};

/// Spectral efficiency and power allocation experiments for cell-free massive
/// MIMO with joint unicast and multigroup multicast.
#[derive(Debug, Parser)]
#[command(name = "cellfree-se", version)]
struct Cli {
    /// Configuration file; the built-in default deployment when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding `rng_seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// `key=value` or `section.key=value`, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CELLFREE_SE_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        #[arg(value_parser = Experiment::from_str)]
        experiment: Experiment,

        /// Output directory.
        #[arg(long, default_value = "out", value_name = "DIR")]
        out: PathBuf,

        /// Also write SVG charts.
        #[arg(long)]
        plots: bool,

        /// Record wall-clock timings; timed files are not reproducible.
        #[arg(long)]
        record_timings: bool,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Trained allocator utilities.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
}

#[derive(Debug, Subcommand)]
enum ConfigAction {
    /// Validate the configuration and print its canonical form.
    Check,
}

#[derive(Debug, Subcommand)]
enum ModelAction {
    /// Print the architecture and layout of a saved model.
    Inspect { file: PathBuf },
}

fn load_settings(cli: &Cli) -> Result<Settings, CliError> {
    let (origin, text) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(path.display().to_string(), Error::Io(e)))?;
            (path.display().to_string(), text)
        }
        None => ("<default config>".to_string(), DEFAULT_CONFIG.to_string()),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("rng_seed={seed}"));
    }
    Settings::load(&text, &overrides).map_err(|e| CliError::config(origin, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Run { experiment, out, plots, record_timings } => {
            let settings = load_settings(cli)?;
            std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
            let opts = RunOptions { plots: *plots, record_timings: *record_timings };
            let artifacts = run_experiment(*experiment, &settings, opts)?;
            for a in &artifacts {
                write_file(&out.join(&a.name), &a.bytes)?;
            }
            let echo = settings.echo();
            let mut flags = Vec::new();
            if *plots {
                flags.push("--plots");
            }
            if *record_timings {
                flags.push("--record-timings");
            }
            write_file(&out.join(CONFIG_NAME), echo.as_bytes())?;
            let text = manifest(experiment.name(), settings.seed(), &flags, &echo, &artifacts);
            write_file(&out.join(MANIFEST_NAME), text.as_bytes())?;
            for a in &artifacts {
                println!("{}", out.join(&a.name).display());
            }
            println!("{}", out.join(MANIFEST_NAME).display());
        }
        Command::Config { action: ConfigAction::Check } => {
            let settings = load_settings(cli)?;
            print!("{}", settings.echo());
        }
        Command::Model { action: ModelAction::Inspect { file } } => {
            let model = Allocator::load(file).map_err(|e| match e {
                Error::Io(source) => CliError::io(file, source),
                source => CliError::Runtime { experiment: "model".into(), op: "inspect".into(), source },
            })?;
            print!("{}", model.describe());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
