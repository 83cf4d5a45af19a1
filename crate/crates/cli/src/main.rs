//! `hsi`: experiment recipes over `hsi-core`, writing CSV plus a JSON
//! metadata file per run.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Command, Profile};

/// Environment variable naming the default output directory.
const OUTPUT_ENV: &str = "HSI_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "hsi", version = output::VERSION, about = "Exact-diagonalization experiments on spin-1/2 chains")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// TOML config, or a `.meta.json` from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set model.gamma=0.3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Named defaults: `paper` (L up to 14, 400 realizations) or `ci`.
    #[arg(long, global = true)]
    profile: Option<Profile>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Output directory; falls back to `output.dir`, then $HSI_OUTPUT_DIR,
    /// then `hsi-output`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Per-eigenstate energy, entropy and overlap weight.
    Spectrum,
    /// Sector populations, entropy and survival after a quench.
    Quench,
    /// N versus system size (disorder-averaged for disordered families).
    Nscaling,
    /// Disorder-averaged quench with standard errors.
    Disorder,
    /// Train the layered circuit toward the target eigenstates.
    Train,
    /// Leakage decomposition and observable bounds.
    Bounds,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Spectrum => Command::Spectrum,
            Sub::Quench => Command::Quench,
            Sub::Nscaling => Command::NScaling,
            Sub::Disorder => Command::Disorder,
            Sub::Train => Command::Train,
            Sub::Bounds => Command::Bounds,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = Command::from(cli.command);

    let file = match cli.config.as_deref().map(config::read_config_file).transpose() {
        Ok(f) => f,
        Err(e) => return fail(&commands::CliError::Config(e)),
    };
    let cfg = match config::resolve(command, file, &cli.set, cli.profile) {
        Ok(c) => c,
        Err(e) => return fail(&commands::CliError::Config(e)),
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            return fail(&commands::CliError::Config(format!("--workers: {e}")));
        }
    }
    let out = cli
        .out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("hsi-output"));

    match commands::run(command, &cfg, out) {
        Ok(meta) => {
            eprintln!("{} done; metadata in {}", command.name(), meta.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &commands::CliError) -> ExitCode {
    eprintln!("hsi: {e}");
    ExitCode::from(e.exit_code() as u8)
}
