use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use output::CliError;

#[derive(Parser)]
#[command(name = "sparse-amp", version, about = "Message-passing experiments driven by JSON configs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one instance and write its iteration trace.
    Amp(Common),
    /// State-evolution trajectories and fixed points.
    Se(Common),
    /// Potential curves and their maxima.
    Potential(Common),
    /// Transition values over a parameter grid.
    PhaseDiagram(Common),
    /// Section error rates of superposition codes.
    Codes(Common),
    /// Robust error correction trials.
    RobustEc(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, kind) = match cli.cmd {
        Cmd::Amp(c) => (c, commands::Kind::Amp),
        Cmd::Se(c) => (c, commands::Kind::Se),
        Cmd::Potential(c) => (c, commands::Kind::Potential),
        Cmd::PhaseDiagram(c) => (c, commands::Kind::PhaseDiagram),
        Cmd::Codes(c) => (c, commands::Kind::Codes),
        Cmd::RobustEc(c) => (c, commands::Kind::RobustEc),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", common.config.display())))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Run(e.to_string()))?;
    // everything is computed before the first file is written
    let files = pool.install(|| commands::dispatch(kind, &text, common.seed))?;
    output::write_all(&common.out, &files)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
