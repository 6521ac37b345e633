mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strata_wave::WaveError;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "strata-wave",
    version,
    about = "Steady stratified water waves: solver and regularity diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Laminar profile and Bernoulli head at `solver.kappa` (or the bifurcation slope).
    Laminar(Common),
    /// Continue to the last amplitude target and keep the final state.
    Solve(Common),
    /// Continue through every amplitude target and keep all states.
    Continue(Common),
    /// Regularity diagnostics of a saved state.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// State file; defaults to `state.field` in the output directory.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Sweep the combinatorial inequalities and print the verdict table.
    Lemmas {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        alpha_max: usize,
        #[arg(long, default_value_t = 200)]
        m_max: usize,
    },
}

fn exit_code(e: &WaveError) -> u8 {
    match e {
        WaveError::InvalidInput(_) | WaveError::Domain { .. } => 2,
        WaveError::Divergence { .. } => 3,
        WaveError::Stagnation { .. } => 4,
        WaveError::BifurcationPoint { .. } => 5,
        WaveError::Checksum { .. } => 6,
        _ => 1,
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), WaveError> {
    let cfg = RunConfig::load(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<ExitCode, WaveError> {
    match cli.command {
        Command::Laminar(c) => {
            let (cfg, out) = load(&c)?;
            commands::laminar(&cfg, &out)?;
        }
        Command::Solve(c) => {
            let (cfg, out) = load(&c)?;
            commands::branch(&cfg, &out, false)?;
        }
        Command::Continue(c) => {
            let (cfg, out) = load(&c)?;
            commands::branch(&cfg, &out, true)?;
        }
        Command::Analyze { common, state } => {
            let (cfg, out) = load(&common)?;
            let state = state.unwrap_or_else(|| out.join("state.field"));
            commands::analyze(&cfg, &state, &out)?;
        }
        Command::Lemmas {
            config,
            out,
            alpha_max,
            m_max,
        } => {
            let out = match (out, config) {
                (Some(o), _) => Some(o),
                (None, Some(path)) => Some(RunConfig::load(&path)?.output_dir),
                (None, None) => None,
            };
            if !commands::lemmas(alpha_max, m_max, out.as_deref().map(Path::new))? {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
