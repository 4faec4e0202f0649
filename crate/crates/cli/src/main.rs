use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lz3::commands::{self, Format};
use lz3::pool::available_jobs;
use lz3::{CliError, RunConfig};

/// Multi-D2 dynamics of the driven, dissipative anisotropic three-level
/// Landau-Zener model.
#[derive(Parser)]
#[command(name = "lz3", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one trajectory.
    Propagate {
        config: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Contour sweep over (D, A_z), or a strip of full trajectories.
    Sweep {
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Energy levels of the truncated-Fock Hamiltonian.
    Levels {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rabi-cycle fits over bath coupling strengths.
    Fit {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Mode table of the discretised spectral density.
    Discretize {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn jobs(n: usize) -> usize {
    if n == 0 {
        available_jobs()
    } else {
        n
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Propagate { config, out, format } => {
            let cfg = RunConfig::load(&config)?;
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
            let traj = commands::cmd_propagate(&cfg, out.as_deref(), format)?;
            eprintln!(
                "{} records, max norm drift {:.3e}",
                traj.records.len(),
                traj.max_norm_drift
            );
        }
        Command::Sweep { config, out, jobs: n } => {
            let cfg = RunConfig::load(&config)?;
            let strip = cfg.sweep.as_ref().is_some_and(|s| s.strip.is_some());
            if strip {
                let points = commands::strip(&cfg, jobs(n))?;
                commands::write_strip(&cfg, &points, &out)?;
                let failed = points.iter().filter(|p| p.outcome.is_err()).count();
                eprintln!("{} strip points, {failed} missing", points.len());
                for p in points.iter().filter(|p| p.outcome.is_err()) {
                    eprintln!("  A_z = {}: {}", p.a_z, p.outcome.as_ref().err().expect("failed"));
                }
            } else {
                let result = commands::sweep_grid(&cfg, jobs(n))?;
                commands::write_grid(&cfg, &result, &out)?;
                eprintln!(
                    "{} points x {} frames, {} missing",
                    result.anisotropy.len() * result.a_z.len(),
                    result.frames.len(),
                    result.missing()
                );
                for (i, j, e) in &result.failures {
                    eprintln!("  D = {}, A_z = {}: {e}", result.anisotropy[*i], result.a_z[*j]);
                }
            }
        }
        Command::Levels { config, out } => {
            commands::cmd_levels(&RunConfig::load(&config)?, out.as_deref())?;
        }
        Command::Fit { config, out, jobs: n } => {
            commands::cmd_fit(&RunConfig::load(&config)?, out.as_deref(), jobs(n))?;
        }
        Command::Discretize { config, out } => {
            commands::cmd_discretize(&RunConfig::load(&config)?, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lz3: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
