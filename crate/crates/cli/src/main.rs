use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use wavemin_cli::{load, run, CliError, Overrides, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Minimize the functional and write fields and a summary.
    Solve,
    /// Check the configuration and the passivity of every region.
    Validate,
    /// Tomography slack of the configured medium against measured fields.
    Tomography,
    /// Hashin-Shtrikman bound with a comparison medium.
    HsBound,
    /// Infinite-medium Green's function at the configured points.
    GreensTable,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Solve => Subcommand::Solve,
            Command::Validate => Subcommand::Validate,
            Command::Tomography => Subcommand::Tomography,
            Command::HsBound => Subcommand::HsBound,
            Command::GreensTable => Subcommand::GreensTable,
        }
    }
}

/// Frequency-domain wave solver for dissipative media.
///
/// Exit status: 0 on success, 2 on invalid input, 3 when an iterative solve
/// does not converge (artifacts are still written).  WAVEMIN_THREADS sets
/// the worker thread count.
#[derive(Debug, Parser)]
#[command(name = "wavemin", version)]
struct Cli {
    command: Command,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for tables and the summary record.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Relative residual tolerance of the iterative solvers.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Iteration limit of the iterative solvers.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Polar order of the sphere quadrature (azimuth 2n, great circle 8n).
    #[arg(long)]
    quadrature_order: Option<usize>,
    /// Seed of the random starting iterate.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("WAVEMIN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(vec![format!("WAVEMIN_THREADS: expected a positive integer, got '{value}'")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(vec![format!("WAVEMIN_THREADS: {e}")]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        tolerance: cli.tolerance,
        max_iters: cli.max_iters,
        quadrature_order: cli.quadrature_order,
        seed: cli.seed,
    };
    let result = init_threads()
        .and_then(|_| load(&cli.config))
        .and_then(|cfg| run(&cfg, cli.command.into(), &cli.out_dir, &overrides));
    match result {
        Ok(output) => {
            for path in &output.artifacts {
                println!("wrote {}", path.display());
            }
            match output.error {
                None => ExitCode::SUCCESS,
                Some(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
