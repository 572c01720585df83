//! `meshopt`: run mesh optimizers on a problem spec, or write bundled problems.
//!
//! Exit status: 0 when every solver converged, 1 when any stalled or hit its
//! iteration cap, 2 on I/O or validation errors.

mod generate;
mod plot;
mod run;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use meshopt::generate::SceneKind;
use meshopt::solver::Method;

#[derive(Parser)]
#[command(name = "meshopt", version, about = "Mesh geometry optimization benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solvers of a JSON spec and write logs, meshes and a plot.
    Run {
        spec: PathBuf,
        /// Termination tolerance on the characteristic-norm ratio.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long = "max-iters")]
        max_iters: Option<usize>,
        /// Comma-separated solver names, e.g. `bcqn,sgd,lbfgs`.
        #[arg(long, value_delimiter = ',')]
        solvers: Option<Vec<Method>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Add wall-clock columns to the CSV logs and summaries.
        #[arg(long)]
        timing: bool,
    },
    /// Write a bundled problem (mesh files and spec) into a directory.
    Generate {
        /// shear, swirl, twist, uv_patch or hilbert.
        kind: SceneKind,
        resolution: usize,
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("MESHOPT_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().with_context(|| format!("MESHOPT_THREADS: expected a positive integer, got '{value}'"))?;
    if n == 0 {
        bail!("MESHOPT_THREADS: must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("MESHOPT_THREADS")?;
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Run { spec, epsilon, max_iters, solvers, seed, timing } => {
            let overrides = run::Overrides { epsilon, max_iterations: max_iters, solvers, seed, timing };
            let outcome = run::run(&spec, &overrides)?;
            println!("wrote {}", outcome.output.display());
            Ok(outcome.all_converged())
        }
        Command::Generate { kind, resolution, out } => {
            let spec = generate::generate(kind, resolution, &out)?;
            println!("wrote {}", spec.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
