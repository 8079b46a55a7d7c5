use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shielded_lmc::experiment::{run, ExperimentConfig, ExperimentKind};
use shielded_lmc::Error;

#[derive(Parser)]
#[command(version, about = "Shielded Langevin Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Planar Gaussian mixture with circular obstacles, one run per alpha.
    Gmm(RunArgs),
    /// SER sweep of ML, annealed ULA and shielded MIMO detectors.
    Mimo(RunArgs),
    /// Infeasible-step fractions of naive vs shielded dynamics.
    Naive(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; omitted keys take the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        Error::NumericalFailure { .. }
        | Error::Initialization { .. }
        | Error::DegenerateConstraint { .. }
        | Error::Detection(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Gmm(a) => (ExperimentKind::Gmm, a),
        Command::Mimo(a) => (ExperimentKind::Mimo, a),
        Command::Naive(a) => (ExperimentKind::NaiveAblation, a),
    };
    let result = (|| {
        let mut cfg = match &args.config {
            Some(path) => ExperimentConfig::load(path, kind)?,
            None => ExperimentConfig::default_for(kind),
        };
        if cfg.experiment != kind {
            return Err(Error::Config(format!(
                "config declares experiment `{}` but `{}` was requested",
                cfg.experiment.name(),
                kind.name()
            )));
        }
        if let Some(seed) = args.seed {
            cfg.sampler.seed = seed;
        }
        if let Some(out) = args.out {
            cfg.output.dir = out;
        }
        cfg.output.plot |= args.plot;
        let out = cfg.output.dir.clone();
        run(&cfg, &out)?;
        Ok(out)
    })();
    match result {
        Ok(out) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
