//! `nfsec` command line: one subcommand per experiment kind.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nfsec::experiments::{load_config_with, parse_config, preset, run_experiment, write_all, ExperimentKind, Overrides};
use nfsec::Error;

#[derive(Parser)]
#[command(name = "nfsec", version, about = "Near-field secure precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static and AN-averaged beam gain over a grid
    Beampattern(Common),
    /// Received samples at users and eavesdroppers
    Constellation(Common),
    /// Monte-Carlo BER over a grid
    BerGrid(Common),
    /// Monte-Carlo BER against user SINR
    BerSweep(Common),
    /// Eavesdropper on the ray through a user, spherical vs plane wave
    SameDirection(Common),
    /// Sum rates with scattered paths
    SumrateMultipath(Common),
    /// Ergodic secrecy rate against transmit power or location error
    SecrecyRateSweep(Common),
    /// Secrecy outage against target rate
    OutageCurve(Common),
    /// Secrecy outage over a grid
    SecrecyMap(Common),
    /// Built-in numerical checks; exits nonzero on any failure
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (default: the built-in preset for this experiment)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's root seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of time slots
    #[arg(long)]
    slots: Option<usize>,
    /// Override the number of independent trials
    #[arg(long)]
    trials: Option<usize>,
    /// Grid resolution as <nx>x<ny>
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Use the 40x40 array with 40 RF chains
    #[arg(long)]
    full_scale: bool,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected <nx>x<ny>, got {s:?}"))?;
    let a: usize = a.parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: usize = b.parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a == 0 || b == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((a, b))
}

fn split(cmd: Command) -> (ExperimentKind, Common) {
    use ExperimentKind as K;
    match cmd {
        Command::Beampattern(c) => (K::Beampattern, c),
        Command::Constellation(c) => (K::Constellation, c),
        Command::BerGrid(c) => (K::BerGrid, c),
        Command::BerSweep(c) => (K::BerSweep, c),
        Command::SameDirection(c) => (K::SameDirection, c),
        Command::SumrateMultipath(c) => (K::SumrateMultipath, c),
        Command::SecrecyRateSweep(c) => (K::SecrecyRateSweep, c),
        Command::OutageCurve(c) => (K::OutageCurve, c),
        Command::SecrecyMap(c) => (K::SecrecyMap, c),
        Command::Validate(c) => (K::Validate, c),
    }
}

fn run(kind: ExperimentKind, c: Common) -> Result<bool, Error> {
    let ov = Overrides {
        kind: Some(kind),
        seed: c.seed,
        slots: c.slots,
        trials: c.trials,
        grid: c.grid,
        full_scale: c.full_scale,
    };
    let cfg = match &c.config {
        Some(p) => load_config_with(p, &ov)?,
        None => parse_config(preset(kind), &ov)?,
    };
    let out = run_experiment(&cfg)?;
    for p in write_all(&out.artifacts, &c.out)? {
        println!("{}", p.display());
    }
    Ok(out.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (kind, common) = split(Cli::parse().command);
    match run(kind, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: one or more checks failed", kind.name());
            ExitCode::FAILURE
        }
        Err(Error::Validation(errs)) => {
            eprintln!("invalid configuration:");
            for e in errs {
                eprintln!("  - {e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
