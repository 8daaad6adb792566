use clap::{Parser, Subcommand};
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use stochburgers_cli::config::{self, RunConfig};
use stochburgers_cli::{execute, rerun, CliError, Task, DEFAULT_OUT_DIR, OUT_DIR_ENV};

/// Stochastic Burgers in self-similar variables: simulation and verification.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Directory for CSV, report and manifest files.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out_dir: PathBuf,

    /// Overrides ensemble.root_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one path and write the trajectory CSV.
    Simulate {
        /// TOML config file, `-` for stdin; defaults when omitted.
        config: Option<PathBuf>,
    },
    /// Run one verification suite.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(config::SUITES))]
        suite: String,
        config: Option<PathBuf>,
    },
    /// KS and W1 distances between each random PDE and its limit, per epsilon.
    CompareLimit { config: Option<PathBuf> },
    /// Shorthand for `verify basis`.
    BasisCheck { config: Option<PathBuf> },
    /// Re-executes the run recorded in a manifest.
    Rerun { manifest: PathBuf },
}

fn read_input(path: &PathBuf) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))
    }
}

fn load(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => read_input(p)?,
        None => String::new(),
    };
    let mut cfg = config::parse_any(&text).map_err(CliError::Config)?;
    if let Some(s) = seed {
        cfg.ensemble.root_seed = s;
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<u8, CliError> {
    let outcome = match &args.command {
        Command::Rerun { manifest } => rerun(&read_input(manifest)?, &args.out_dir)?,
        Command::Simulate { config } => execute(&Task::Simulate, &load(config, args.seed)?, &args.out_dir)?,
        Command::Verify { suite, config } => execute(&Task::Verify(suite.clone()), &load(config, args.seed)?, &args.out_dir)?,
        Command::CompareLimit { config } => execute(&Task::CompareLimit, &load(config, args.seed)?, &args.out_dir)?,
        Command::BasisCheck { config } => execute(&Task::Verify("basis".into()), &load(config, args.seed)?, &args.out_dir)?,
    };
    for c in &outcome.checks {
        println!("{}", c.summary());
    }
    if let Some(f) = &outcome.failure {
        eprintln!("numerical failure: {f} (partial artifacts kept)");
    }
    for a in &outcome.artifacts {
        eprintln!("wrote {}", a.path.display());
    }
    eprintln!("manifest {}", outcome.manifest.display());
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
