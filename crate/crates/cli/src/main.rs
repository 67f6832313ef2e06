//! `pw`: command-line driver for the pwlab laboratory.
//!
//! Exit codes: 0 success, 1 computation failed, 2 configuration invalid.
//! Errors are written to stderr as one JSON object.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use pwlab_cli::artifact::OutDir;
use pwlab_cli::commands;
use pwlab_cli::config::{self, apply_override, RunConfig};
use pwlab_cli::error::CliError;
use pwlab_cli::model::Model;

#[derive(Parser)]
#[command(name = "pw", version, about = "Propagators, bicharacteristics and spectra of weakly hyperbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key.path=json` assignments applied to the config before validation.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed of the Monte-Carlo generators.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Condition C certification of the characteristic roots.
    Check(RunArgs),
    /// Truncated Picard series with reference comparison.
    Solve(RunArgs),
    /// Smoothing probes of the Picard terms over frequency bands.
    Smoothing(RunArgs),
    /// Broken bicharacteristics as CSV.
    Flow(RunArgs),
    /// Endpoints of all broken flows from the seeds.
    Wavefront(RunArgs),
    /// Sublevel-set measures and their decomposition.
    Sublevel(RunArgs),
    /// Monte-Carlo measure of the set where the Egorov symbols are small.
    Xi(RunArgs),
    /// Galerkin eigenvalues and the Weyl fit.
    Weyl(RunArgs),
    /// L^p ratio table over dyadic bands.
    Lpscan(RunArgs),
    /// Prints the JSON schema of the run configuration.
    Schema,
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    for o in &args.overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut doc, &format!("seed={seed}"))?;
    }
    RunConfig::from_value(doc)
}

type Runner = fn(&RunConfig, &Model, &mut OutDir) -> Result<Value, CliError>;

fn run(name: &str, args: &RunArgs, runner: Runner) -> Result<Value, CliError> {
    let cfg = load(args)?;
    let dir = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let model = Model::build(&cfg)?;
    let mut out = OutDir::new(&dir, cfg.resolved())?;
    let result = runner(&cfg, &model, &mut out)?;
    Ok(json!({ "command": name, "result": result, "artifacts": out.written() }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&config::schema()).expect("schemas serialize"));
            return ExitCode::SUCCESS;
        }
        Command::Check(a) => run("check", a, commands::check),
        Command::Solve(a) => run("solve", a, commands::solve),
        Command::Smoothing(a) => run("smoothing", a, commands::smoothing),
        Command::Flow(a) => run("flow", a, commands::flow),
        Command::Wavefront(a) => run("wavefront", a, commands::wavefront),
        Command::Sublevel(a) => run("sublevel", a, commands::sublevel),
        Command::Xi(a) => run("xi", a, commands::xi),
        Command::Weyl(a) => run("weyl", a, commands::weyl),
        Command::Lpscan(a) => run("lpscan", a, commands::lpscan),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
