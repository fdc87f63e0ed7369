use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spectral_iv::experiment::{resolve_study, run, ExperimentConfig, Study};
use spectral_iv::Error;

#[derive(Parser)]
#[command(name = "spectral-iv", version, about = "Adaptive spectral cut-off IV estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one sample per grid size and write it as CSV.
    Simulate(RunArgs),
    /// Run the adaptive estimator on simulated data or on `--input`.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// CSV sample with header `y,x,w`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo risk against the oracle risk over the grid.
    RiskCurve(RunArgs),
    /// Risk curve plus a log-log rate fit.
    RateStudy(RunArgs),
    /// How often the selected resolution lies inside the deterministic bracket.
    CoverageStudy(RunArgs),
    /// Oracle cut-offs, brackets and remainder terms next to the Monte Carlo risk.
    OracleStudy(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::Domain { .. } | Error::Json(_) => 2,
        Error::Io { .. } | Error::Csv(_) => 3,
        Error::DegenerateSample { .. } | Error::DegenerateStudy(_) | Error::InsufficientOracle { .. } => 4,
    }
}

fn execute(cli: Cli) -> spectral_iv::Result<()> {
    let (study, args, input) = match cli.command {
        Command::Simulate(a) => (Study::Simulate, a, None),
        Command::Estimate { run, input } => (Study::Estimate, run, input),
        Command::RiskCurve(a) => (Study::RiskCurve, a, None),
        Command::RateStudy(a) => (Study::RateStudy, a, None),
        Command::CoverageStudy(a) => (Study::CoverageStudy, a, None),
        Command::OracleStudy(a) => (Study::OracleStudy, a, None),
    };
    let mut config = ExperimentConfig::from_path(&args.config)?;
    config.study = Some(resolve_study(&config, study)?);
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    if let Some(jobs) = args.jobs {
        config.jobs = Some(jobs);
    }
    if let Some(input) = input {
        config.input_sample = Some(input);
    }
    let outcome = run(&config)?;
    for file in &outcome.files {
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
            eprintln!("{record}");
            ExitCode::from(exit_code(&err))
        }
    }
}
