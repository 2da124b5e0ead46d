use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tfmsep::harness::{cmd_evaluate, cmd_separate, cmd_synth, cmd_train, Method, RunConfig};
use tfmsep::Error;

#[derive(Parser)]
#[command(
    name = "tfmsep",
    version,
    about = "Two-source separation with time-frequency masks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the two synthetic source WAVs
    Synth(RunArgs),
    /// Train the mask network and write the model and history.csv
    Train(RunArgs),
    /// Separate the mixture and score the estimates
    Separate(RunArgs),
    /// Score estimate WAVs against reference WAVs
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config overlaid on the preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// oracle-binary | oracle-soft | dnn | fastica
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model file (default <out>/model.tfm)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Start from the full-scale preset (60 s, 44.1 kHz, hop 1)
    #[arg(long)]
    paper_mode: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "estimate", required = true, num_args = 1..)]
    estimates: Vec<PathBuf>,
    #[arg(long = "reference", required = true, num_args = 1..)]
    references: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Error> {
    let base = if args.paper_mode {
        RunConfig::paper()
    } else {
        RunConfig::desk()
    };
    let mut config = match &args.config {
        Some(path) => RunConfig::load(&base, path)?,
        None => base,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(method) = &args.method {
        config.method = method.parse::<Method>()?;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(model) = &args.model {
        config.model_path = Some(model.clone());
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(args) => {
            let out = cmd_synth(&resolve(&args)?)?;
            for path in &out.paths {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(args) => {
            let out = cmd_train(&resolve(&args)?)?;
            print!("{}", tfmsep::harness::history_csv(&out.history));
            println!("model: {}", out.model_path.display());
        }
        Command::Separate(args) => {
            let out = cmd_separate(&resolve(&args)?)?;
            print!("{}", out.report.table());
            for info in &out.report.ica {
                println!(
                    "fastica {}: converged={} iterations={}",
                    info.contrast, info.converged, info.iterations
                );
            }
        }
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args.estimates, &args.references, args.out.as_deref())?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
