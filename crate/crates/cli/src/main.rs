//! `agentprint`: fingerprint AI coding agents from pull-request artifacts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use agentprint_core::Error;
use clap::{Args, Parser, Subcommand};

use config::{Learner, RunConfig};

#[derive(Parser)]
#[command(
    name = "agentprint",
    version,
    about = "Fingerprint AI coding agents from pull-request artifacts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args)]
struct GlobalArgs {
    /// key=value settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for stage artifacts
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// NDJSON corpus -> features.csv (53 features + label + pr_id)
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Fail on the first malformed line instead of skipping it
        #[arg(long)]
        strict: bool,
    },
    /// Correlation clustering and R² redundancy elimination
    Reduce {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        corr_threshold: Option<f64>,
        #[arg(long)]
        r2_threshold: Option<f64>,
        #[arg(long)]
        min_epv: Option<f64>,
    },
    /// Train a multi-class model
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Restrict to the features listed in this file (one per line)
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_enum)]
        learner: Option<Learner>,
    },
    /// Stratified k-fold cross-validation
    Evaluate {
        #[arg(long, required_unless_present = "compare")]
        input: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_enum)]
        learner: Option<Learner>,
        #[arg(long)]
        folds: Option<usize>,
        /// Compare weighted F1 of a full and a reduced matrix over the same rows
        #[arg(long, num_args = 2, value_names = ["FULL", "REDUCED"], conflicts_with_all = ["input", "features"])]
        compare: Option<Vec<PathBuf>>,
    },
    /// Global and one-vs-rest importance fingerprints
    Fingerprint {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Classify PRs (NDJSON) or feature rows (CSV) with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Print the feature registry as JSON
    DumpFeatures,
    /// Print the per-language line classification table as JSON
    DumpProfiles,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) => 3,
        Error::RegistryMismatch(_) => 4,
        Error::Fold { source, .. } | Error::Agent { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn settings(cli: &Cli) -> agentprint_core::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.global.config {
        cfg.apply_file(path)?;
    }
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.global.jobs {
        cfg.jobs = Some(j);
    }
    match &cli.command {
        Command::Extract { strict, .. } | Command::Predict { strict, .. } if *strict => cfg.strict = true,
        _ => {}
    }
    match &cli.command {
        Command::Reduce {
            corr_threshold,
            r2_threshold,
            min_epv,
            ..
        } => {
            if let Some(v) = corr_threshold {
                cfg.reduction.correlation_threshold = *v;
            }
            if let Some(v) = r2_threshold {
                cfg.reduction.r2_threshold = *v;
            }
            if let Some(v) = min_epv {
                cfg.reduction.epv_minimum = *v;
            }
        }
        Command::Train { learner, .. } | Command::Evaluate { learner, .. } => {
            if let Some(l) = learner {
                cfg.learner = *l;
            }
            if let Command::Evaluate { folds: Some(k), .. } = &cli.command {
                cfg.folds = *k;
            }
        }
        Command::Fingerprint { top_k: Some(k), .. } | Command::Predict { top_k: Some(k), .. } => cfg.top_k = *k,
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> agentprint_core::Result<()> {
    let cfg = settings(cli)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("--jobs: {e}")))?;
    }
    let out = &cli.global.out;
    match &cli.command {
        Command::Extract { input, .. } => commands::extract(input, out, &cfg),
        Command::Reduce { input, .. } => commands::reduce(input, out, &cfg),
        Command::Train { input, features, .. } => commands::train(input, features.as_deref(), out, &cfg),
        Command::Evaluate {
            compare: Some(pair), ..
        } => commands::compare(&pair[0], &pair[1], out, &cfg),
        Command::Evaluate { input, features, .. } => commands::evaluate(
            input.as_deref().expect("clap enforces --input"),
            features.as_deref(),
            out,
            &cfg,
        ),
        Command::Fingerprint { input, features, .. } => commands::fingerprint(input, features.as_deref(), out, &cfg),
        Command::Predict { model, input, .. } => commands::predict(model, input, out, &cfg),
        Command::DumpFeatures => commands::dump_features(),
        Command::DumpProfiles => commands::dump_profiles(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
