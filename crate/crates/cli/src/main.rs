//! `kgx`: reproducible command-line runs of the lesion-feature pipeline.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

mod commands;
mod config;
mod manifest;

use std::error::Error as StdError;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::PipelineConfig;
use kgx_core::llm::BackendKind;

/// Bad input: configuration, flags, or data that cannot satisfy a
/// command's preconditions.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StdError for Invalid {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendFlag {
    Mock,
    Remote,
}

#[derive(Debug, Parser)]
#[command(name = "kgx", version, about = "Knowledge-guided lesion feature extraction pipeline")]
pub struct Cli {
    /// JSON config file, or a run manifest to replay.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "kgx-out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendFlag>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fundus dataset with exact lesion truth.
    GenData(commands::data::GenDataArgs),
    /// Retrieve corpus passages and consolidate them into a rule base.
    BuildRules(commands::rules::BuildRulesArgs),
    /// Tune plan parameters with tabular Q-learning.
    Tune(commands::tune::TuneArgs),
    /// Run the verify-and-refine loop on a plan.
    Verify(commands::verify::VerifyArgs),
    /// Extract features, train a classifier and evaluate it.
    ExtractTrainEval(commands::train::TrainArgs),
    /// Fuse external deep-model predictions with knowledge outputs.
    Fuse(commands::fuse::FuseArgs),
    /// Summarize earlier runs.
    Report(commands::report::ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::BuildRules(_) => "build-rules",
            Command::Tune(_) => "tune",
            Command::Verify(_) => "verify",
            Command::ExtractTrainEval(_) => "extract-train-eval",
            Command::Fuse(_) => "fuse",
            Command::Report(_) => "report",
        }
    }
}

fn is_validation(e: &(dyn StdError + 'static)) -> bool {
    use kgx_core::classify::ClassifyError as C;
    use kgx_core::fusion::FusionError as F;
    use kgx_core::rules::RuleError as R;
    use kgx_core::verify::VerifyError as V;
    if e.is::<Invalid>() || e.is::<kgx_core::plan::PlanError>() {
        return true;
    }
    if let Some(v) = e.downcast_ref::<V>() {
        return matches!(v, V::MissingGroundTruth(_) | V::InvalidConfig(_) | V::Plan(_));
    }
    if let Some(c) = e.downcast_ref::<C>() {
        return matches!(
            c,
            C::StratificationImpossible { .. } | C::DegenerateLabels | C::SchemaMismatch { .. } | C::InvalidHyperparams(_)
        );
    }
    if let Some(f) = e.downcast_ref::<F>() {
        return matches!(f, F::ReportedMissingIds(_) | F::InvalidPrediction(_) | F::Parse { .. } | F::UndefinedMetric);
    }
    if let Some(r) = e.downcast_ref::<R>() {
        return !matches!(r, R::Io(_) | R::Csv(_));
    }
    false
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(is_validation) {
        1
    } else {
        2
    }
}

fn effective_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.bridge.backend = match b {
            BackendFlag::Mock => BackendKind::Mock,
            BackendFlag::Remote => BackendKind::Remote,
        };
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = effective_config(&cli)?;
    let out = cli.out.clone();
    let name = cli.command.name();
    match cli.command {
        Command::GenData(ref a) => a.apply(&mut cfg),
        Command::BuildRules(ref a) => a.apply(&mut cfg),
        Command::Tune(ref a) => a.apply(&mut cfg),
        Command::Verify(ref a) => a.apply(&mut cfg),
        Command::ExtractTrainEval(ref a) => a.apply(&mut cfg),
        Command::Fuse(ref a) => a.apply(&mut cfg),
        Command::Report(_) => {}
    }
    cfg.propagate_seed();
    cfg.validate()?;
    log::info!("{name}: seed {} -> {}", cfg.seed, out.display());
    match &cli.command {
        Command::GenData(_) => commands::data::run(&cfg, &out),
        Command::BuildRules(_) => commands::rules::run(&cfg, &out),
        Command::Tune(_) => commands::tune::run(&cfg, &out),
        Command::Verify(_) => commands::verify::run(&cfg, &out),
        Command::ExtractTrainEval(_) => commands::train::run(&cfg, &out),
        Command::Fuse(_) => commands::fuse::run(&cfg, &out),
        Command::Report(a) => commands::report::run(&cfg, a, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
