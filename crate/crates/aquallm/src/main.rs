use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use aquallm::pipeline::STATS;
use aquallm::{load_config, Pipeline, PipelineConfig, Stage};
use clap::{Parser, Subcommand};

const EXIT_USAGE: u8 = 1;
const EXIT_STAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "aquallm",
    version,
    about = "Build audio question answering datasets from annotated captions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order
    Run(Args),
    /// Read the manifest and CoNLL-U annotations into the corpus checkpoint
    Ingest(Args),
    /// Extract answer candidates from every caption
    Extract(Args),
    /// Generate questions and inject yes/no/zero pairs
    Generate(Args),
    /// Keep pairs that survive the round-trip QA check
    Filter(Args),
    /// Expand accepted pairs with paraphrased questions
    Paraphrase(Args),
    /// Build the final deduplicated dataset
    Assemble(Args),
    /// Compute dataset statistics, write the CSV export and print the stats as JSON
    Stats(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Corpus manifest (JSON lines)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Caption annotations (CoNLL-U)
    #[arg(long)]
    conllu: Option<PathBuf>,
    /// Pipeline config (JSON); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for checkpoints and the run ledger
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Skip stages whose checkpoints are up to date
    #[arg(long)]
    resume: bool,
    /// Model server URL, or "mock"; overrides the config
    #[arg(long)]
    gateway_endpoint: Option<String>,
}

impl Command {
    fn parts(self) -> (Option<Stage>, Args) {
        match self {
            Command::Run(a) => (None, a),
            Command::Ingest(a) => (Some(Stage::Ingest), a),
            Command::Extract(a) => (Some(Stage::Extract), a),
            Command::Generate(a) => (Some(Stage::Generate), a),
            Command::Filter(a) => (Some(Stage::Filter), a),
            Command::Paraphrase(a) => (Some(Stage::Paraphrase), a),
            Command::Assemble(a) => (Some(Stage::Assemble), a),
            Command::Stats(a) => (Some(Stage::Stats), a),
        }
    }
}

fn usage(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn load(args: &Args) -> Result<PipelineConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            load_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(endpoint) = &args.gateway_endpoint {
        cfg.gateway.endpoint = endpoint.clone();
        cfg.validate().map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();

    let (stage, args) = cli.command.parts();
    let cfg = match load(&args) {
        Ok(cfg) => cfg,
        Err(e) => return usage(e),
    };
    let Some(workdir) = args.workdir.clone().or_else(|| cfg.workdir.clone()) else {
        return usage("--workdir is required (or set workdir in the config)");
    };
    if matches!(stage, None | Some(Stage::Ingest))
        && (args.manifest.is_none() || args.conllu.is_none())
    {
        return usage("--manifest and --conllu are required");
    }
    if args.resume && stage.is_some() {
        log::warn!("--resume only applies to `run`; ignored");
    }

    let pipeline = Pipeline::new(cfg, workdir, args.manifest, args.conllu);
    let result = match stage {
        None => pipeline.run(args.resume).map(|_| ()),
        Some(stage) => pipeline.run_stage(stage),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_STAGE);
    }
    if stage == Some(Stage::Stats) {
        match fs::read_to_string(pipeline.workdir().join(STATS)) {
            Ok(stats) => print!("{stats}"),
            Err(e) => {
                eprintln!("error: stats stage failed: cannot read {STATS}: {e}");
                return ExitCode::from(EXIT_STAGE);
            }
        }
    }
    ExitCode::SUCCESS
}
