use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracevis::{Pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "tracevis", version, about = "Visualize how a classifier's decision landscape evolves across training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct StageArgs {
    /// Pipeline configuration (JSON)
    config: PathBuf,
    /// Rerun prerequisite stages even if they completed before
    #[arg(long)]
    force: bool,
    /// Only print errors
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the subject classifier and save one checkpoint per epoch
    TrainSubject(StageArgs),
    /// Synthesize boundary points for every checkpoint
    Synthesize(StageArgs),
    /// Fit visualization models and write epoch bundles
    Fit(StageArgs),
    /// Compute the metrics report, including the PCA baseline
    Evaluate(StageArgs),
    /// Render landscape images and epoch bundles
    Render(StageArgs),
    /// Run every stage, skipping those already complete
    Run(StageArgs),
    /// Serve a run directory over HTTP
    Serve {
        run_dir: PathBuf,
        #[arg(long, env = "TRACEVIS_PORT", default_value_t = 8080)]
        port: u16,
    },
}

fn pipeline(args: &StageArgs) -> tracevis::Result<Pipeline> {
    let config = PipelineConfig::load(Path::new(&args.config))?;
    Ok(Pipeline::new(config).force(args.force).quiet(args.quiet))
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::TrainSubject(a) => pipeline(&a)?.run_stage(Stage::Subject)?,
        Command::Synthesize(a) => pipeline(&a)?.run_stage(Stage::Synthesize)?,
        Command::Fit(a) => pipeline(&a)?.run_fit()?,
        Command::Evaluate(a) => pipeline(&a)?.run_stage(Stage::Evaluate)?,
        Command::Render(a) => pipeline(&a)?.run_stage(Stage::Render)?,
        Command::Run(a) => pipeline(&a)?.run_all()?,
        Command::Serve { run_dir, port } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(tracevis::server::serve(&run_dir, port))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
