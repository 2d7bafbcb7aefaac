use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neurule::cli::{self, parse_layer_choice, Outcome, RunConfig};
use neurule::ensemble::parse_criteria;

#[derive(Parser)]
#[command(
    name = "neurule",
    version,
    about = "Decision rules and rule ensembles over neuron activations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run raw inputs through the model and write activation CSVs.
    Activations(Common),
    /// Grow one tree per (feature, layer) and dump its rules.
    Rules(Common),
    /// Build ensembles and comparison tables from the rule dumps.
    Ensemble(Common),
    /// All stages in one pass.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated criteria, e.g. `top:1,rec:95,avg`.
    #[arg(long)]
    criteria: Option<String>,
    /// Ensemble layer: `auto`, an index, or a layer id.
    #[arg(long)]
    layer: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(common: &Common) -> neurule::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(c) = &common.criteria {
        cfg.criteria = parse_criteria(c)?;
    }
    if let Some(l) = &common.layer {
        cfg.ensemble_layer = parse_layer_choice(l);
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    Ok(cfg)
}

fn execute(command: &Command) -> anyhow::Result<Outcome> {
    let (common, stage): (&Common, fn(&RunConfig) -> neurule::Result<Outcome>) = match command {
        Command::Activations(c) => (c, cli::cmd_activations),
        Command::Rules(c) => (c, cli::cmd_rules),
        Command::Ensemble(c) => (c, cli::cmd_ensemble),
        Command::Run(c) => (c, cli::cmd_run),
    };
    let cfg = load(common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    Ok(pool.install(|| stage(&cfg))?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    match execute(&args.command) {
        Ok(outcome) => {
            for s in &outcome.skipped {
                eprintln!("skipped {}: {}", s.feature, s.reason);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::EXIT_ERROR as u8)
        }
    }
}
