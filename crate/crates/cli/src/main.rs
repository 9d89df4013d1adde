//! `convrec` command line: synthesize or ingest data, embed the catalog,
//! run experiments and report on them.
//!
//! Exit codes: 0 success, 1 configuration error, 2 too many failed
//! sessions (or another failure after the run started).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use convrec::corpus::{catalog_documents, item_interaction_counts, load_items, load_ratings};
use convrec::embedding::embed_catalog;
use convrec::exec::Execution;
use convrec::experiment::{
    content_level, embedding_provider, prepare_splits, prepare_thresholds, run_dir, run_experiment, write_report,
    CellSummary, ExperimentConfig, ExperimentError, Resources,
};
use convrec::synth::{generate, write_world, SynthConfig};

#[derive(Parser)]
#[command(name = "convrec", version, about = "Conversational top-n recommendation experiments")]
struct Cli {
    /// More log output (repeat for trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic clustered catalog and ratings.
    Synth(SynthArgs),
    /// Load and validate the data, sample users and write their splits.
    Ingest(ConfigArg),
    /// Embed the catalog and compute similarity thresholds.
    Embed(EmbedArgs),
    /// Run (or resume) an experiment.
    Run(RunArgs),
    /// Summaries, popularity tables and plot data for a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Generator settings (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Re-embed every item even when cached.
    #[arg(long)]
    refresh: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Run sessions one at a time.
    #[arg(long)]
    sequential: bool,
    /// Worker threads (overrides the config; 0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Skip writing the report after the run.
    #[arg(long)]
    no_report: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment config; the run directory and catalog come from it.
    #[arg(short, long, conflicts_with = "run_dir", required_unless_present = "run_dir")]
    config: Option<PathBuf>,
    /// Run directory, when the config is not at hand (titles are left blank).
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Self {
            code: if e.is_configuration() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn init_logging(verbose: u8, quiet: bool) {
    let default = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    Ok(ExperimentConfig::load(path)?)
}

fn synth(args: SynthArgs) -> CmdResult {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.items {
        cfg.n_items = v;
    }
    if let Some(v) = args.clusters {
        cfg.n_clusters = v;
    }
    if let Some(v) = args.users {
        cfg.n_users = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if cfg.n_clusters == 0 || cfg.n_items < cfg.n_clusters || cfg.min_ratings > cfg.max_ratings {
        return Err(Failure::config("need items ≥ clusters ≥ 1 and min_ratings ≤ max_ratings"));
    }
    let world = generate(&cfg);
    let files = write_world(&world, &args.out).map_err(|e| Failure::config(e))?;
    println!(
        "wrote {} items and {} ratings to {}, {}, {}",
        world.catalog.len(),
        world.interactions.len(),
        files.items.display(),
        files.ratings.display(),
        files.supplement.display()
    );
    Ok(())
}

fn ingest(args: ConfigArg) -> CmdResult {
    let config = load_config(&args.config)?;
    let interactions = load_ratings(&config.data.ratings).map_err(ExperimentError::from)?;
    let catalog = load_items(&config.data.items, config.data.supplement.as_deref()).map_err(ExperimentError::from)?;
    let counts = item_interaction_counts(&interactions);
    let unknown = counts.keys().filter(|id| catalog.get(id).is_none()).count();
    if unknown > 0 {
        tracing::warn!(unknown, "rated items missing from the catalog");
    }
    if config.data.splits.as_ref().is_some_and(|p| p.exists()) {
        tracing::info!("splits file exists; delete it to resample users");
    }
    let splits = prepare_splits(&config, &interactions)?;
    println!(
        "{} items, {} ratings, {} users split{}",
        catalog.len(),
        interactions.len(),
        splits.len(),
        config
            .data
            .splits
            .as_ref()
            .map(|p| format!(" ({})", p.display()))
            .unwrap_or_default()
    );
    Ok(())
}

fn embed(args: EmbedArgs, exec: Execution) -> CmdResult {
    let config = load_config(&args.config.config)?;
    let catalog = load_items(&config.data.items, config.data.supplement.as_deref()).map_err(ExperimentError::from)?;
    let level = content_level(&config)?;
    let provider = embedding_provider(&config.embedding)?;
    let docs = catalog_documents(&catalog, level).map_err(ExperimentError::from)?;
    let store = embed_catalog(provider.as_ref(), &docs, level, config.data.embeddings.as_deref(), args.refresh)
        .map_err(ExperimentError::from)?;
    if args.refresh {
        if let Some(p) = config.data.thresholds.as_ref().filter(|p| p.exists()) {
            fs::remove_file(p).map_err(|e| ExperimentError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
        }
    }
    let quantiles = prepare_thresholds(&config, &store, exec)?;
    println!(
        "{} items embedded at level {} (dim {}), {} thresholds at q = {}",
        store.len(),
        level.get(),
        store.dim(),
        quantiles.len(),
        quantiles.q()
    );
    Ok(())
}

fn print_summary(cells: &[CellSummary]) {
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    println!(
        "{:<36} {:>8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "cell", "sessions", "prec", "ndcg", "map", "ils", "cov", "nov", "ur"
    );
    for c in cells {
        println!(
            "{:<36} {:>8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            c.cell,
            format!("{}/{}", c.sessions - c.failed, c.sessions),
            f(c.precision.mean),
            f(c.ndcg.mean),
            f(c.map.mean),
            f(c.ils.mean),
            f(c.coverage.mean),
            f(c.novelty.mean),
            f(c.unmatched_ratio.mean)
        );
    }
}

fn run(args: RunArgs) -> CmdResult {
    let mut config = load_config(&args.config.config)?;
    if let Some(t) = args.threads {
        config.parallelism = t;
    }
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let res = Resources::prepare(&config, exec)?;
    let client = res.client(&config.client)?;
    let outcome = run_experiment(&config, &res, client.as_ref(), exec)?;
    tracing::info!(
        sessions = outcome.rows.len(),
        executed = outcome.executed,
        failed = outcome.failed,
        dir = %outcome.run_dir.display(),
        "run finished"
    );
    if !args.no_report {
        let files = write_report(&outcome.run_dir, Some(&res.catalog))?;
        print_summary(&files.summary);
    }
    outcome.check()?;
    Ok(())
}

fn report(args: ReportArgs) -> CmdResult {
    let (dir, catalog) = match (&args.config, &args.run_dir) {
        (Some(c), _) => {
            let config = load_config(c)?;
            let catalog =
                load_items(&config.data.items, config.data.supplement.as_deref()).map_err(ExperimentError::from)?;
            (run_dir(&config), Some(catalog))
        }
        (None, Some(d)) => (d.clone(), None),
        (None, None) => return Err(Failure::config("either --config or --run-dir is required")),
    };
    if !dir.is_dir() {
        return Err(Failure::config(format!("no run directory at {}", dir.display())));
    }
    let files = write_report(&dir, catalog.as_ref())?;
    print_summary(&files.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Embed(a) => embed(a, Execution::Parallel),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
