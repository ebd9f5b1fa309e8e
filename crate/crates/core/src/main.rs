use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zcp_har::pipeline::{synth, Experiment, ExperimentConfig, StageSummary, TrainSubset};
use zcp_har::proxies::ProxyName;
use zcp_har::Result;

#[derive(Parser)]
#[command(name = "zcp-har", version, about = "Zero-cost proxy architecture search for activity recognition")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Override the configured experiment id.
    #[arg(long, global = true)]
    experiment: Option<String>,
    /// Worker threads (default: configured value, else available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log per-architecture progress; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw architectures from the search space.
    Sample,
    /// Compute zero-cost proxies for every sampled architecture.
    Score,
    /// Fully train a subset of the sampled architectures.
    Train(TrainArgs),
    /// Compute ranking metrics over the trained architectures.
    Evaluate,
    /// Re-evaluate trained models on noisy test data.
    NoiseEval,
    /// Write the configured synthetic corpus as CSV files.
    Synth,
}

#[derive(Args)]
struct TrainArgs {
    /// Train the K best architectures by --proxy.
    #[arg(long, requires = "proxy", conflicts_with_all = ["all", "hashes"])]
    top_k: Option<usize>,
    #[arg(long, requires = "top_k")]
    proxy: Option<ProxyName>,
    /// Train every sampled architecture.
    #[arg(long, conflicts_with = "hashes")]
    all: bool,
    /// Train these spec hashes.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    hashes: Vec<String>,
}

impl TrainArgs {
    fn subset(&self) -> TrainSubset {
        match (self.top_k, self.proxy) {
            (Some(k), Some(proxy)) => TrainSubset::TopK { k, proxy },
            _ if !self.hashes.is_empty() => TrainSubset::Hashes(self.hashes.clone()),
            _ => TrainSubset::All,
        }
    }
}

fn report(stage: &str, s: StageSummary) {
    println!("{stage}: {} added, {} already complete", s.added, s.skipped);
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(id) = &cli.experiment {
        cfg.experiment_id = id.clone();
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Command::Synth = cli.command {
        cfg.validate()?;
        println!("{}", synth(&cfg)?.display());
        return Ok(());
    }
    let exp = Experiment::new(cfg)?;
    match &cli.command {
        Command::Sample => report("sample", exp.sample()?),
        Command::Score => report("score", exp.score()?),
        Command::Train(args) => report("train", exp.train(&args.subset())?),
        Command::Evaluate => {
            let r = exp.evaluate()?;
            println!("evaluate: {} trained architectures, report in {}", r.n_rows, exp.dir().display());
        }
        Command::NoiseEval => {
            let r = exp.noise_eval()?;
            println!("noise-eval: {} noise levels, report in {}", r.levels.len(), exp.dir().display());
        }
        Command::Synth => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
