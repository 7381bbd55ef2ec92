use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emogan_cli::config::ExperimentConfig;
use emogan_cli::error::{ExpError, ExpResult, EXIT_OK};
use emogan_cli::experiments;
use emogan_core::{Emotion, ModelKind};

#[derive(Parser)]
#[command(
    name = "emogan",
    version,
    about = "Train and evaluate emotion feature generators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model to run (repeatable), overriding the configuration.
    #[arg(long = "model")]
    models: Vec<ModelKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Vanilla vs information-regularized GAN on a 2-d mixture.
    ToyCompare(Common),
    /// Leave-one-session-out cross-validation on one corpus.
    Cv(Common),
    /// Train on the source corpus, evaluate against the target corpus.
    CrossCorpus(Common),
    /// Classifier accuracy on the target corpus with augmented training data.
    LowResource(Common),
    /// Write synthetic samples from a checkpoint or a freshly trained model.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Restrict samples to one class (name or index).
        #[arg(long)]
        class: Option<String>,
    },
    /// Score a synthetic feature CSV against a real one.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
    },
}

fn load(common: &Common) -> ExpResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if !common.models.is_empty() {
        cfg.models = common.models.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_class(s: &str) -> ExpResult<usize> {
    if let Ok(i) = s.parse::<usize>() {
        return Emotion::from_index(i)
            .map(Emotion::index)
            .ok_or_else(|| ExpError::Config(format!("unknown class id {i}")));
    }
    s.parse::<Emotion>()
        .map(Emotion::index)
        .map_err(ExpError::Config)
}

fn run(cli: Cli) -> ExpResult<()> {
    match cli.command {
        Command::ToyCompare(c) => {
            let cfg = load(&c)?;
            let outcome = experiments::run_toy_compare(&cfg, &cfg.output_dir)?;
            let bijective = outcome
                .seeds
                .iter()
                .filter(|s| s.info_purity.bijective)
                .count();
            let collapsed = outcome
                .seeds
                .iter()
                .filter(|s| s.vanilla_coverage < 4)
                .count();
            println!(
                "{} seeds: info bijective in {bijective}, vanilla missing a mode in {collapsed}",
                outcome.seeds.len()
            );
            report_dir(&cfg.output_dir);
        }
        Command::Cv(c) => {
            let cfg = load(&c)?;
            let outcome = experiments::run_cv(&cfg, &cfg.output_dir)?;
            println!("{}", outcome.metrics);
            let failed = outcome.runs.iter().flat_map(|r| {
                r.convergence
                    .iter()
                    .filter(|c| !c.pass)
                    .map(move |c| (r, c))
            });
            for (r, c) in failed {
                println!(
                    "convergence: {} fold {} {} = {:.4} (limit {})",
                    r.model, r.fold, c.name, c.value, c.limit
                );
            }
            report_dir(&cfg.output_dir);
        }
        Command::CrossCorpus(c) => {
            let cfg = load(&c)?;
            let outcome = experiments::run_cross_corpus(&cfg, &cfg.output_dir)?;
            println!("{}", outcome.metrics);
            report_dir(&cfg.output_dir);
        }
        Command::LowResource(c) => {
            let cfg = load(&c)?;
            let outcome = experiments::run_low_resource(&cfg, &cfg.output_dir)?;
            println!("{:>9} {:>8} {:>8}", "fraction", "n_synth", "uwa");
            for cell in &outcome.cells {
                println!(
                    "{:>9.2} {:>8} {:>7.2}%",
                    cell.fraction,
                    cell.n_synth,
                    100.0 * cell.uwa
                );
            }
            report_dir(&cfg.output_dir);
        }
        Command::Generate {
            common,
            checkpoint,
            n,
            class,
        } => {
            let cfg = load(&common)?;
            let class = class.as_deref().map(parse_class).transpose()?;
            experiments::run_generate(&cfg, checkpoint.as_deref(), n, class, &cfg.output_dir)?;
            report_dir(&cfg.output_dir);
        }
        Command::Metrics {
            common,
            real,
            synthetic,
        } => {
            let cfg = load(&common)?;
            let report = experiments::run_metrics(&cfg, &real, &synthetic, &cfg.output_dir)?;
            println!("{report}");
        }
    }
    Ok(())
}

fn report_dir(dir: &Path) {
    println!("outputs written to {}", dir.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
