use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skycast::pipeline::run::{self, Layout};
use skycast::pipeline::PipelineConfig;

const BUNDLED: &str = include_str!("../../../configs/bundled.toml");

#[derive(Parser)]
#[command(name = "skycast", version, about = "Intra-hour solar forecasting from sky images with kernel regressors")]
struct Cli {
    /// TOML configuration; the bundled configuration when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory for every stage's inputs and outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic advecting-cloud scene.
    Synth,
    /// Extract feature vectors and targets from the scene.
    Features,
    /// Split off the test days and LOF-select the training set.
    Select,
    /// Grid-search every family, mode and expert.
    Cv,
    /// Fit the configured models.
    Fit,
    /// Write test-set forecasts for every model and for persistence.
    Predict,
    /// Score fitted models, or a predictions CSV, against persistence.
    Evaluate {
        /// Score this predictions file instead of the fitted models.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Write MAPE and FS tables and plots from the last evaluation.
    Report,
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig, skycast::Error> {
    match path {
        Some(p) if !p.exists() => Err(skycast::Error::MissingInput(p.clone())),
        Some(p) => PipelineConfig::load(p),
        None => PipelineConfig::from_toml(BUNDLED),
    }
}

fn execute(cli: &Cli) -> Result<(), skycast::Error> {
    let cfg = load_config(cli.config.as_ref())?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = Layout::new(&cli.out);
    std::fs::create_dir_all(&out.root)?;
    match &cli.command {
        Command::Synth => {
            let scene = run::synth(&cfg, seed, &out)?;
            println!("wrote {} frames to {}", scene.len(), out.scene().display());
        }
        Command::Features => {
            let (data, w) = run::features(&cfg, seed, &out)?;
            println!(
                "wrote {} samples to {} (weights: {} field, {} mean flow, {} uniform)",
                data.len(),
                out.dataset().display(),
                w.field,
                w.mean_flow,
                w.uniform
            );
        }
        Command::Select => {
            let (train, test) = run::select(&cfg, &out)?;
            println!("selected {} training and {} test samples", train.len(), test.len());
        }
        Command::Cv => {
            let summary = run::cv(&cfg, seed, &out)?;
            for e in &summary.entries {
                let best = e.report.mean_mape[e.report.selected].unwrap_or(f64::NAN);
                println!("{}/{}/{:?}: candidate {} (MAPE {best:.3}%)", e.family, e.mode, e.expert, e.report.selected);
            }
        }
        Command::Fit => {
            for m in run::fit(&cfg, seed, &out)? {
                println!("wrote {}", out.models().join(format!("{}.json", m.name())).display());
            }
        }
        Command::Predict => {
            for (name, p) in run::predict(&cfg, &out)? {
                println!("{name}: {} forecasts", p.predicted.len());
            }
        }
        Command::Evaluate { predictions } => {
            let eval = match predictions {
                Some(p) => run::evaluate_file(&cfg, p, &out)?,
                None => run::evaluate_models(&cfg, &out)?,
            };
            for (name, r) in &eval.models {
                let fs: Vec<String> =
                    r.horizons.iter().map(|h| h.fs.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))).collect();
                println!("{name}: MAPE {:.3}%, FS [{}]", r.mean_mape(), fs.join(", "));
            }
        }
        Command::Report => {
            run::report(&out)?;
            println!("wrote {}", out.report().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ skycast::Error::MissingInput(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {:#}", anyhow::Error::new(e).context("skycast failed"));
            ExitCode::FAILURE
        }
    }
}
