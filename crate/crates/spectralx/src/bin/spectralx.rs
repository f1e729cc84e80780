//! Command line front end: resolves a configuration from a file and flags,
//! then runs the requested pipeline stage. Errors print a machine-readable
//! JSON object and exit nonzero.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spectralx::dataset::save_ucr;
use spectralx::experiment::{
    load_dataset, run_stages, ExperimentConfig, StageSelection,
};
use spectralx::Result;

#[derive(Parser)]
#[command(
    name = "spectralx",
    version,
    about = "Spectral explanations for black-box time-series classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and write it as a TSV file.
    Synth(CommonArgs),
    /// Train the configured classifier and save model.json.
    Train(CommonArgs),
    /// Write per-class explanation files.
    Explain(CommonArgs),
    /// Write explanations plus metrics.csv.
    Eval(CommonArgs),
    /// Write explanations plus masking plots.
    Plot(CommonArgs),
    /// Full pipeline: model, explanations, metrics, plots, manifest.
    Run(CommonArgs),
}

/// Every flag mirrors a config-file key of the same name; flags win.
#[derive(Args)]
struct CommonArgs {
    /// Flat key=value configuration file with optional [section] headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// "synthetic" or a path to a UCR-format TSV file.
    #[arg(long)]
    dataset: Option<String>,
    /// softmax | mlp | band-rule | external:<cmd>
    #[arg(long)]
    classifier: Option<String>,
    /// Comma-separated: insertion | deletion | combined | rise | lime | kernelshap
    #[arg(long)]
    method: Option<String>,
    /// time | tf | both
    #[arg(long)]
    domain: Option<String>,
    /// STFT window size (samples).
    #[arg(long)]
    window: Option<usize>,
    /// STFT hop size; must be half the window.
    #[arg(long)]
    hop: Option<usize>,
    /// Perturbations per iteration / per explanation.
    #[arg(long)]
    perturbations: Option<usize>,
    /// Features toggled per perturbation mask.
    #[arg(long = "mask-size")]
    mask_size: Option<usize>,
    /// Insertion weight of the combined score, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Features the greedy explainers extract.
    #[arg(long)]
    topk: Option<usize>,
    /// Global seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory (or TSV path for synth).
    #[arg(long)]
    out: Option<PathBuf>,
    /// cumulative | single
    #[arg(long = "faithfulness-mode")]
    faithfulness_mode: Option<String>,
    /// rbp | zero
    #[arg(long = "deletion-fill")]
    deletion_fill: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        put("dataset", self.dataset.clone());
        put("classifier", self.classifier.clone());
        put("method", self.method.clone());
        put("domain", self.domain.clone());
        put("window", self.window.map(|v| v.to_string()));
        put("hop", self.hop.map(|v| v.to_string()));
        put("perturbations", self.perturbations.map(|v| v.to_string()));
        put("mask-size", self.mask_size.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("topk", self.topk.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|v| v.display().to_string()));
        put("faithfulness-mode", self.faithfulness_mode.clone());
        put("deletion-fill", self.deletion_fill.clone());
        map
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_sources(self.config.as_deref(), &self.overrides())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!(
                "{}",
                serde_json::json!({ "kind": e.kind(), "message": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Synth(args) => {
            let cfg = args.resolve()?;
            let data = load_dataset(&cfg)?;
            let out = if cfg.out.extension().is_some() {
                cfg.out.clone()
            } else {
                cfg.out.join("synthetic.tsv")
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_ucr(&data, &out)?;
            Ok(serde_json::json!({
                "out": out.display().to_string(),
                "samples": data.len(),
                "classes": data.class_count,
                "sample_length": data.sample_length(),
            })
            .to_string())
        }
        Command::Train(args) => run_with(
            &args,
            StageSelection {
                model: true,
                explanations: false,
                metrics: false,
                plots: false,
                manifest: true,
            },
        ),
        Command::Explain(args) => run_with(
            &args,
            StageSelection {
                model: false,
                explanations: true,
                metrics: false,
                plots: false,
                manifest: false,
            },
        ),
        Command::Eval(args) => run_with(
            &args,
            StageSelection {
                model: false,
                explanations: true,
                metrics: true,
                plots: false,
                manifest: false,
            },
        ),
        Command::Plot(args) => run_with(
            &args,
            StageSelection {
                model: false,
                explanations: true,
                metrics: false,
                plots: true,
                manifest: false,
            },
        ),
        Command::Run(args) => run_with(&args, StageSelection::all()),
    }
}

fn run_with(args: &CommonArgs, stages: StageSelection) -> Result<String> {
    let cfg = args.resolve()?;
    let artifacts = run_stages(&cfg, stages)?;
    Ok(serde_json::to_string(&artifacts)?)
}
