//! `placerec`: batch front end for the place-classification pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use placerec_core::pipeline::{
    cmd_encode, cmd_evaluate, cmd_features, cmd_predict, cmd_train, cmd_vocab, load_predictions, synth_dataset,
    Manifest, PipelineConfig, SynthSpec, Workspace,
};
use placerec_core::Error;

#[derive(Parser, Debug)]
#[command(name = "placerec", version, about = "Visual place classification pipeline")]
struct Cli {
    /// Configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "placerec-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Selection {
    /// Dataset manifest (TSV: path, label, sequence).
    manifest: PathBuf,
    /// Comma-separated sequence ids to use; all rows when omitted.
    #[arg(long, value_delimiter = ',')]
    sequences: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract color histograms and local descriptors.
    Features(Selection),
    /// Build the visual vocabulary.
    Vocab(Selection),
    /// Encode images as visual-word histograms.
    Encode(Selection),
    /// Train a classifier.
    Train {
        #[command(flatten)]
        sel: Selection,
        /// Model file; defaults to `<out>/model.bin`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify images with a trained model.
    Predict {
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output CSV; defaults to `<out>/predictions.csv`.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score predictions and write the report files.
    Evaluate {
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Report directory; defaults to `<out>/report`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset and its manifest into `<out>`.
    SynthDataset {
        #[arg(long, default_value_t = 9)]
        classes: usize,
        #[arg(long, default_value_t = 60)]
        images_per_class: usize,
        #[arg(long, default_value_t = 3)]
        sequences: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 192)]
        height: usize,
    },
}

enum Failure {
    Data(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

fn manifest_of(sel: &Selection) -> Result<Manifest, Failure> {
    let m = Manifest::load(&sel.manifest).map_err(|e| match e {
        // a manifest the user pointed at but we cannot read is their problem
        Error::Io { .. } => Failure::Data(e.to_string()),
        other => other.into(),
    })?;
    let m = if sel.sequences.is_empty() { m } else { m.select_sequences(&sel.sequences) };
    if m.is_empty() {
        return Err(Failure::Data("no manifest rows selected".into()));
    }
    Ok(m)
}

fn data_io(e: Error) -> Failure {
    match e {
        Error::Io { .. } => Failure::Data(e.to_string()),
        other => other.into(),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(data_io)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ws = Workspace::new(&cli.out);
    let or = |p: &Option<PathBuf>, d: PathBuf| p.clone().unwrap_or(d);
    match &cli.command {
        Command::Features(sel) => {
            let stats = cmd_features(&manifest_of(sel)?, &cfg, &ws)?;
            info!("{} images failed", stats.failed);
        }
        Command::Vocab(sel) => {
            cmd_vocab(&manifest_of(sel)?, &cfg, &ws)?;
        }
        Command::Encode(sel) => {
            // missing vocabulary or bundles mean an earlier stage was skipped
            cmd_encode(&manifest_of(sel)?, &cfg, &ws).map_err(data_io)?;
        }
        Command::Train { sel, model } => {
            cmd_train(&manifest_of(sel)?, &cfg, &ws, &or(model, ws.model_path())).map_err(data_io)?;
        }
        Command::Predict { sel, model, predictions } => {
            cmd_predict(
                &manifest_of(sel)?,
                &cfg,
                &ws,
                &or(model, ws.model_path()),
                &or(predictions, ws.predictions_path()),
            )
            .map_err(data_io)?;
        }
        Command::Evaluate { sel, predictions, report } => {
            let preds = load_predictions(&or(predictions, ws.predictions_path())).map_err(data_io)?;
            let r = cmd_evaluate(&manifest_of(sel)?, &preds, &or(report, ws.report_dir()))?;
            println!(
                "accuracy {:.4}  precision {:.4}  recall {:.4}  F {:.4}",
                r.confusion.accuracy(),
                r.aggregate.precision,
                r.aggregate.recall,
                r.aggregate.f_measure
            );
        }
        Command::SynthDataset {
            classes,
            images_per_class,
            sequences,
            width,
            height,
        } => {
            let spec = SynthSpec {
                classes: *classes,
                images_per_class: *images_per_class,
                sequences: *sequences,
                width: *width,
                height: *height,
                seed: cfg.seed,
            };
            let m = synth_dataset(&cli.out, &spec)?;
            info!("wrote {} images to {}", m.len(), cli.out.display());
        }
    }
    Ok(())
}


fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        error!("cannot start worker pool: {e}");
        return ExitCode::from(3);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) => {
            error!("{m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            error!("{m}");
            ExitCode::from(3)
        }
    }
}
