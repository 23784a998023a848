//! `anaxnet` command-line interface.
//!
//! Subcommands: `synth` (deterministic synthetic dataset), `adjacency`
//! (Jaccard co-occurrence graph from the train split), `train`, `eval`,
//! and `gradcheck`. Every subcommand echoes its fully resolved
//! configuration as the first output line, and a fixed `--seed` makes
//! every run bitwise reproducible.
//!
//! Exit codes: 0 success, 1 assertion/check failure, 2 usage error,
//! 3 I/O or format error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use anaxnet_core::adjacency::{accumulate_stats, AdjacencyMatrix};
use anaxnet_core::data::{
    generate_synthetic, load_adjacency, load_checkpoint, load_dataset, save_adjacency,
    save_checkpoint, write_dataset, Checkpoint, Split, SynthSpec,
};
use anaxnet_core::eval::{evaluate, write_report_files, EvalReport};
use anaxnet_core::model::toy_grad_check;
use anaxnet_core::train::{train, ModelVariant, TrainConfig};
use anaxnet_core::{Error, Matrix};

const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "anaxnet",
    about = "Anatomy-aware multi-label classification over region features",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic dataset with a planted region graph
    Synth(SynthArgs),
    /// Build the Jaccard co-occurrence adjacency from the train split
    Adjacency(AdjacencyArgs),
    /// Train a model and save best/final checkpoints
    Train(TrainArgs),
    /// Evaluate a checkpoint: per-(region, label) AUC report
    Eval(EvalArgs),
    /// Finite-difference check of the full model gradients
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Number of training images
    #[arg(long, default_value_t = 2000)]
    images: usize,
    /// Validation images (default: images / 8)
    #[arg(long)]
    val_images: Option<usize>,
    /// Test images (default: images / 4)
    #[arg(long)]
    test_images: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Region count
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Feature dimensionality
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Label count
    #[arg(long, default_value_t = 4)]
    labels: usize,
    /// Context-coded label indices, comma separated (default: top half)
    #[arg(long, value_parser = parse_index_list)]
    context_labels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.5)]
    noise_stddev: f64,
    #[arg(long, default_value_t = 2.0)]
    own_signal: f64,
    #[arg(long, default_value_t = 1.0)]
    context_signal: f64,
    #[arg(long, default_value_t = 0.2)]
    seed_rate: f64,
    #[arg(long, default_value_t = 0.8)]
    propagation: f64,
    #[arg(long, default_value_t = 0.6)]
    context_rate: f64,
}

#[derive(Args, Serialize)]
struct AdjacencyArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output file (default: <data>/adjacency.bin)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Jaccard threshold
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and the run log
    #[arg(long)]
    out: PathBuf,
    /// Model variant
    #[arg(long, default_value = "anaxnet", value_parser = parse_variant)]
    model: ModelVariant,
    /// Adjacency file (default: <data>/adjacency.bin; ignored by baseline-fc)
    #[arg(long)]
    adjacency: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// GCN layer dims, comma separated (default: d/2,d)
    #[arg(long, value_parser = parse_index_list)]
    gcn_dims: Option<Vec<usize>>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to evaluate (not needed with --oracle)
    #[arg(long, required_unless_present = "oracle")]
    checkpoint: Option<PathBuf>,
    /// Output directory for report.txt / report.tsv
    #[arg(long)]
    out: PathBuf,
    /// Split to evaluate
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Adjacency file (default: <data>/adjacency.bin; ignored by baseline-fc)
    #[arg(long)]
    adjacency: Option<PathBuf>,
    /// Test hook: score with the ground-truth labels as probabilities
    #[arg(long, default_value_t = false)]
    oracle: bool,
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Test hook: corrupt one analytic gradient entry; the check must fail
    #[arg(long, default_value_t = false)]
    corrupt_gradient: bool,
}

fn parse_index_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|part| part.trim().parse::<usize>().map_err(|e| format!("'{part}': {e}")))
        .collect()
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn echo_config(command: &str, args: &impl Serialize) -> String {
    let json = serde_json::to_string(args).expect("flag structs serialize");
    let line = format!("config {{\"command\":\"{command}\",\"flags\":{json}}}");
    println!("{line}");
    line
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::NonFinite(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Adjacency(args) => cmd_adjacency(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<u8, Error> {
    echo_config("synth", &args);
    let mut spec = SynthSpec::with_dims(args.k, args.d, args.labels, args.seed);
    spec.train_images = args.images;
    spec.val_images = args.val_images.unwrap_or(args.images / 8);
    spec.test_images = args.test_images.unwrap_or(args.images / 4);
    spec.noise_stddev = args.noise_stddev;
    spec.own_signal = args.own_signal;
    spec.context_signal = args.context_signal;
    spec.seed_rate = args.seed_rate;
    spec.propagation = args.propagation;
    spec.context_rate = args.context_rate;
    if let Some(context) = args.context_labels {
        spec.context_labels = context;
    }
    let (manifest, records) = generate_synthetic(&spec)?;
    write_dataset(&manifest, &records, &args.out)?;
    println!(
        "wrote dataset to {} (train {} / val {} / test {})",
        args.out.display(),
        spec.train_images,
        spec.val_images,
        spec.test_images
    );
    Ok(0)
}

fn cmd_adjacency(args: AdjacencyArgs) -> Result<u8, Error> {
    echo_config("adjacency", &args);
    let (manifest, train_records) = load_dataset(&args.data, Split::Train)?;
    let labels: Vec<Matrix> = train_records.iter().map(|r| r.labels.clone()).collect();
    let stats = accumulate_stats(manifest.regions, manifest.label_count, labels.iter())?;
    let adjacency = AdjacencyMatrix::from_stats(&stats, args.tau)?;
    let out = args.out.unwrap_or_else(|| args.data.join("adjacency.bin"));
    save_adjacency(&adjacency, &out)?;
    println!("tau {}", adjacency.tau);
    let edges = adjacency.edges();
    println!("edges {}", edges.len());
    for (i, j) in &edges {
        println!("edge {i} {j}");
    }
    println!("wrote {}", out.display());
    Ok(0)
}

fn format_epoch(epoch: usize, train_loss: f64, val: Option<f64>) -> String {
    match val {
        Some(v) => format!("epoch {epoch} train_loss {train_loss:.6} val_macro_auc {v:.6}"),
        None => format!("epoch {epoch} train_loss {train_loss:.6} val_macro_auc na"),
    }
}

fn cmd_train(args: TrainArgs) -> Result<u8, Error> {
    let config_line = echo_config("train", &args);
    let (_, train_records) = load_dataset(&args.data, Split::Train)?;
    let (_, val_records) = load_dataset(&args.data, Split::Val)?;

    let adjacency = match args.model {
        ModelVariant::AnaxNet => {
            let path = args
                .adjacency
                .clone()
                .unwrap_or_else(|| args.data.join("adjacency.bin"));
            Some(load_adjacency(&path)?)
        }
        ModelVariant::BaselineFc => None,
    };

    let train_config = TrainConfig {
        variant: args.model,
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        gcn_dims: args.gcn_dims.clone(),
    };
    let outcome = train(&train_config, &train_records, &val_records, adjacency.as_ref())?;

    fs::create_dir_all(&args.out).map_err(|e| Error::Io { path: args.out.clone(), source: e })?;
    let mut log = String::new();
    log.push_str(&config_line);
    log.push('\n');
    for record in &outcome.epochs {
        let line = format_epoch(record.epoch, record.train_loss, record.val_macro_auc);
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    }

    let final_path = args.out.join("model_final.bin");
    let best_path = args.out.join("model_best.bin");
    save_checkpoint(&outcome.final_checkpoint, &final_path)?;
    save_checkpoint(&outcome.best_checkpoint, &best_path)?;
    let summary = match outcome.best_epoch {
        Some(e) => format!("saved final and best checkpoints (best epoch {e})"),
        None => "saved final checkpoint (no validation split; best = final)".to_string(),
    };
    println!("{summary}");
    log.push_str(&summary);
    log.push('\n');
    let log_path = args.out.join("train_log.txt");
    fs::write(&log_path, log).map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
    Ok(0)
}

fn oracle_report(labels: &[Matrix]) -> Result<EvalReport, Error> {
    evaluate(labels, labels)
}

fn cmd_eval(args: EvalArgs) -> Result<u8, Error> {
    echo_config("eval", &args);
    let (manifest, records) = load_dataset(&args.data, args.split)?;
    let labels: Vec<Matrix> = records.iter().map(|r| r.labels.clone()).collect();

    let report = if args.oracle {
        oracle_report(&labels)?
    } else {
        let checkpoint_path = args.checkpoint.as_ref().expect("clap enforces the flag");
        let checkpoint = load_checkpoint(checkpoint_path)?;
        if checkpoint.regions() != manifest.regions
            || checkpoint.feature_dim() != manifest.feature_dim
            || checkpoint.label_count() != manifest.label_count
        {
            return Err(Error::Format {
                path: checkpoint_path.clone(),
                reason: format!(
                    "checkpoint dims (k={}, d={}, M={}) do not match dataset dims (k={}, d={}, M={})",
                    checkpoint.regions(),
                    checkpoint.feature_dim(),
                    checkpoint.label_count(),
                    manifest.regions,
                    manifest.feature_dim,
                    manifest.label_count
                ),
            });
        }
        let adjacency = match checkpoint {
            Checkpoint::AnaxNet { .. } => {
                let path = args
                    .adjacency
                    .clone()
                    .unwrap_or_else(|| args.data.join("adjacency.bin"));
                Some(load_adjacency(&path)?)
            }
            Checkpoint::BaselineFc { .. } => None,
        };
        let a_norm = adjacency.as_ref().map(|a| &a.normalized);
        let predictions: Vec<Matrix> = records
            .iter()
            .map(|rec| checkpoint.predict(&rec.features, &rec.mask, a_norm))
            .collect::<Result<_, Error>>()?;
        evaluate(&predictions, &labels)?
    };

    fs::create_dir_all(&args.out).map_err(|e| Error::Io { path: args.out.clone(), source: e })?;
    let txt = args.out.join("report.txt");
    let tsv = args.out.join("report.tsv");
    write_report_files(&report, &manifest.region_names, &manifest.label_names, &txt, &tsv)?;
    match report.macro_average {
        Some(m) => println!("split {} macro_auc {m:.6}", args.split),
        None => println!("split {} macro_auc na", args.split),
    }
    println!("wrote {} and {}", txt.display(), tsv.display());
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<u8, Error> {
    echo_config("gradcheck", &args);
    let check = toy_grad_check(args.seed, args.h, args.corrupt_gradient)?;
    let pass = check.max_relative_error < GRADCHECK_THRESHOLD;
    println!(
        "gradcheck seed {} h {} max_relative_error {:.3e} threshold {GRADCHECK_THRESHOLD:.0e}: {}",
        args.seed,
        args.h,
        check.max_relative_error,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}
