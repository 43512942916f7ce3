//! Command line front end: train, dataset generation, scoring, and the
//! loss-weight grid sweep. Exit codes are part of the interface: 0 success,
//! 2 invalid usage, 3 unreadable or inconsistent data, 4 aborted training.

mod artifacts;
mod grid;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cg3_core::graphdata::{generate_sbm, load_bundle, save_bundle, GraphDataset, SbmSpec};
use cg3_core::trainer::{accuracy, train_seeds, TrainConfig, TrainError, TrainMode};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Load(String),
    Train(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Load(_) => 3,
            CliError::Train(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Load(m) | CliError::Train(m) => f.write_str(m),
        }
    }
}

/// Configuration mistakes exit 2; anything that stops a started run exits 4.
fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) | TrainError::EmptySplit { .. } => CliError::Usage(e.to_string()),
        other => CliError::Train(other.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "cg3", version, about = "Two-view graph node classification workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset bundle and write report and artifacts.
    Train(TrainArgs),
    /// Generate a stochastic block-model bundle.
    GenSbm(GenSbmArgs),
    /// Score a predictions file against a bundle's splits.
    Eval(EvalArgs),
    /// Sweep the loss-weight grid and keep the best combination.
    GridSearch(GridArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for report and artifacts.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

/// Every knob is optional: command line beats the `--config` file, which
/// beats the built-in defaults.
#[derive(Args, Clone)]
struct TrainFlags {
    /// JSON file with a (possibly partial) training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss layout: full, no-contrastive, no-generative, or gcn-baseline.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TrainMode>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs, seeded base, base+1, ...
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Coarsening depth of the refinement view.
    #[arg(long)]
    levels: Option<usize>,
    /// Weight of the first view in the fused output, in [0, 1].
    #[arg(long)]
    lambda_phi1: Option<f64>,
    /// Weight of the contrastive term.
    #[arg(long)]
    lambda_ssc: Option<f64>,
    /// Weight of the edge reconstruction term.
    #[arg(long)]
    lambda_g2: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Force the exact contrastive denominator on or off.
    #[arg(long)]
    exact_contrast: Option<bool>,
    /// Sampled non-edges per positive edge.
    #[arg(long)]
    neg_ratio: Option<f64>,
    /// L2-normalize embedding rows before similarities.
    #[arg(long)]
    normalize_rows: Option<bool>,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse()
}

impl TrainFlags {
    /// Resolved configuration plus the number of seeded runs.
    fn resolve(&self) -> Result<(TrainConfig, usize), CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Load(format!("{}: {}", path.display(), e)))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e)))?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = self.levels {
            cfg.levels = v;
        }
        if let Some(v) = self.lambda_phi1 {
            cfg.weights.lambda_phi1 = v;
        }
        if let Some(v) = self.lambda_ssc {
            cfg.weights.lambda_ssc = v;
        }
        if let Some(v) = self.lambda_g2 {
            cfg.weights.lambda_g2 = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.exact_contrast {
            cfg.exact_contrast = Some(v);
        }
        if let Some(v) = self.neg_ratio {
            cfg.neg_ratio = v;
        }
        if let Some(v) = self.normalize_rows {
            cfg.normalize_rows = v;
        }
        cfg.validate().map_err(train_error)?;

        let runs = self.seeds.unwrap_or(1);
        if runs == 0 {
            return Err(CliError::Usage("--seeds must be at least 1".into()));
        }
        Ok((cfg, runs))
    }
}

#[derive(Args)]
struct GenSbmArgs {
    /// Directory to write the bundle into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 100)]
    block_size: usize,
    #[arg(long, default_value_t = 0.05)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.005)]
    p_inter: f64,
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 2)]
    labels_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    data: PathBuf,
    /// predictions.csv produced by `train`.
    #[arg(long)]
    predictions: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the grid report and best-combination artifacts.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::GenSbm(args) => cmd_gen_sbm(args),
        Command::Eval(args) => cmd_eval(args),
        Command::GridSearch(args) => grid::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.code())
        }
    }
}

fn load_data(path: &PathBuf) -> Result<GraphDataset, CliError> {
    load_bundle(path).map_err(|e| CliError::Load(format!("{}: {}", path.display(), e)))
}

/// Prints a status line, ignoring write failures so a closed pipe
/// (e.g. `cg3 train ... | head`) never turns success into a panic.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub(crate) use emit;

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let (cfg, runs) = args.flags.resolve()?;
    let ds = load_data(&args.data)?;
    let seeds: Vec<u64> = (0..runs).map(|i| cfg.seed + i as u64).collect();
    let (mut outcome, reports) = train_seeds(&ds, &cfg, &seeds).map_err(train_error)?;
    artifacts::write_all(&args.out, &args.data, &cfg, &seeds, &reports, &mut outcome, &ds)?;

    let accs: Vec<f64> = reports.iter().map(|r| r.test_acc).collect();
    let (mean, std) = artifacts::mean_std(&accs);
    if reports.len() == 1 {
        emit!(
            "test_acc {:.4} best_val {:.4} at epoch {} ({} epochs run)",
            mean,
            reports[0].best_val_acc,
            reports[0].best_epoch,
            reports[0].epochs.len()
        );
    } else {
        emit!("test_acc {:.4} +/- {:.4} over {} seeds", mean, std, reports.len());
    }
    emit!("artifacts in {}", args.out.display());
    Ok(())
}

fn cmd_gen_sbm(args: GenSbmArgs) -> Result<(), CliError> {
    let spec = SbmSpec {
        blocks: args.blocks,
        block_size: args.block_size,
        p_intra: args.p_intra,
        p_inter: args.p_inter,
        feature_dim: args.feature_dim,
        noise: args.noise,
        labels_per_class: args.labels_per_class,
        seed: args.seed,
    };
    let ds = generate_sbm(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    save_bundle(&ds, &args.out).map_err(|e| CliError::Load(e.to_string()))?;
    emit!(
        "wrote {} nodes, {} edges, {} classes to {}",
        ds.nodes(),
        ds.undirected_edge_count(),
        ds.classes(),
        args.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct SplitScores {
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let ds = load_data(&args.data)?;
    let classes = read_predictions(&args.predictions, &ds)?;
    let score = |split: &[usize], name: &'static str| {
        accuracy(&classes, &ds, split, name).map_err(|e| CliError::Load(e.to_string()))
    };
    let scores = SplitScores {
        train_acc: score(ds.train_idx(), "train")?,
        val_acc: score(ds.val_idx(), "validation")?,
        test_acc: score(ds.test_idx(), "test")?,
    };
    emit!("{}", serde_json::to_string_pretty(&scores).expect("scores serialize"));
    Ok(())
}

/// Reads `node,label,prob` rows and returns the predicted class per node.
/// Every node must appear exactly once, in order.
fn read_predictions(path: &PathBuf, ds: &GraphDataset) -> Result<Vec<usize>, CliError> {
    let bad = |msg: String| CliError::Load(format!("{}: {}", path.display(), msg));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("node,label,prob") => {}
        other => return Err(bad(format!("expected header node,label,prob, got {:?}", other))),
    }
    let mut classes = Vec::with_capacity(ds.nodes());
    for (lineno, line) in lines.enumerate() {
        let mut parts = line.split(',');
        let node: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad node id", lineno + 2)))?;
        let label: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad label", lineno + 2)))?;
        if node != classes.len() {
            return Err(bad(format!("line {}: expected node {}, got {}", lineno + 2, classes.len(), node)));
        }
        if label >= ds.classes() {
            return Err(bad(format!("line {}: label {} outside {} classes", lineno + 2, label, ds.classes())));
        }
        classes.push(label);
    }
    if classes.len() != ds.nodes() {
        return Err(bad(format!("{} rows for {} nodes", classes.len(), ds.nodes())));
    }
    Ok(classes)
}
