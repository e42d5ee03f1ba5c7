//! `nk3ml` command-line tool.
//!
//! Exit status is 0 on success, 1 when fitting or evaluation fails
//! numerically, and 2 for usage, parse and I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nk3ml::{DistanceKind, Error, KernelKind, KernelSpec, KernelWidth, NkmmcOptions, PipelineConfig, Weighting};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "nk3ml", version, about = "Nullspace kernel maximum margin metric learning")]
struct Cli {
    /// Log verbosity: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model on a labeled CSV and write it as JSON.
    Train(TrainArgs),
    /// Embed the rows of a CSV with a saved model.
    Transform(TransformArgs),
    /// Run the identity-split evaluation protocol.
    Eval(EvalArgs),
    /// Write a synthetic Gaussian-class dataset.
    Synth(SynthArgs),
    /// Time fitting and batch transform on a synthetic fixture.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Input CSV: `label[,view],f1,...,fd`, label -1 for distractors.
    #[arg(long)]
    data: PathBuf,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightingArg {
    Verbatim,
    Prior,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistanceArg {
    Euclidean,
    Cosine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Cmc,
    Verification,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum FormatArg {
    Csv,
    Json,
}

fn parse_width(s: &str) -> Result<KernelWidth, String> {
    if s == "auto" {
        return Ok(KernelWidth::Auto);
    }
    match s.parse::<f64>() {
        Ok(w) if w.is_finite() && w > 0.0 => Ok(KernelWidth::Fixed(w)),
        _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// RBF width, or `auto` for the root mean squared pairwise distance.
    #[arg(long, default_value = "auto", value_parser = parse_width)]
    kernel_width: KernelWidth,
    /// Ridge on the kernel metric, relative to its mean diagonal.
    #[arg(long, default_value_t = nk3ml::maxmargin::DEFAULT_REG)]
    reg: f64,
    #[arg(long, value_enum, default_value = "verbatim")]
    weighting: WeightingArg,
}

impl ModelArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            kernel: KernelSpec {
                kind: match self.kernel {
                    KernelArg::Rbf => KernelKind::Rbf,
                    KernelArg::Linear => KernelKind::Linear,
                },
                width: self.kernel_width,
            },
            nkmmc: NkmmcOptions {
                reg: self.reg,
                weighting: match self.weighting {
                    WeightingArg::Verbatim => Weighting::Verbatim,
                    WeightingArg::Prior => Weighting::Prior,
                },
            },
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model_opts: ModelArgs,
    /// Output model path.
    #[arg(long)]
    model: PathBuf,
    /// Record the fit time in the model file.
    #[arg(long)]
    stamp: bool,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model_opts: ModelArgs,
    #[arg(long, value_enum, default_value = "cmc")]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0.5)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "euclidean")]
    distance: DistanceArg,
    /// Output file for the CMC or ROC curve.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    per_class: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 20.0)]
    separation: f64,
    /// Confine within-class noise to a subspace of this dimension.
    #[arg(long)]
    noise_rank: Option<usize>,
    /// Tag the k-th sample of each class with view `v{k}`.
    #[arg(long)]
    views: bool,
    /// Number of extra single-sample identities written as distractors.
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 632)]
    samples: usize,
    #[arg(long, default_value_t = 316)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model_opts: ModelArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<DistanceArg> for DistanceKind {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Euclidean => DistanceKind::Euclidean,
            DistanceArg::Cosine => DistanceKind::Cosine,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::Model { .. } => 2,
        _ => 1,
    }
}

fn describe(e: &Error) -> String {
    match e.root() {
        Error::Parse { .. } => format!("parse: {e}"),
        Error::Io { .. } => format!("io: {e}"),
        _ => e.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();

    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Transform(a) => commands::transform(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
