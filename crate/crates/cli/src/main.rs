//! `bailcnn`: ingest, sanitize, train, evaluate, predict and report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numeric failure during training.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bailcnn::experiment::{ExperimentError, TrainError};
use bailcnn::nn::NnError;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "bailcnn", version, about = "Bail outcome prediction with a 1-D CNN text classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a corpus and write canonical JSONL, rejects, district inventory and label distribution.
    Ingest(DataArgs),
    /// Apply the decision/amount rules; write clean cases, the drop log and train/test counts.
    Sanitize(SanitizeArgs),
    /// Run an experiment plan: train, evaluate on the held-out split, write checkpoint and reports.
    Train(TrainArgs),
    /// Score a checkpoint on the test partition of a split manifest.
    Evaluate(EvaluateArgs),
    /// Print the Dismissed probability and label for one document.
    Predict(PredictArgs),
    /// Build the district table from saved run reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus file or directory of .jsonl/.csv files.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corpus format (jsonl or csv); detected from file extensions when absent.
    #[arg(long)]
    format: Option<String>,
    /// Seed for every random stream (default 42).
    #[arg(long)]
    seed: Option<u64>,
}

impl DataArgs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            corpus: self.corpus.clone(),
            out: self.out.clone(),
            format: self.format.clone(),
            seed: self.seed,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct SanitizeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Train share used for the count table, as "a/b" or a decimal (default 4/5).
    #[arg(long)]
    split_ratio: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// WordPiece vocabulary, one token per line; line 0 must be [PAD].
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Experiment shape: per-district, pooled-high, pooled-low or pooled-all (default).
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated districts; overrides the k-high/k-low selection.
    #[arg(long, value_delimiter = ',')]
    districts: Option<Vec<String>>,
    /// Number of largest districts in the high group (default 10).
    #[arg(long)]
    k_high: Option<usize>,
    /// Number of smallest remaining districts in the low group (default 10).
    #[arg(long)]
    k_low: Option<usize>,
    /// District size measure: case_count (default) or byte_size.
    #[arg(long)]
    selection_key: Option<String>,
    /// Training epochs (default 10).
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size (default 32).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate (default 0.001).
    #[arg(long)]
    lr: Option<f64>,
    /// Upper bound on the padded sequence length (default 4096).
    #[arg(long)]
    max_len_cap: Option<usize>,
    /// Train share, as "a/b" or a decimal (default 4/5).
    #[arg(long)]
    split_ratio: Option<String>,
    /// Split each label separately.
    #[arg(long)]
    stratify: bool,
    /// Take the pad length from the training split only.
    #[arg(long)]
    pad_from_train_only: bool,
    /// Validate on this fraction of the training split instead of the training data itself.
    #[arg(long)]
    holdout_fraction: Option<f64>,
    /// Weight the loss by inverse class frequency.
    #[arg(long)]
    class_weights: bool,
    /// Stop after this many epochs without validation-accuracy gain.
    #[arg(long)]
    patience: Option<usize>,
    /// Remove combining marks before WordPiece.
    #[arg(long)]
    strip_accents: bool,
    /// Keep letter case.
    #[arg(long)]
    no_lowercase: bool,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl TrainArgs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            vocab: self.vocab.clone(),
            mode: self.mode.clone(),
            districts: self.districts.clone(),
            k_high: self.k_high,
            k_low: self.k_low,
            selection_key: self.selection_key.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            max_len_cap: self.max_len_cap,
            split_ratio: self.split_ratio.clone(),
            stratify: flag(self.stratify),
            pad_from_train_only: flag(self.pad_from_train_only),
            holdout_fraction: self.holdout_fraction,
            class_weights: flag(self.class_weights),
            patience: self.patience,
            strip_accents: flag(self.strip_accents),
            no_lowercase: flag(self.no_lowercase),
            ..self.data.flags()
        }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// WordPiece vocabulary used at training time.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Checkpoint to score (default <out>/model.ckpt).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Split manifest naming the test cases (default <out>/split.csv).
    #[arg(long)]
    split: Option<PathBuf>,
    /// Remove combining marks before WordPiece.
    #[arg(long)]
    strip_accents: bool,
    /// Keep letter case.
    #[arg(long)]
    no_lowercase: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// WordPiece vocabulary used at training time.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Document text.
    #[arg(long, conflicts_with = "text_file", required_unless_present = "text_file")]
    text: Option<String>,
    /// File holding the document text.
    #[arg(long)]
    text_file: Option<PathBuf>,
    /// Seed (predictions are deterministic; printed for the record).
    #[arg(long)]
    seed: Option<u64>,
    /// Remove combining marks before WordPiece.
    #[arg(long)]
    strip_accents: bool,
    /// Keep letter case.
    #[arg(long)]
    no_lowercase: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// report.json files, or directories searched recursively for them.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    /// Directory for district_table.md, .csv and .tex.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table printed to stdout: md (default), csv or latex.
    #[arg(long, default_value = "md")]
    format: String,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(&RunConfig::merged(a.config.as_deref(), a.flags())?),
        Command::Sanitize(a) => {
            let flags = RunConfig {
                split_ratio: a.split_ratio.clone(),
                ..a.data.flags()
            };
            commands::sanitize(&RunConfig::merged(a.data.config.as_deref(), flags)?)
        }
        Command::Train(a) => commands::train(&RunConfig::merged(a.data.config.as_deref(), a.flags())?),
        Command::Evaluate(a) => {
            let flags = RunConfig {
                vocab: a.vocab.clone(),
                strip_accents: flag(a.strip_accents),
                no_lowercase: flag(a.no_lowercase),
                ..a.data.flags()
            };
            let cfg = RunConfig::merged(a.data.config.as_deref(), flags)?;
            commands::evaluate(&cfg, a.checkpoint.as_deref(), a.split.as_deref())
        }
        Command::Predict(a) => {
            let flags = RunConfig {
                vocab: a.vocab.clone(),
                seed: a.seed,
                strip_accents: flag(a.strip_accents),
                no_lowercase: flag(a.no_lowercase),
                ..RunConfig::default()
            };
            let cfg = RunConfig::merged(a.config.as_deref(), flags)?;
            let text = match (&a.text, &a.text_file) {
                (Some(t), _) => t.clone(),
                (None, Some(p)) => std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?,
                (None, None) => unreachable!("clap requires one of --text/--text-file"),
            };
            commands::predict(&cfg, &a.checkpoint, &text)
        }
        Command::Report(a) => commands::report(&a.results, a.out.as_deref(), &a.format),
    }
}

/// 3 when the failure is a non-finite loss or weight, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<TrainError>(),
            Some(TrainError::NonFinite { .. } | TrainError::Nn(NnError::NonFinite(_)))
        ) || matches!(
            e.downcast_ref::<ExperimentError>(),
            Some(ExperimentError::Model(NnError::NonFinite(_)))
        ) || matches!(e.downcast_ref::<NnError>(), Some(NnError::NonFinite(_)))
    });
    if numeric {
        3
    } else {
        2
    }
}

/// The error chain joined by ": ", skipping causes whose text the previous
/// message already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
