//! Training, evaluation and reporting for the experiment shapes: one pooled
//! model over a district set (high, low or all) or one model per district.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CaseRecord;
use crate::metrics::{self, compute_metrics, round_half_up, ConfusionMatrix2, EvalReport, MetricsError};
use crate::nn::checkpoint::{save_checkpoint, CheckpointError};
use crate::nn::model::{forward, init_params, Mode, ModelConfig, Parameters};
use crate::nn::ops;
use crate::nn::{AdamConfig, AdamState, NnError};
use crate::rng::{self, Stream};
use crate::sanitize::{self, CleanCase, DropLog, DropRule, Label, SplitDataset, SplitError, SplitRatio, Stratify};
use crate::tokenizer::{self, EncodeConfig, TokenizerError, Vocabulary, DEFAULT_MAX_LEN_CAP};

/// Sigmoid outputs at or above this are predicted Dismissed.
pub const THRESHOLD: f32 = 0.5;
const EVAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("plan: {0}")]
    Plan(String),
    #[error("split stage: {0}")]
    Split(#[from] SplitError),
    #[error("tokenize stage: {0}")]
    Tokenize(#[from] TokenizerError),
    #[error("model stage: {0}")]
    Model(#[from] NnError),
    #[error("train stage: {0}")]
    Train(#[from] TrainError),
    #[error("evaluate stage: {0}")]
    Metrics(#[from] MetricsError),
    #[error("checkpoint stage: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f32 },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentMode {
    PerDistrict,
    PooledHigh,
    PooledLow,
    PooledAll,
}

impl FromStr for ExperimentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "perdistrict" | "district" => Ok(ExperimentMode::PerDistrict),
            "pooledhigh" | "high" => Ok(ExperimentMode::PooledHigh),
            "pooledlow" | "low" => Ok(ExperimentMode::PooledLow),
            "pooledall" | "all" => Ok(ExperimentMode::PooledAll),
            other => Err(format!(
                "unknown mode {other:?} (expected per-district, pooled-high, pooled-low or pooled-all)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistrictGroup {
    High,
    Low,
}

/// Every knob of a run. Defaults: 10 epochs, batch 32, Adam(1e-3), seed 42,
/// cap 4096 tokens, 4/5 split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub max_len_cap: usize,
    pub split_ratio: SplitRatio,
    pub stratify: Stratify,
    /// Compute the pad length from the training split only.
    pub pad_from_train_only: bool,
    /// Carve this fraction of the training split out for validation instead
    /// of validating on the training data itself.
    pub holdout_fraction: Option<f64>,
    /// Weight each class by `N / (2 * n_class)` in the loss.
    pub class_weights: bool,
    /// Stop after this many epochs without validation-accuracy improvement.
    pub patience: Option<usize>,
    pub lowercase: bool,
    pub strip_accents: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            seed: 42,
            max_len_cap: DEFAULT_MAX_LEN_CAP,
            split_ratio: SplitRatio::EIGHTY_TWENTY,
            stratify: Stratify::None,
            pad_from_train_only: false,
            holdout_fraction: None,
            class_weights: false,
            patience: None,
            lowercase: true,
            strip_accents: false,
        }
    }
}

impl Hyper {
    pub fn encode_config(&self, max_len: usize) -> EncodeConfig {
        EncodeConfig {
            max_len,
            lowercase: self.lowercase,
            strip_accents: self.strip_accents,
            ..EncodeConfig::default()
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
            class_weights: self.class_weights,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub mode: ExperimentMode,
    pub districts: Vec<String>,
    pub hyper: Hyper,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.districts.is_empty() {
            return Err(ExperimentError::Plan("no districts selected".into()));
        }
        if self.hyper.epochs == 0 {
            return Err(ExperimentError::Plan("epochs must be at least 1".into()));
        }
        if self.hyper.batch_size == 0 {
            return Err(ExperimentError::Plan("batch_size must be at least 1".into()));
        }
        if !(self.hyper.lr > 0.0 && self.hyper.lr.is_finite()) {
            return Err(ExperimentError::Plan(format!("lr must be positive, got {}", self.hyper.lr)));
        }
        if let Some(f) = self.hyper.holdout_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(ExperimentError::Plan(format!("holdout fraction must be in (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

/// Documents encoded to one length, with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub max_len: usize,
    pub case_ids: Vec<String>,
    pub ids: Vec<u32>,
    pub labels: Vec<Label>,
    pub truncated: usize,
}

impl EncodedSet {
    pub fn encode(cases: &[CleanCase], vocab: &Vocabulary, config: &EncodeConfig) -> Self {
        let mut set = EncodedSet {
            max_len: config.max_len,
            case_ids: Vec::with_capacity(cases.len()),
            ids: Vec::with_capacity(cases.len() * config.max_len),
            labels: Vec::with_capacity(cases.len()),
            truncated: 0,
        };
        for c in cases {
            let seq = tokenizer::encode(&c.text, vocab, config);
            set.truncated += seq.truncated as usize;
            set.ids.extend_from_slice(&seq.ids);
            set.case_ids.push(c.case_id.clone());
            set.labels.push(c.label);
        }
        set
    }

    /// Builds a set directly from fixed-length id rows.
    pub fn from_rows(max_len: usize, rows: Vec<(Vec<u32>, Label)>) -> Self {
        let mut set = EncodedSet {
            max_len,
            case_ids: Vec::new(),
            ids: Vec::new(),
            labels: Vec::new(),
            truncated: 0,
        };
        for (i, (row, label)) in rows.into_iter().enumerate() {
            assert_eq!(row.len(), max_len, "row {i} has the wrong length");
            set.case_ids.push(format!("row{i}"));
            set.ids.extend(row);
            set.labels.push(label);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    fn subset(&self, idx: &[usize]) -> EncodedSet {
        let mut s = EncodedSet {
            max_len: self.max_len,
            case_ids: Vec::with_capacity(idx.len()),
            ids: Vec::with_capacity(idx.len() * self.max_len),
            labels: Vec::with_capacity(idx.len()),
            truncated: 0,
        };
        for &i in idx {
            s.case_ids.push(self.case_ids[i].clone());
            s.ids.extend_from_slice(self.row(i));
            s.labels.push(self.labels[i]);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub class_weights: bool,
    pub patience: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Hyper::default().train_options()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy of the train-mode (dropout on) predictions made during the epoch.
    pub train_accuracy: f64,
    /// Eval-mode accuracy on the validation data.
    pub validation_accuracy: f64,
    /// Wall-clock time; kept out of serialized output so runs stay byte-reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_loss", "train_accuracy", "validation_accuracy"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.6}", e.mean_loss),
                format!("{:.6}", e.train_accuracy),
                format!("{:.6}", e.validation_accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Epoch-by-epoch minibatch training with Adam on binary cross-entropy.
pub struct Trainer<'a> {
    config: &'a ModelConfig,
    params: Parameters<f32>,
    adam: AdamState<f32>,
    options: TrainOptions,
    train: &'a EncodedSet,
    validation: Option<&'a EncodedSet>,
    class_weight: [f32; 2],
    shuffle_rng: rng::Rng,
    dropout_rng: rng::Rng,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    /// `validation: None` validates on the training data.
    pub fn new(
        params: Parameters<f32>,
        config: &'a ModelConfig,
        train: &'a EncodedSet,
        validation: Option<&'a EncodedSet>,
        options: TrainOptions,
    ) -> Result<Self, TrainError> {
        if train.is_empty() {
            return Err(TrainError::Empty);
        }
        if train.max_len != config.max_len {
            return Err(NnError::Shape {
                op: "train",
                detail: format!("data encoded to {} but model expects {}", train.max_len, config.max_len),
            }
            .into());
        }
        params.check_shapes(config)?;
        let class_weight = if options.class_weights {
            let n = train.len() as f32;
            let count = |l: Label| train.labels.iter().filter(|&&x| x == l).count().max(1) as f32;
            [n / (2.0 * count(Label::Granted)), n / (2.0 * count(Label::Dismissed))]
        } else {
            [1.0, 1.0]
        };
        Ok(Trainer {
            adam: AdamState::new(&params, options.adam),
            params,
            config,
            options,
            train,
            validation,
            class_weight,
            shuffle_rng: rng::stream(options.seed, Stream::Shuffle),
            dropout_rng: rng::stream(options.seed, Stream::Dropout),
            epoch: 0,
        })
    }

    pub fn params(&self) -> &Parameters<f32> {
        &self.params
    }

    pub fn into_params(self) -> Parameters<f32> {
        self.params
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats, TrainError> {
        let start = Instant::now();
        self.epoch += 1;
        let n = self.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);

        let len = self.config.max_len;
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut ids = Vec::with_capacity(self.options.batch_size * len);
        for (b, chunk) in order.chunks(self.options.batch_size).enumerate() {
            ids.clear();
            for &i in chunk {
                ids.extend_from_slice(self.train.row(i));
            }
            let targets: Vec<f32> = chunk.iter().map(|&i| self.train.labels[i].target()).collect();
            let weights: Vec<f32> = chunk
                .iter()
                .map(|&i| self.class_weight[self.train.labels[i].index()])
                .collect();
            let pass = forward(&self.params, self.config, &ids, Mode::Train(&mut self.dropout_rng))?;
            let probs = pass.probabilities();
            let loss = ops::weighted_bce_loss(probs, &targets, Some(&weights));
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch: self.epoch,
                    batch: b,
                    loss,
                });
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            correct += probs
                .iter()
                .zip(&targets)
                .filter(|(&p, &y)| (p >= THRESHOLD) == (y == 1.0))
                .count();
            let grad = ops::bce_logit_grad(probs, &targets, Some(&weights));
            let grads = pass.backward(&self.params, &grad)?;
            self.adam.step(&mut self.params, &grads)?;
        }
        if !self.params.all_finite() {
            return Err(NnError::NonFinite("parameters after update").into());
        }
        let validation = self.validation.unwrap_or(self.train);
        let validation_accuracy = accuracy_of(&self.params, self.config, validation)?;
        Ok(EpochStats {
            epoch: self.epoch,
            mean_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            validation_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Trains for `options.epochs` epochs (or until `patience` runs out).
pub fn train(
    params: Parameters<f32>,
    config: &ModelConfig,
    train_set: &EncodedSet,
    validation: Option<&EncodedSet>,
    options: TrainOptions,
) -> Result<(Parameters<f32>, TrainHistory), TrainError> {
    let mut trainer = Trainer::new(params, config, train_set, validation, options)?;
    let mut history = TrainHistory::default();
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0usize;
    for _ in 0..options.epochs {
        let stats = trainer.run_epoch()?;
        let acc = stats.validation_accuracy;
        history.epochs.push(stats);
        if let Some(patience) = options.patience {
            if acc > best {
                best = acc;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok((trainer.into_params(), history))
}

/// Eval-mode probabilities for every document of `set`, in order.
pub fn predict_probabilities(
    params: &Parameters<f32>,
    config: &ModelConfig,
    set: &EncodedSet,
) -> Result<Vec<f32>, NnError> {
    let mut out = Vec::with_capacity(set.len());
    let rows_per_batch = EVAL_BATCH * set.max_len;
    for chunk in set.ids.chunks(rows_per_batch) {
        out.extend_from_slice(forward(params, config, chunk, Mode::Eval)?.probabilities());
    }
    Ok(out)
}

/// 1 (Dismissed) when `p >= threshold`, else 0 (Granted).
pub fn threshold_predictions(probs: &[f32], threshold: f32) -> Vec<u8> {
    probs.iter().map(|&p| (p >= threshold) as u8).collect()
}

fn accuracy_of(params: &Parameters<f32>, config: &ModelConfig, set: &EncodedSet) -> Result<f64, NnError> {
    let probs = predict_probabilities(params, config, set)?;
    let hits = threshold_predictions(&probs, THRESHOLD)
        .iter()
        .zip(&set.labels)
        .filter(|(&p, l)| p as usize == l.index())
        .count();
    Ok(hits as f64 / set.len().max(1) as f64)
}

/// Eval-mode predictions at threshold 0.5, scored against the set's labels.
pub fn evaluate(params: &Parameters<f32>, config: &ModelConfig, test_set: &EncodedSet) -> Result<EvalReport, ExperimentError> {
    if test_set.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let probs = predict_probabilities(params, config, test_set)?;
    let pred = threshold_predictions(&probs, THRESHOLD);
    let truth: Vec<u8> = test_set.labels.iter().map(|l| l.index() as u8).collect();
    let cm = metrics::confusion(&pred, &truth)?;
    Ok(compute_metrics(&cm)?)
}

/// Summary of one finished run, serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// District name for per-district runs, otherwise the mode name.
    pub name: String,
    pub group: Option<DistrictGroup>,
    pub plan: ExperimentPlan,
    pub pad_length: usize,
    pub truncated_documents: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub checkpoint: Option<String>,
    pub report: EvalReport,
    pub drops: BTreeMap<DropRule, usize>,
    pub history: TrainHistory,
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub model_config: ModelConfig,
    pub params: Parameters<f32>,
    pub split: SplitDataset,
    pub drop_log: DropLog,
}

/// Sanitize, split, pick the pad length, train, evaluate on the held-out split.
pub fn run_experiment(
    plan: &ExperimentPlan,
    records: &[CaseRecord],
    vocab: &Vocabulary,
) -> Result<RunOutput, ExperimentError> {
    plan.validate()?;
    let hyper = &plan.hyper;
    let wanted: BTreeSet<&str> = plan.districts.iter().map(String::as_str).collect();
    let selected: Vec<CaseRecord> = records
        .iter()
        .filter(|r| wanted.contains(r.district.as_str()))
        .cloned()
        .collect();
    let (clean, drop_log) = sanitize::sanitize_corpus(&selected);
    let split = sanitize::split_with(&clean, hyper.split_ratio, hyper.seed, hyper.stratify)?;
    if split.test.is_empty() || split.train.is_empty() {
        return Err(ExperimentError::Plan(format!(
            "{} clean cases are too few for a nonempty train and test split",
            clean.len()
        )));
    }

    let probe = hyper.encode_config(hyper.max_len_cap);
    let pad_texts: Box<dyn Iterator<Item = &str>> = if hyper.pad_from_train_only {
        Box::new(split.train.iter().map(|c| c.text.as_str()))
    } else {
        Box::new(split.train.iter().chain(&split.test).map(|c| c.text.as_str()))
    };
    let pad_length = tokenizer::pad_length(pad_texts, vocab, &probe, hyper.max_len_cap);
    let model_config = ModelConfig::new(vocab.len(), pad_length);
    model_config.validate()?;
    let enc = hyper.encode_config(pad_length);
    enc.validate()?;

    let train_all = EncodedSet::encode(&split.train, vocab, &enc);
    let test_set = EncodedSet::encode(&split.test, vocab, &enc);
    let (train_set, holdout) = match hyper.holdout_fraction {
        None => (train_all, None),
        Some(frac) => {
            let mut idx: Vec<usize> = (0..train_all.len()).collect();
            idx.shuffle(&mut rng::stream(hyper.seed, Stream::Holdout));
            let n_hold = ((train_all.len() as f64 * frac).round() as usize).clamp(1, train_all.len() - 1);
            let hold = train_all.subset(&idx[..n_hold]);
            let rest = train_all.subset(&idx[n_hold..]);
            (rest, Some(hold))
        }
    };

    let params = init_params(&model_config, hyper.seed)?;
    let (params, history) = train(params, &model_config, &train_set, holdout.as_ref(), hyper.train_options())?;
    let report = evaluate(&params, &model_config, &test_set)?;

    let name = match plan.mode {
        ExperimentMode::PerDistrict if plan.districts.len() == 1 => plan.districts[0].clone(),
        ExperimentMode::PerDistrict => "PerDistrict".into(),
        ExperimentMode::PooledHigh => "PooledHigh".into(),
        ExperimentMode::PooledLow => "PooledLow".into(),
        ExperimentMode::PooledAll => "PooledAll".into(),
    };
    let result = RunResult {
        name,
        group: None,
        plan: plan.clone(),
        pad_length,
        truncated_documents: train_set.truncated + test_set.truncated + holdout.as_ref().map_or(0, |h| h.truncated),
        train_size: split.train.len(),
        test_size: split.test.len(),
        checkpoint: None,
        report,
        drops: drop_log.summary(),
        history,
    };
    Ok(RunOutput {
        result,
        model_config,
        params,
        split,
        drop_log,
    })
}

/// Runs one independent experiment per district of the plan, in plan order.
/// `groups` tags each district's result for the report sections.
pub fn run_per_district(
    plan: &ExperimentPlan,
    records: &[CaseRecord],
    vocab: &Vocabulary,
    groups: &BTreeMap<String, DistrictGroup>,
) -> Result<Vec<RunOutput>, ExperimentError> {
    plan.validate()?;
    plan.districts
        .iter()
        .map(|d| {
            let single = ExperimentPlan {
                mode: ExperimentMode::PerDistrict,
                districts: vec![d.clone()],
                hyper: plan.hyper.clone(),
            };
            let mut out = run_experiment(&single, records, vocab)?;
            out.result.group = groups.get(d).copied();
            Ok(out)
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

/// Writes `model.ckpt`, `history.csv`, `split.csv`, `drops.jsonl` and
/// `report.json` into `dir`, recording the checkpoint path in the result.
pub fn write_run_artifacts(output: &mut RunOutput, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&output.params, &output.model_config, &ckpt)?;
    output.result.checkpoint = Some(ckpt.display().to_string());

    let path = dir.join("history.csv");
    output
        .result
        .history
        .write_csv(fs::File::create(&path).map_err(io_err(&path))?)
        .map_err(csv_err(&path))?;
    let path = dir.join("split.csv");
    output
        .split
        .write_manifest(fs::File::create(&path).map_err(io_err(&path))?)
        .map_err(csv_err(&path))?;
    let path = dir.join("drops.jsonl");
    output
        .drop_log
        .write_jsonl(fs::File::create(&path).map_err(io_err(&path))?)
        .map_err(io_err(&path))?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&output.result).expect("result serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictRow {
    pub district: String,
    pub group: Option<DistrictGroup>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Per-district accuracy / macro-F1 table, rounded to two decimals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistrictTable {
    pub rows: Vec<DistrictRow>,
}

const HIGH_TITLE: &str = "Highest number of case documents";
const LOW_TITLE: &str = "Lowest number of case documents";
const OTHER_TITLE: &str = "Other runs";

impl DistrictTable {
    pub fn from_rows(rows: Vec<DistrictRow>) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| DistrictRow {
                accuracy: round_half_up(r.accuracy, 2),
                macro_f1: round_half_up(r.macro_f1, 2),
                ..r
            })
            .collect();
        DistrictTable { rows }
    }

    fn sections(&self) -> Vec<(&'static str, Vec<&DistrictRow>)> {
        let pick = |g: Option<DistrictGroup>| self.rows.iter().filter(|r| r.group == g).collect::<Vec<_>>();
        [
            (HIGH_TITLE, pick(Some(DistrictGroup::High))),
            (LOW_TITLE, pick(Some(DistrictGroup::Low))),
            (OTHER_TITLE, pick(None)),
        ]
        .into_iter()
        .filter(|(_, rows)| !rows.is_empty())
        .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| District | Accuracy | Macro F1 |\n|---|---|---|\n");
        for (title, rows) in self.sections() {
            writeln!(s, "| **{title}** | | |").unwrap();
            for r in rows {
                writeln!(s, "| {} | {:.2} | {:.2} |", r.district, r.accuracy, r.macro_f1).unwrap();
            }
        }
        s
    }

    /// LaTeX `tabular` in the same layout, for side-by-side comparison with
    /// published tables.
    pub fn to_latex(&self) -> String {
        let mut s = String::from(
            "\\begin{tabular}{rcc}\n\\hline\n\\textbf{District} & \\textbf{Accuracy} & \\textbf{Macro F1}\\\\\n\\hline\n",
        );
        for (title, rows) in self.sections() {
            writeln!(s, "\\multicolumn{{3}}{{l}}{{{title}}}\\\\\n\\hline").unwrap();
            for r in rows {
                writeln!(s, "{} & {:.2} & {:.2} \\\\", r.district, r.accuracy, r.macro_f1).unwrap();
            }
            s.push_str("\\hline\n");
        }
        s.push_str("\\end{tabular}\n");
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["district", "group", "accuracy", "macro_f1"])?;
        for r in &self.rows {
            let group = match r.group {
                Some(DistrictGroup::High) => "high",
                Some(DistrictGroup::Low) => "low",
                None => "",
            };
            w.write_record([
                r.district.as_str(),
                group,
                &format!("{:.2}", r.accuracy),
                &format!("{:.2}", r.macro_f1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn district_report(results: &[RunResult]) -> DistrictTable {
    DistrictTable::from_rows(
        results
            .iter()
            .map(|r| DistrictRow {
                district: r.name.clone(),
                group: r.group,
                accuracy: r.report.accuracy,
                macro_f1: r.report.macro_f1,
            })
            .collect(),
    )
}

/// Confusion matrix for explicit predictions, for replaying stored outputs.
pub fn report_from_predictions(pred: &[u8], truth: &[u8]) -> Result<EvalReport, MetricsError> {
    let cm: ConfusionMatrix2 = metrics::confusion(pred, truth)?;
    compute_metrics(&cm)
}
