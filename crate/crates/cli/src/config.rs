//! Run configuration: a TOML file whose keys mirror the long flags
//! (`k_high` for `--k-high`), with flags taking precedence.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bailcnn::corpus::{CorpusFormat, SelectionKey};
use bailcnn::experiment::{ExperimentMode, Hyper};
use bailcnn::sanitize::{SplitRatio, Stratify};
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub mode: Option<String>,
    pub districts: Option<Vec<String>>,
    pub k_high: Option<usize>,
    pub k_low: Option<usize>,
    pub selection_key: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub max_len_cap: Option<usize>,
    pub split_ratio: Option<String>,
    pub stratify: Option<bool>,
    pub pad_from_train_only: Option<bool>,
    pub holdout_fraction: Option<f64>,
    pub class_weights: Option<bool>,
    pub patience: Option<usize>,
    pub strip_accents: Option<bool>,
    pub no_lowercase: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File values, overridden by every field set in `flags`.
    pub fn merged(file: Option<&Path>, flags: RunConfig) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        overlay!(cfg, flags;
            corpus, vocab, out, format, mode, districts, k_high, k_low, selection_key,
            epochs, batch_size, lr, seed, max_len_cap, split_ratio, stratify,
            pad_from_train_only, holdout_fraction, class_weights, patience, strip_accents, no_lowercase,
        );
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn corpus(&self) -> Result<&Path> {
        existing(self.corpus.as_deref(), "corpus")
    }

    pub fn vocab(&self) -> Result<&Path> {
        existing(self.vocab.as_deref(), "vocab")
    }

    pub fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("no output directory: pass --out or set `out` in the config")
    }

    pub fn format(&self) -> Result<Option<CorpusFormat>> {
        self.format
            .as_deref()
            .map(|f| f.parse::<CorpusFormat>().map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn mode(&self) -> Result<ExperimentMode> {
        match &self.mode {
            None => Ok(ExperimentMode::PooledAll),
            Some(m) => m.parse().map_err(anyhow::Error::msg),
        }
    }

    pub fn selection_key(&self) -> Result<SelectionKey> {
        match &self.selection_key {
            None => Ok(SelectionKey::default()),
            Some(k) => k.parse().map_err(anyhow::Error::msg),
        }
    }

    pub fn split_ratio(&self) -> Result<SplitRatio> {
        match &self.split_ratio {
            None => Ok(SplitRatio::EIGHTY_TWENTY),
            Some(r) => r.parse().map_err(|e| anyhow::anyhow!("split_ratio {r:?}: {e}")),
        }
    }

    pub fn hyper(&self) -> Result<Hyper> {
        let d = Hyper::default();
        let hyper = Hyper {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            seed: self.seed(),
            max_len_cap: self.max_len_cap.unwrap_or(d.max_len_cap),
            split_ratio: self.split_ratio()?,
            stratify: if self.stratify.unwrap_or(false) { Stratify::ByLabel } else { Stratify::None },
            pad_from_train_only: self.pad_from_train_only.unwrap_or(false),
            holdout_fraction: self.holdout_fraction,
            class_weights: self.class_weights.unwrap_or(false),
            patience: self.patience,
            lowercase: !self.no_lowercase.unwrap_or(false),
            strip_accents: self.strip_accents.unwrap_or(false),
        };
        if hyper.epochs == 0 {
            bail!("epochs must be at least 1");
        }
        if hyper.batch_size == 0 {
            bail!("batch_size must be at least 1");
        }
        Ok(hyper)
    }
}

fn existing<'a>(p: Option<&'a Path>, what: &str) -> Result<&'a Path> {
    let p = p.with_context(|| format!("no {what} path: pass --{what} or set `{what}` in the config"))?;
    if !p.exists() {
        bail!("{what} path {} does not exist", p.display());
    }
    Ok(p)
}
