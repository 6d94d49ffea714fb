//! Label consistency sieve and the train/test split.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CaseRecord, Decision, NO_AMOUNT};
use crate::rng::{self, Stream};

/// Binary outcome. `Dismissed` is the positive class (target 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Granted,
    Dismissed,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Granted, Label::Dismissed];

    /// 0 for granted, 1 for dismissed.
    pub fn index(self) -> usize {
        match self {
            Label::Granted => 0,
            Label::Dismissed => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Granted),
            1 => Some(Label::Dismissed),
            _ => None,
        }
    }

    pub fn target(self) -> f32 {
        self.index() as f32
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Granted => "Granted",
            Label::Dismissed => "Dismissed",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn is_no_amount(amount: i64) -> bool {
    amount == NO_AMOUNT || amount == 0
}

/// A case that passed every sieve rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanCase {
    pub case_id: String,
    pub district: String,
    pub text: String,
    pub label: Label,
    pub bail_amount: i64,
}

impl CleanCase {
    pub fn to_record(&self) -> CaseRecord {
        CaseRecord {
            case_id: self.case_id.clone(),
            district: self.district.clone(),
            decision_raw: match self.label {
                Label::Granted => Decision::Granted,
                Label::Dismissed => Decision::Dismissed,
            },
            bail_amount: self.bail_amount,
            text: self.text.clone(),
            source_path: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropRule {
    DontKnow,
    DismissedWithAmount,
    GrantedWithoutAmount,
    EmptyText,
}

impl DropRule {
    pub const ALL: [DropRule; 4] = [
        DropRule::DontKnow,
        DropRule::DismissedWithAmount,
        DropRule::GrantedWithoutAmount,
        DropRule::EmptyText,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub case_id: String,
    pub rule: DropRule,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropLog {
    pub entries: Vec<DropEntry>,
}

impl DropLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of drops per rule; every rule is present, possibly with 0.
    pub fn summary(&self) -> BTreeMap<DropRule, usize> {
        let mut m: BTreeMap<DropRule, usize> = DropRule::ALL.iter().map(|r| (*r, 0)).collect();
        for e in &self.entries {
            *m.entry(e.rule).or_default() += 1;
        }
        m
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SieveOutcome {
    Kept(CleanCase),
    Dropped { rule: DropRule, detail: String },
}

/// Applies the rules in order; the first one that matches decides the drop.
pub fn sieve(record: &CaseRecord) -> SieveOutcome {
    let amount = record.bail_amount;
    let label = match record.decision_raw {
        Decision::DontKnow => {
            return SieveOutcome::Dropped {
                rule: DropRule::DontKnow,
                detail: "decision is \"don't know\"".into(),
            }
        }
        Decision::Dismissed if !is_no_amount(amount) => {
            return SieveOutcome::Dropped {
                rule: DropRule::DismissedWithAmount,
                detail: format!("dismissed with bail_amount {amount}"),
            }
        }
        Decision::Granted if is_no_amount(amount) => {
            return SieveOutcome::Dropped {
                rule: DropRule::GrantedWithoutAmount,
                detail: format!("granted with bail_amount {amount}"),
            }
        }
        Decision::Granted => Label::Granted,
        Decision::Dismissed => Label::Dismissed,
    };
    if record.text.trim().is_empty() {
        return SieveOutcome::Dropped {
            rule: DropRule::EmptyText,
            detail: "text is empty or whitespace".into(),
        };
    }
    SieveOutcome::Kept(CleanCase {
        case_id: record.case_id.clone(),
        district: record.district.clone(),
        text: record.text.clone(),
        label,
        bail_amount: amount,
    })
}

pub fn sanitize_corpus(records: &[CaseRecord]) -> (Vec<CleanCase>, DropLog) {
    let mut clean = Vec::with_capacity(records.len());
    let mut log = DropLog::default();
    for r in records {
        match sieve(r) {
            SieveOutcome::Kept(c) => clean.push(c),
            SieveOutcome::Dropped { rule, detail } => log.entries.push(DropEntry {
                case_id: r.case_id.clone(),
                rule,
                detail,
            }),
        }
    }
    (clean, log)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("cannot split an empty dataset")]
    Empty,
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(SplitRatio),
}

/// Train fraction as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub num: u64,
    pub den: u64,
}

impl SplitRatio {
    pub const EIGHTY_TWENTY: SplitRatio = SplitRatio { num: 4, den: 5 };

    pub fn new(num: u64, den: u64) -> Result<Self, SplitError> {
        let r = SplitRatio { num, den };
        if den == 0 || num == 0 || num >= den {
            return Err(SplitError::BadRatio(r));
        }
        Ok(r)
    }

    /// floor(ratio * n), computed exactly.
    pub fn train_count(self, n: usize) -> usize {
        ((n as u128 * self.num as u128) / self.den as u128) as usize
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self::EIGHTY_TWENTY
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for SplitRatio {
    type Err = String;

    /// Parses `a/b` or a decimal such as `0.8`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (num, den) = if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse::<u64>().map_err(|e| format!("bad ratio {s:?}: {e}"))?;
            let b = b.trim().parse::<u64>().map_err(|e| format!("bad ratio {s:?}: {e}"))?;
            (a, b)
        } else {
            let frac = s.strip_prefix("0.").ok_or_else(|| format!("bad ratio {s:?}"))?;
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("bad ratio {s:?}"));
            }
            (frac.parse::<u64>().unwrap(), 10u64.pow(frac.len() as u32))
        };
        SplitRatio::new(num, den).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratify {
    #[default]
    None,
    /// Split each label separately so both partitions keep the label mix.
    ByLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<CleanCase>,
    pub test: Vec<CleanCase>,
    pub ratio: SplitRatio,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

impl SplitDataset {
    /// `(case_id, partition)` rows, train first.
    pub fn manifest(&self) -> Vec<(&str, Partition)> {
        self.train
            .iter()
            .map(|c| (c.case_id.as_str(), Partition::Train))
            .chain(self.test.iter().map(|c| (c.case_id.as_str(), Partition::Test)))
            .collect()
    }

    pub fn write_manifest<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["case_id", "partition"])?;
        for (id, p) in self.manifest() {
            w.write_record([id, if p == Partition::Train { "train" } else { "test" }])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a split manifest written by [`SplitDataset::write_manifest`].
pub fn read_manifest<R: io::Read>(input: R) -> csv::Result<Vec<(String, Partition)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().to_string();
        let p = match row.get(1).unwrap_or_default() {
            "train" => Partition::Train,
            _ => Partition::Test,
        };
        rows.push((id, p));
    }
    Ok(rows)
}

fn shuffled_indices(n: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Seeded shuffle, then the first floor(ratio * N) cases train and the rest test.
pub fn split(cases: &[CleanCase], ratio: SplitRatio, seed: u64) -> Result<SplitDataset, SplitError> {
    split_with(cases, ratio, seed, Stratify::None)
}

pub fn split_with(
    cases: &[CleanCase],
    ratio: SplitRatio,
    seed: u64,
    stratify: Stratify,
) -> Result<SplitDataset, SplitError> {
    if cases.is_empty() {
        return Err(SplitError::Empty);
    }
    SplitRatio::new(ratio.num, ratio.den)?;
    let mut rng = rng::stream(seed, Stream::Split);
    let (train, test) = match stratify {
        Stratify::None => {
            let idx = shuffled_indices(cases.len(), &mut rng);
            let n_train = ratio.train_count(cases.len());
            (
                idx[..n_train].iter().map(|&i| cases[i].clone()).collect(),
                idx[n_train..].iter().map(|&i| cases[i].clone()).collect(),
            )
        }
        Stratify::ByLabel => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for label in Label::ALL {
                let group: Vec<&CleanCase> = cases.iter().filter(|c| c.label == label).collect();
                let idx = shuffled_indices(group.len(), &mut rng);
                let n_train = ratio.train_count(group.len());
                train.extend(idx[..n_train].iter().map(|&i| group[i].clone()));
                test.extend(idx[n_train..].iter().map(|&i| group[i].clone()));
            }
            (train, test)
        }
    };
    Ok(SplitDataset { train, test, ratio, seed })
}

/// Per-district (total, train, test) counts under `ratio`, like a data
/// distribution table. The last row is the pooled total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitCountRow {
    pub district: String,
    pub total: usize,
    pub train: usize,
    pub test: usize,
}

pub fn split_counts(cases: &[CleanCase], ratio: SplitRatio) -> Vec<SplitCountRow> {
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cases {
        *per.entry(c.district.as_str()).or_default() += 1;
    }
    let mut rows: Vec<SplitCountRow> = per
        .into_iter()
        .map(|(d, n)| {
            let train = ratio.train_count(n);
            SplitCountRow { district: d.to_string(), total: n, train, test: n - train }
        })
        .collect();
    let (total, train, test) = rows
        .iter()
        .fold((0, 0, 0), |acc, r| (acc.0 + r.total, acc.1 + r.train, acc.2 + r.test));
    rows.push(SplitCountRow { district: "Total".into(), total, train, test });
    rows
}

pub fn write_split_counts<W: Write>(out: W, rows: &[SplitCountRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["district", "total", "train", "test"])?;
    for r in rows {
        w.write_record([r.district.as_str(), &r.total.to_string(), &r.train.to_string(), &r.test.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
