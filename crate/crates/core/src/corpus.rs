//! Case-record ingestion.
//!
//! Records are read from JSON Lines or CSV files sharing one schema:
//! `case_id`, `district`, `decision`, `bail_amount`, `text`. Rows that do not
//! fit the schema are collected as [`Reject`]s with a reason and a line number
//! instead of aborting the whole load.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Sentinel used by the corpus for "no bail amount recorded".
pub const NO_AMOUNT: i64 = -1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot read files of district {district} ({path}): {source}")]
    DistrictIo {
        district: String,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("csv file {0} has no header row")]
    MissingHeader(PathBuf),
    #[error("cannot infer corpus format from {0}; expected a .jsonl or .csv extension")]
    UnknownFormat(PathBuf),
    #[error("need {required} districts ({k_high} high + {k_low} low) but only {available} are available")]
    TooFewDistricts {
        required: usize,
        available: usize,
        k_high: usize,
        k_low: usize,
    },
}

/// The three decision values found in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decision {
    Granted,
    Dismissed,
    DontKnow,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Granted => "granted",
            Decision::Dismissed => "dismissed",
            Decision::DontKnow => "don't know",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = String;

    /// Accepts the three canonical spellings, ignoring case and surrounding
    /// whitespace. Anything else is rejected rather than mapped to a class.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "granted" => Ok(Decision::Granted),
            "dismissed" => Ok(Decision::Dismissed),
            "don't know" => Ok(Decision::DontKnow),
            _ => Err(format!("unknown decision: {s:?}")),
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One raw court case as read from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub district: String,
    #[serde(rename = "decision")]
    pub decision_raw: Decision,
    /// Rupees; [`NO_AMOUNT`] when absent.
    pub bail_amount: i64,
    pub text: String,
    #[serde(skip)]
    pub source_path: String,
}

/// A row that could not be turned into a [`CaseRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub source_path: String,
    /// 1-based line number in the source file.
    pub line_number: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.json`/`.ndjson` or `.csv`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "jsonl" | "ndjson" | "json" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or csv)")),
        }
    }
}

/// Records and rejects from one or more files, each in file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<CaseRecord>,
    pub rejects: Vec<Reject>,
}

impl Corpus {
    pub fn extend(&mut self, other: Corpus) {
        self.records.extend(other.records);
        self.rejects.extend(other.rejects);
    }
}

const FIELDS: [&str; 5] = ["case_id", "district", "decision", "bail_amount", "text"];

/// Raw string-or-number field values for one row, before validation.
struct RawRow<'a> {
    get: Box<dyn Fn(&str) -> Option<FieldValue> + 'a>,
}

enum FieldValue {
    Str(String),
    Int(i64),
    Other(String),
}

fn build_record(row: RawRow<'_>, source_path: &str) -> Result<CaseRecord, String> {
    let mut missing = None;
    for f in FIELDS {
        if (row.get)(f).is_none() {
            missing = Some(f);
            break;
        }
    }
    if let Some(f) = missing {
        return Err(format!("missing field: {f}"));
    }
    let string_field = |name: &str| -> Result<String, String> {
        match (row.get)(name) {
            Some(FieldValue::Str(s)) => Ok(s),
            Some(FieldValue::Int(i)) => Ok(i.to_string()),
            Some(FieldValue::Other(v)) => Err(format!("field {name} must be a string, found {v}")),
            None => Err(format!("missing field: {name}")),
        }
    };
    let case_id = string_field("case_id")?;
    if case_id.trim().is_empty() {
        return Err("empty case_id".into());
    }
    let district = string_field("district")?;
    if district.trim().is_empty() {
        return Err("empty district".into());
    }
    let decision_raw: Decision = string_field("decision")?.parse()?;
    let bail_amount = match (row.get)("bail_amount") {
        Some(FieldValue::Int(i)) => i,
        Some(FieldValue::Str(s)) => parse_amount(&s)?,
        Some(FieldValue::Other(v)) => return Err(format!("invalid bail_amount: {v}")),
        None => return Err("missing field: bail_amount".into()),
    };
    if bail_amount < NO_AMOUNT {
        return Err(format!("invalid bail_amount: {bail_amount} is below -1"));
    }
    let text = string_field("text")?;
    Ok(CaseRecord {
        case_id,
        district: district.trim().to_string(),
        decision_raw,
        bail_amount,
        text,
        source_path: source_path.to_string(),
    })
}

fn parse_amount(s: &str) -> Result<i64, String> {
    let t = s.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    // Some exports write integral amounts as "15000.0".
    match t.parse::<f64>() {
        Ok(f) if f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(f as i64),
        _ => Err(format!("invalid bail_amount: {s:?}")),
    }
}

fn json_value(v: &Value) -> FieldValue {
    match v {
        Value::String(s) => FieldValue::Str(s.clone()),
        Value::Number(n) => match n.as_i64() {
            Some(i) => FieldValue::Int(i),
            None => match n.as_f64() {
                Some(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => FieldValue::Int(f as i64),
                _ => FieldValue::Other(n.to_string()),
            },
        },
        other => FieldValue::Other(other.to_string()),
    }
}

/// Parses JSON Lines from a reader. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R, source_path: &str) -> io::Result<Corpus> {
    let mut corpus = Corpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_number = idx as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(map)) => {
                let row = RawRow {
                    get: Box::new(move |k| {
                        map.get(k).filter(|v| !v.is_null()).map(json_value)
                    }),
                };
                build_record(row, source_path)
            }
            Ok(_) => Err("malformed row: expected a JSON object".to_string()),
            Err(e) => Err(format!("malformed JSON: {e}")),
        };
        match outcome {
            Ok(rec) => corpus.records.push(rec),
            Err(reason) => corpus.rejects.push(Reject {
                source_path: source_path.to_string(),
                line_number,
                reason,
            }),
        }
    }
    Ok(corpus)
}

/// Parses CSV with a header row naming the schema columns (any order; extra
/// columns are ignored).
pub fn read_csv<R: io::Read>(reader: R, source_path: &str) -> Result<Corpus, CorpusError> {
    let path = PathBuf::from(source_path);
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|source| CorpusError::Csv { path: path.clone(), source })?
        .clone();
    if headers.is_empty() {
        return Err(CorpusError::MissingHeader(path));
    }
    let column: BTreeMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let mut corpus = Corpus::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line_number;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                line_number = record.position().map_or(0, |p| p.line());
                let rec = &record;
                let column = &column;
                let row = RawRow {
                    get: Box::new(move |k| {
                        column
                            .get(k)
                            .and_then(|&i| rec.get(i))
                            .map(|s| FieldValue::Str(s.to_string()))
                    }),
                };
                match build_record(row, source_path) {
                    Ok(r) => corpus.records.push(r),
                    Err(reason) => corpus.rejects.push(Reject {
                        source_path: source_path.to_string(),
                        line_number,
                        reason,
                    }),
                }
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(CorpusError::Csv { path, source: e });
                }
                let line_number = e.position().map_or(0, |p| p.line());
                corpus.rejects.push(Reject {
                    source_path: source_path.to_string(),
                    line_number,
                    reason: format!("malformed CSV row: {e}"),
                });
            }
        }
    }
    Ok(corpus)
}

/// Loads every record of one file.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let source = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file), &source).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        CorpusFormat::Csv => read_csv(file, &source),
    }
}

/// Loads a single file, or every `.jsonl`/`.csv` file of a directory in
/// file-name order.
pub fn load_path(path: &Path, format: Option<CorpusFormat>) -> Result<Corpus, CorpusError> {
    if path.is_dir() {
        let mut corpus = Corpus::default();
        for (file, fmt) in corpus_files(path, format)? {
            corpus.extend(load_corpus(&file, fmt)?);
        }
        Ok(corpus)
    } else {
        let fmt = match format {
            Some(f) => f,
            None => CorpusFormat::from_path(path).ok_or_else(|| CorpusError::UnknownFormat(path.to_path_buf()))?,
        };
        load_corpus(path, fmt)
    }
}

/// Lists the corpus files of a directory, sorted by name.
pub fn corpus_files(
    dir: &Path,
    format: Option<CorpusFormat>,
) -> Result<Vec<(PathBuf, CorpusFormat)>, CorpusError> {
    let io_err = |source| CorpusError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let p = entry.map_err(io_err)?.path();
        if !p.is_file() {
            continue;
        }
        if let Some(detected) = CorpusFormat::from_path(&p) {
            if format.is_none_or(|f| f == detected) {
                files.push((p, detected));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Writes records as canonical JSON Lines (one object per line).
pub fn write_jsonl<W: Write>(mut out: W, records: &[CaseRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes records as CSV with the canonical header.
pub fn write_csv<W: Write>(out: W, records: &[CaseRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIELDS)?;
    for r in records {
        w.write_record([
            r.case_id.as_str(),
            r.district.as_str(),
            r.decision_raw.as_str(),
            &r.bail_amount.to_string(),
            r.text.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects<W: Write>(mut out: W, rejects: &[Reject]) -> io::Result<()> {
    for r in rejects {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistrictStats {
    pub case_count: u64,
    pub byte_size: u64,
}

/// Per-district case counts and on-disk sizes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistrictInventory {
    pub entries: BTreeMap<String, DistrictStats>,
}

impl DistrictInventory {
    /// Builds an inventory from already-parsed records. Without source files
    /// to measure, `byte_size` is the UTF-8 length of the case texts.
    pub fn from_records(records: &[CaseRecord]) -> Self {
        let mut entries: BTreeMap<String, DistrictStats> = BTreeMap::new();
        for r in records {
            let e = entries.entry(r.district.clone()).or_default();
            e.case_count += 1;
            e.byte_size += r.text.len() as u64;
        }
        DistrictInventory { entries }
    }

    /// Like [`from_records`](Self::from_records), but a source file holding a
    /// single district contributes its on-disk size instead. Files that mix
    /// districts cannot be apportioned and keep the text-length measure.
    pub fn from_sources(records: &[CaseRecord]) -> Result<Self, CorpusError> {
        let mut by_file: BTreeMap<&str, Vec<&CaseRecord>> = BTreeMap::new();
        for r in records {
            by_file.entry(r.source_path.as_str()).or_default().push(r);
        }
        let mut inv = DistrictInventory::default();
        for (path, rows) in by_file {
            let single = rows.iter().all(|r| r.district == rows[0].district);
            let file_size = if single && !path.is_empty() {
                let meta = fs::metadata(path).map_err(|source| CorpusError::DistrictIo {
                    district: rows[0].district.clone(),
                    path: PathBuf::from(path),
                    source,
                })?;
                Some(meta.len())
            } else {
                None
            };
            for r in &rows {
                let e = inv.entries.entry(r.district.clone()).or_default();
                e.case_count += 1;
                if file_size.is_none() {
                    e.byte_size += r.text.len() as u64;
                }
            }
            if let Some(size) = file_size {
                inv.entries.get_mut(&rows[0].district).expect("inserted above").byte_size += size;
            }
        }
        Ok(inv)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["district", "case_count", "byte_size"])?;
        for (d, s) in &self.entries {
            w.write_record([d.as_str(), &s.case_count.to_string(), &s.byte_size.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Measures each district's source files. A district may appear several
/// times; its sizes and counts are summed.
pub fn inventory(paths: &[(String, PathBuf)]) -> Result<DistrictInventory, CorpusError> {
    let mut inv = DistrictInventory::default();
    for (district, path) in paths {
        let district_err = |source| CorpusError::DistrictIo {
            district: district.clone(),
            path: path.clone(),
            source,
        };
        let byte_size = fs::metadata(path).map_err(district_err)?.len();
        let format = CorpusFormat::from_path(path).ok_or_else(|| CorpusError::UnknownFormat(path.clone()))?;
        let corpus = match load_corpus(path, format) {
            Ok(c) => c,
            Err(CorpusError::Io { source, .. }) => return Err(district_err(source)),
            Err(e) => return Err(e),
        };
        let e = inv.entries.entry(district.clone()).or_default();
        e.byte_size += byte_size;
        e.case_count += corpus.records.len() as u64;
    }
    Ok(inv)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKey {
    ByteSize,
    #[default]
    CaseCount,
}

impl FromStr for SelectionKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "byte_size" | "bytes" | "file_size" => Ok(SelectionKey::ByteSize),
            "case_count" | "count" | "cases" => Ok(SelectionKey::CaseCount),
            other => Err(format!("unknown selection key {other:?} (expected case_count or byte_size)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistrictSelection {
    /// Largest first.
    pub high: Vec<String>,
    /// Smallest first.
    pub low: Vec<String>,
}

/// Picks the `k_high` largest and `k_low` smallest districts by `key`.
/// Equal keys are ordered by district name.
pub fn select_districts(
    inv: &DistrictInventory,
    k_high: usize,
    k_low: usize,
    key: SelectionKey,
) -> Result<DistrictSelection, CorpusError> {
    let required = k_high + k_low;
    if inv.len() < required {
        return Err(CorpusError::TooFewDistricts {
            required,
            available: inv.len(),
            k_high,
            k_low,
        });
    }
    let value = |s: &DistrictStats| match key {
        SelectionKey::ByteSize => s.byte_size,
        SelectionKey::CaseCount => s.case_count,
    };
    let mut by_desc: Vec<(&String, u64)> = inv.entries.iter().map(|(d, s)| (d, value(s))).collect();
    by_desc.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let high: Vec<String> = by_desc.iter().take(k_high).map(|(d, _)| (*d).clone()).collect();

    let mut rest: Vec<(&String, u64)> = by_desc[k_high..].to_vec();
    rest.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let low = rest.iter().take(k_low).map(|(d, _)| (*d).clone()).collect();
    Ok(DistrictSelection { high, low })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub granted: u64,
    pub dismissed: u64,
    pub dont_know: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.granted + self.dismissed + self.dont_know
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub per_district: BTreeMap<String, LabelCounts>,
}

impl LabelDistribution {
    pub fn total(&self) -> u64 {
        self.per_district.values().map(LabelCounts::total).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["district", "granted", "dismissed", "dont_know"])?;
        for (d, c) in &self.per_district {
            w.write_record([
                d.as_str(),
                &c.granted.to_string(),
                &c.dismissed.to_string(),
                &c.dont_know.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn label_distribution(records: &[CaseRecord]) -> LabelDistribution {
    let mut dist = LabelDistribution::default();
    for r in records {
        let c = dist.per_district.entry(r.district.clone()).or_default();
        match r.decision_raw {
            Decision::Granted => c.granted += 1,
            Decision::Dismissed => c.dismissed += 1,
            Decision::DontKnow => c.dont_know += 1,
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn jsonl(s: &str) -> Corpus {
        read_jsonl(Cursor::new(s), "mem.jsonl").unwrap()
    }

    #[test]
    fn jsonl_field_mapping() {
        let c = jsonl(r#"{"case_id":"X1","district":"Agra","decision":"granted","bail_amount":15000,"text":"bail plea"}"#);
        assert!(c.rejects.is_empty());
        let r = &c.records[0];
        assert_eq!(r.case_id, "X1");
        assert_eq!(r.district, "Agra");
        assert_eq!(r.decision_raw, Decision::Granted);
        assert_eq!(r.bail_amount, 15000);
        assert_eq!(r.text, "bail plea");
        assert_eq!(r.source_path, "mem.jsonl");
    }

    #[test]
    fn jsonl_missing_decision_is_rejected() {
        let c = jsonl(r#"{"case_id":"X1","district":"Agra","bail_amount":15000,"text":"t"}"#);
        assert!(c.records.is_empty());
        assert_eq!(c.rejects.len(), 1);
        assert_eq!(c.rejects[0].reason, "missing field: decision");
        assert_eq!(c.rejects[0].line_number, 1);
    }

    #[test]
    fn jsonl_malformed_line_keeps_order() {
        let src = concat!(
            r#"{"case_id":"a","district":"D","decision":"granted","bail_amount":10,"text":"t"}"#,
            "\n{not json\n",
            r#"{"case_id":"b","district":"D","decision":"dismissed","bail_amount":-1,"text":"t"}"#,
            "\n"
        );
        let c = jsonl(src);
        let ids: Vec<_> = c.records.iter().map(|r| r.case_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(c.rejects.len(), 1);
        assert_eq!(c.rejects[0].line_number, 2);
        assert!(c.rejects[0].reason.starts_with("malformed JSON"));
    }

    #[test]
    fn unknown_decision_is_a_reject_not_a_class() {
        let c = jsonl(r#"{"case_id":"a","district":"D","decision":"withdrawn","bail_amount":0,"text":"t"}"#);
        assert!(c.records.is_empty());
        assert!(c.rejects[0].reason.contains("unknown decision"));
    }

    #[test]
    fn amount_below_sentinel_rejected() {
        let c = jsonl(r#"{"case_id":"a","district":"D","decision":"dismissed","bail_amount":-5,"text":"t"}"#);
        assert!(c.rejects[0].reason.contains("below -1"));
    }

    #[test]
    fn csv_rows_and_rejects() {
        let src = "case_id,district,decision,bail_amount,text\n\
                   1,Agra,granted,15000,\"first, with comma\"\n\
                   2,Agra,don't know,-1,second\n\
                   3,Agra,granted,abc,third\n\
                   4,Agra\n";
        let c = read_csv(Cursor::new(src), "mem.csv").unwrap();
        assert_eq!(c.records.len(), 2);
        assert_eq!(c.records[0].text, "first, with comma");
        assert_eq!(c.records[1].decision_raw, Decision::DontKnow);
        assert_eq!(c.rejects.len(), 2);
        assert_eq!(c.rejects[0].line_number, 4);
        assert!(c.rejects[0].reason.contains("invalid bail_amount"));
        assert_eq!(c.rejects[1].reason, "missing field: decision");
    }

    #[test]
    fn unreadable_path_is_fatal() {
        let err = load_corpus(Path::new("/nonexistent/corpus.jsonl"), CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn inventory_sizes_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        let e = dir.path().join("e.jsonl");
        let line = r#"{"case_id":"1","district":"A","decision":"granted","bail_amount":1,"text":"x"}"#;
        fs::write(&a, format!("{line}\n")).unwrap();
        fs::write(&b, format!("{line}\n{line}\n")).unwrap();
        fs::write(&e, "").unwrap();
        let inv = inventory(&[
            ("A".into(), a.clone()),
            ("B".into(), b.clone()),
            ("E".into(), e),
        ])
        .unwrap();
        assert_eq!(inv.entries["A"], DistrictStats { case_count: 1, byte_size: fs::metadata(&a).unwrap().len() });
        assert_eq!(inv.entries["B"].case_count, 2);
        assert_eq!(inv.entries["B"].byte_size, fs::metadata(&b).unwrap().len());
        assert_eq!(inv.entries["E"], DistrictStats { case_count: 0, byte_size: 0 });
    }

    #[test]
    fn source_inventory_uses_file_size_for_single_district_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let mixed = dir.path().join("mixed.jsonl");
        let row = |d: &str, t: &str| {
            format!(r#"{{"case_id":"1","district":"{d}","decision":"granted","bail_amount":1,"text":"{t}"}}"#)
        };
        fs::write(&a, format!("{}\n{}\n", row("A", "xx"), row("A", "y"))).unwrap();
        fs::write(&mixed, format!("{}\n{}\n", row("A", "abcd"), row("B", "abc"))).unwrap();
        let corpus = load_path(dir.path(), None).unwrap();
        let inv = DistrictInventory::from_sources(&corpus.records).unwrap();
        let a_size = fs::metadata(&a).unwrap().len();
        assert_eq!(inv.entries["A"], DistrictStats { case_count: 3, byte_size: a_size + 4 });
        assert_eq!(inv.entries["B"], DistrictStats { case_count: 1, byte_size: 3 });
    }

    #[test]
    fn inventory_error_names_district() {
        let err = inventory(&[("Basti".into(), PathBuf::from("/nonexistent/basti.jsonl"))]).unwrap_err();
        assert!(err.to_string().contains("Basti"));
    }

    #[test]
    fn select_degenerate() {
        let inv = DistrictInventory::default();
        let s = select_districts(&inv, 0, 0, SelectionKey::CaseCount).unwrap();
        assert!(s.high.is_empty() && s.low.is_empty());
    }

    #[test]
    fn select_too_few() {
        let mut inv = DistrictInventory::default();
        inv.entries.insert("A".into(), DistrictStats { case_count: 1, byte_size: 1 });
        let err = select_districts(&inv, 1, 1, SelectionKey::CaseCount).unwrap_err();
        assert!(err.to_string().contains("need 2"));
        assert!(err.to_string().contains("only 1"));
    }

    #[test]
    fn select_ties_by_name() {
        let mut inv = DistrictInventory::default();
        for d in ["C", "A", "B", "D"] {
            inv.entries.insert(d.into(), DistrictStats { case_count: 5, byte_size: 0 });
        }
        let s = select_districts(&inv, 1, 2, SelectionKey::CaseCount).unwrap();
        assert_eq!(s.high, ["A"]);
        assert_eq!(s.low, ["B", "C"]);
    }

    #[test]
    fn select_by_byte_size() {
        let mut inv = DistrictInventory::default();
        inv.entries.insert("A".into(), DistrictStats { case_count: 100, byte_size: 1 });
        inv.entries.insert("B".into(), DistrictStats { case_count: 1, byte_size: 100 });
        let s = select_districts(&inv, 1, 1, SelectionKey::ByteSize).unwrap();
        assert_eq!(s.high, ["B"]);
        assert_eq!(s.low, ["A"]);
    }

    fn rec(id: &str, district: &str, d: Decision) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            district: district.into(),
            decision_raw: d,
            bail_amount: -1,
            text: "t".into(),
            source_path: String::new(),
        }
    }

    #[test]
    fn label_distribution_counts() {
        assert!(label_distribution(&[]).per_district.is_empty());
        let recs = vec![
            rec("1", "Agra", Decision::Granted),
            rec("2", "Agra", Decision::Granted),
            rec("3", "Agra", Decision::Dismissed),
            rec("4", "Agra", Decision::Granted),
        ];
        let d = label_distribution(&recs);
        assert_eq!(d.per_district["Agra"], LabelCounts { granted: 3, dismissed: 1, dont_know: 0 });
    }

    fn arb_record() -> impl Strategy<Value = CaseRecord> {
        (
            "[a-zA-Z0-9]{1,8}",
            prop::sample::select(vec!["Agra", "Basti", "Ballia", "Sitapur"]),
            prop::sample::select(vec![Decision::Granted, Decision::Dismissed, Decision::DontKnow]),
            -1i64..100_000,
            "\\PC{0,40}",
        )
            .prop_map(|(id, d, dec, amt, text)| CaseRecord {
                case_id: id,
                district: d.to_string(),
                decision_raw: dec,
                bail_amount: amt,
                text,
                source_path: String::new(),
            })
    }

    proptest! {
        #[test]
        fn distribution_sums_to_record_count(recs in prop::collection::vec(arb_record(), 0..60)) {
            let dist = label_distribution(&recs);
            prop_assert_eq!(dist.total(), recs.len() as u64);
            // brute-force recount per district
            for (district, counts) in &dist.per_district {
                let n = |d: Decision| recs.iter().filter(|r| &r.district == district && r.decision_raw == d).count() as u64;
                prop_assert_eq!(counts.granted, n(Decision::Granted));
                prop_assert_eq!(counts.dismissed, n(Decision::Dismissed));
                prop_assert_eq!(counts.dont_know, n(Decision::DontKnow));
            }
        }

        #[test]
        fn writers_round_trip(recs in prop::collection::vec(arb_record(), 0..20)) {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &recs).unwrap();
            let back = read_jsonl(Cursor::new(&buf), "").unwrap();
            prop_assert!(back.rejects.is_empty());
            prop_assert_eq!(&back.records, &recs);

            let mut buf = Vec::new();
            write_csv(&mut buf, &recs).unwrap();
            let back = read_csv(Cursor::new(&buf), "").unwrap();
            prop_assert!(back.rejects.is_empty());
            prop_assert_eq!(&back.records, &recs);
        }

        #[test]
        fn selection_is_pure_and_ordered(counts in prop::collection::vec(0u64..50, 2..15), kh in 0usize..4, kl in 0usize..4) {
            let mut inv = DistrictInventory::default();
            for (i, c) in counts.iter().enumerate() {
                inv.entries.insert(format!("D{i:02}"), DistrictStats { case_count: *c, byte_size: 0 });
            }
            prop_assume!(kh + kl <= inv.len());
            let a = select_districts(&inv, kh, kl, SelectionKey::CaseCount).unwrap();
            let b = select_districts(&inv, kh, kl, SelectionKey::CaseCount).unwrap();
            prop_assert_eq!(&a, &b);
            for h in &a.high {
                prop_assert!(!a.low.contains(h));
                for l in &a.low {
                    prop_assert!(inv.entries[h].case_count >= inv.entries[l].case_count);
                }
            }
        }
    }
}
