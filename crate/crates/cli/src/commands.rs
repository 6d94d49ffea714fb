use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bailcnn::corpus::{self, select_districts, Corpus, DistrictInventory};
use bailcnn::experiment::{
    self, district_report, run_experiment, run_per_district, write_run_artifacts, DistrictGroup, EncodedSet,
    ExperimentMode, ExperimentPlan, RunOutput, RunResult,
};
use bailcnn::nn::load_checkpoint;
use bailcnn::sanitize::{self, read_manifest, Partition};
use bailcnn::tokenizer::{self, EncodeConfig, Vocabulary};
use bailcnn::Label;
use serde::Serialize;

use crate::config::{RunConfig, DEFAULT_K};

fn announce_seed(cfg: &RunConfig) {
    eprintln!("effective seed: {}", cfg.seed());
}

fn create(path: &Path) -> Result<io::BufWriter<fs::File>> {
    Ok(io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let out = cfg.out()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn load(cfg: &RunConfig) -> Result<Corpus> {
    let corpus = corpus::load_path(cfg.corpus()?, cfg.format()?)?;
    if !corpus.rejects.is_empty() {
        eprintln!("{} malformed rows skipped", corpus.rejects.len());
    }
    Ok(corpus)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    Ok(tokenizer::load_vocab(cfg.vocab()?)?)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    announce_seed(cfg);
    let corpus = load(cfg)?;
    let out = out_dir(cfg)?;
    corpus::write_jsonl(create(&out.join("corpus.jsonl"))?, &corpus.records)?;
    corpus::write_rejects(create(&out.join("rejects.jsonl"))?, &corpus.rejects)?;
    let inv = DistrictInventory::from_sources(&corpus.records)?;
    inv.write_csv(create(&out.join("inventory.csv"))?)?;
    corpus::label_distribution(&corpus.records).write_csv(create(&out.join("label_dist.csv"))?)?;
    println!(
        "{} records from {} districts, {} rejected rows",
        corpus.records.len(),
        inv.len(),
        corpus.rejects.len()
    );
    Ok(())
}

pub fn sanitize(cfg: &RunConfig) -> Result<()> {
    announce_seed(cfg);
    let corpus = load(cfg)?;
    let out = out_dir(cfg)?;
    let (clean, log) = sanitize::sanitize_corpus(&corpus.records);
    let records: Vec<_> = clean.iter().map(|c| c.to_record()).collect();
    corpus::write_jsonl(create(&out.join("clean.jsonl"))?, &records)?;
    log.write_jsonl(create(&out.join("drops.jsonl"))?)?;
    corpus::write_rejects(create(&out.join("rejects.jsonl"))?, &corpus.rejects)?;
    let counts = sanitize::split_counts(&clean, cfg.split_ratio()?);
    sanitize::write_split_counts(create(&out.join("split_counts.csv"))?, &counts)?;
    println!("{} kept, {} dropped", clean.len(), log.len());
    for (rule, n) in log.summary() {
        println!("  {rule:?}: {n}");
    }
    Ok(())
}

/// Districts of the run and, where a size selection was made, their group.
fn resolve_districts(cfg: &RunConfig, corpus: &Corpus) -> Result<(Vec<String>, BTreeMap<String, DistrictGroup>)> {
    let mode = cfg.mode()?;
    if let Some(d) = &cfg.districts {
        if d.is_empty() {
            bail!("--districts is empty");
        }
        return Ok((d.clone(), BTreeMap::new()));
    }
    let inv = DistrictInventory::from_sources(&corpus.records)?;
    let key = cfg.selection_key()?;
    let k_high = cfg.k_high.unwrap_or(DEFAULT_K);
    let k_low = cfg.k_low.unwrap_or(DEFAULT_K);
    let tag = |names: &[String], g: DistrictGroup| names.iter().map(|n| (n.clone(), g)).collect::<Vec<_>>();
    Ok(match mode {
        ExperimentMode::PooledAll => (inv.entries.keys().cloned().collect(), BTreeMap::new()),
        ExperimentMode::PooledHigh => {
            let sel = select_districts(&inv, k_high, 0, key)?;
            (sel.high, BTreeMap::new())
        }
        ExperimentMode::PooledLow => {
            let sel = select_districts(&inv, k_high, k_low, key)?;
            (sel.low, BTreeMap::new())
        }
        ExperimentMode::PerDistrict if cfg.k_high.is_none() && cfg.k_low.is_none() => {
            (inv.entries.keys().cloned().collect(), BTreeMap::new())
        }
        ExperimentMode::PerDistrict => {
            let sel = select_districts(&inv, k_high, k_low, key)?;
            let mut groups: BTreeMap<String, DistrictGroup> = tag(&sel.high, DistrictGroup::High).into_iter().collect();
            groups.extend(tag(&sel.low, DistrictGroup::Low));
            let mut all = sel.high;
            all.extend(sel.low);
            (all, groups)
        }
    })
}

/// Directory name for a district: letters and digits kept, the rest `_`.
fn dir_name(district: &str) -> String {
    district
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn log_run(out: &RunOutput) {
    for e in &out.result.history.epochs {
        eprintln!(
            "[{}] epoch {:>3}  loss {:.4}  train acc {:.4}  val acc {:.4}  ({:.1}s)",
            out.result.name, e.epoch, e.mean_loss, e.train_accuracy, e.validation_accuracy, e.seconds
        );
    }
}

fn write_tables(results: &[RunResult], out: &Path) -> Result<String> {
    let table = district_report(results);
    let md = table.to_markdown();
    fs::write(out.join("district_table.md"), &md)?;
    table.write_csv(create(&out.join("district_table.csv"))?)?;
    fs::write(out.join("district_table.tex"), table.to_latex())?;
    Ok(md)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    announce_seed(cfg);
    let hyper = cfg.hyper()?;
    let corpus = load(cfg)?;
    let vocab = load_vocab(cfg)?;
    let out = out_dir(cfg)?;
    let mode = cfg.mode()?;
    let (districts, groups) = resolve_districts(cfg, &corpus)?;
    eprintln!("mode {mode:?} over {} district(s): {}", districts.len(), districts.join(", "));
    let plan = ExperimentPlan { mode, districts, hyper };

    let results = if mode == ExperimentMode::PerDistrict {
        let mut outs = run_per_district(&plan, &corpus.records, &vocab, &groups)?;
        for o in &mut outs {
            log_run(o);
            write_run_artifacts(o, &out.join(dir_name(&o.result.name)))?;
        }
        outs.into_iter().map(|o| o.result).collect::<Vec<_>>()
    } else {
        let mut o = run_experiment(&plan, &corpus.records, &vocab)?;
        log_run(&o);
        write_run_artifacts(&mut o, out)?;
        fs::write(out.join("confusion.md"), o.result.report.to_markdown(2))?;
        vec![o.result]
    };
    for r in &results {
        println!(
            "{}: pad length {}, train {}, test {}, accuracy {:.4}, macro F1 {:.4}",
            r.name, r.pad_length, r.train_size, r.test_size, r.report.accuracy, r.report.macro_f1
        );
    }
    write_tables(&results, out)?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: Option<&Path>) -> Result<()> {
    announce_seed(cfg);
    let default_in = |name: &str| -> Result<PathBuf> { Ok(cfg.out()?.join(name)) };
    let ckpt = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => default_in("model.ckpt")?,
    };
    let manifest_path = match split {
        Some(p) => p.to_path_buf(),
        None => default_in("split.csv")?,
    };
    let (params, model) = load_checkpoint(&ckpt)?;
    let vocab = load_vocab(cfg)?;
    if vocab.len() != model.vocab_size {
        bail!(
            "vocabulary has {} tokens but the checkpoint was trained with {}",
            vocab.len(),
            model.vocab_size
        );
    }
    let manifest = read_manifest(
        fs::File::open(&manifest_path).with_context(|| format!("opening {}", manifest_path.display()))?,
    )?;
    let test_ids: BTreeSet<&str> = manifest
        .iter()
        .filter(|(_, p)| *p == Partition::Test)
        .map(|(id, _)| id.as_str())
        .collect();
    let (clean, _) = sanitize::sanitize_corpus(&load(cfg)?.records);
    let test: Vec<_> = clean.into_iter().filter(|c| test_ids.contains(c.case_id.as_str())).collect();
    if test.len() != test_ids.len() {
        bail!(
            "{} test cases in the manifest but only {} found among the clean corpus records",
            test_ids.len(),
            test.len()
        );
    }
    let hyper = cfg.hyper()?;
    let enc = EncodeConfig {
        max_len: model.max_len,
        ..hyper.encode_config(model.max_len)
    };
    let set = EncodedSet::encode(&test, &vocab, &enc);
    let report = experiment::evaluate(&params, &model, &set)?;
    print!("{}", report.to_markdown(2));
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    probability: f64,
    label: Label,
    tokens: usize,
    truncated: bool,
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path, text: &str) -> Result<()> {
    announce_seed(cfg);
    let (params, model) = load_checkpoint(checkpoint)?;
    let vocab = load_vocab(cfg)?;
    if vocab.len() != model.vocab_size {
        bail!(
            "vocabulary has {} tokens but the checkpoint was trained with {}",
            vocab.len(),
            model.vocab_size
        );
    }
    let enc = cfg.hyper()?.encode_config(model.max_len);
    let seq = tokenizer::encode(text, &vocab, &enc);
    let set = EncodedSet::from_rows(model.max_len, vec![(seq.ids.clone(), Label::Granted)]);
    let p = experiment::predict_probabilities(&params, &model, &set)?[0];
    let label = if p >= experiment::THRESHOLD { Label::Dismissed } else { Label::Granted };
    let pred = Prediction {
        probability: p as f64,
        label,
        tokens: seq.real_length,
        truncated: seq.truncated,
    };
    println!("{}", serde_json::to_string(&pred)?);
    Ok(())
}

fn collect_reports(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() {
                collect_reports(&e, found)?;
            } else if e.file_name().is_some_and(|n| n == "report.json") {
                found.push(e);
            }
        }
        Ok(())
    } else if path.is_file() {
        found.push(path.to_path_buf());
        Ok(())
    } else {
        bail!("{} does not exist", path.display())
    }
}

pub fn report(paths: &[PathBuf], out: Option<&Path>, format: &str) -> Result<()> {
    let mut files = Vec::new();
    for p in paths {
        collect_reports(p, &mut files)?;
    }
    let results = files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            serde_json::from_str::<RunResult>(&text).with_context(|| format!("parsing {}", f.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = district_report(&results);
    let mut stdout = io::stdout().lock();
    match format {
        "md" | "markdown" => stdout.write_all(table.to_markdown().as_bytes())?,
        "csv" => table.write_csv(&mut stdout)?,
        "latex" | "tex" => stdout.write_all(table.to_latex().as_bytes())?,
        other => bail!("unknown table format {other:?} (expected md, csv or latex)"),
    }
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        write_tables(&results, out)?;
    }
    Ok(())
}
