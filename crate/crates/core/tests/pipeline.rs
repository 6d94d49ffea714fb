mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use bailcnn::corpus::{select_districts, DistrictInventory, SelectionKey};
use bailcnn::experiment::{
    district_report, run_experiment, run_per_district, write_run_artifacts, DistrictGroup, ExperimentError,
    ExperimentMode, ExperimentPlan, Hyper,
};
use bailcnn::nn::load_checkpoint;
use bailcnn::sanitize::{read_manifest, Partition};
use bailcnn::tokenizer::Vocabulary;
use common::*;

const DISTRICTS: [(&str, usize); 12] = [
    ("Agra", 61),
    ("Allahabad", 48),
    ("Ballia", 17),
    ("Balrampur", 19),
    ("Bareilly", 44),
    ("Basti", 12),
    ("Bhadohi", 14),
    ("Deoria", 23),
    ("Ghaziabad", 55),
    ("Hathras", 13),
    ("Jalaun", 27),
    ("Lalitpur", 21),
];

fn quick(epochs: usize) -> Hyper {
    Hyper {
        epochs,
        max_len_cap: 32,
        ..Hyper::default()
    }
}

fn fixture() -> (Vec<bailcnn::CaseRecord>, Vocabulary) {
    let (mut records, vocab) = synthetic_corpus(&DISTRICTS, 3);
    // A few records every run must drop.
    records.push(record("bad-1", "Agra", bailcnn::Decision::DontKnow, -1, "x"));
    records.push(record("bad-2", "Agra", bailcnn::Decision::Granted, 0, "x"));
    records.push(record("bad-3", "Basti", bailcnn::Decision::Dismissed, 500, "x"));
    records.push(record("bad-4", "Basti", bailcnn::Decision::Granted, 500, "   "));
    (records, Vocabulary::from_tokens(vocab).unwrap())
}

#[test]
fn pooled_high_trains_on_exactly_the_selected_pool() {
    let (records, vocab) = fixture();
    let inv = DistrictInventory::from_records(&records);
    let sel = select_districts(&inv, 3, 3, SelectionKey::CaseCount).unwrap();
    assert_eq!(sel.high, ["Agra", "Ghaziabad", "Allahabad"]);
    // Inventory counts raw records: Basti's two bad rows lift it to 14,
    // tying Bhadohi, and ties resolve by name.
    assert_eq!(sel.low, ["Hathras", "Basti", "Bhadohi"]);

    let plan = ExperimentPlan {
        mode: ExperimentMode::PooledHigh,
        districts: sel.high.clone(),
        hyper: quick(1),
    };
    let out = run_experiment(&plan, &records, &vocab).unwrap();
    // Independent recount: clean records of the chosen districts, split once over the pool.
    let pool: usize = records
        .iter()
        .filter(|r| sel.high.contains(&r.district))
        .filter(|r| sieve_oracle(std::slice::from_ref(r)).is_empty())
        .count();
    assert_eq!(pool, 61 + 55 + 48);
    assert_eq!(out.result.train_size, pool * 4 / 5);
    assert_eq!(out.result.test_size, pool - pool * 4 / 5);
    assert_eq!(out.result.report.confusion.total() as usize, out.result.test_size);
    assert_eq!(out.result.drops.values().sum::<usize>(), 2);
    for c in out.split.train.iter().chain(&out.split.test) {
        assert!(sel.high.contains(&c.district), "{} leaked into the pool", c.district);
    }
}

#[test]
fn pooled_split_floors_over_the_pool_not_per_district() {
    // 13 + 12 cases: per-district tests would be 3 + 3 = 6, pooled is 25 - 20 = 5.
    let (records, vocab) = synthetic_corpus(&[("A", 13), ("B", 12)], 21);
    let vocab = Vocabulary::from_tokens(vocab).unwrap();
    let plan = ExperimentPlan {
        mode: ExperimentMode::PooledAll,
        districts: vec!["A".into(), "B".into()],
        hyper: quick(1),
    };
    let out = run_experiment(&plan, &records, &vocab).unwrap();
    assert_eq!((out.result.train_size, out.result.test_size), (20, 5));
}

#[test]
fn artifacts_keep_test_cases_out_of_training() {
    let (records, vocab) = fixture();
    let plan = ExperimentPlan {
        mode: ExperimentMode::PooledAll,
        districts: DISTRICTS.iter().map(|(d, _)| d.to_string()).collect(),
        hyper: quick(1),
    };
    let mut out = run_experiment(&plan, &records, &vocab).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_artifacts(&mut out, dir.path()).unwrap();

    let manifest = read_manifest(fs::File::open(dir.path().join("split.csv")).unwrap()).unwrap();
    let train: BTreeSet<&str> = manifest
        .iter()
        .filter(|(_, p)| *p == Partition::Train)
        .map(|(id, _)| id.as_str())
        .collect();
    let test: BTreeSet<&str> = manifest
        .iter()
        .filter(|(_, p)| *p == Partition::Test)
        .map(|(id, _)| id.as_str())
        .collect();
    assert!(train.is_disjoint(&test));
    assert_eq!(train.len(), out.result.train_size);
    assert_eq!(test.len(), out.result.test_size);
    assert!(!manifest.iter().any(|(id, _)| id.starts_with("bad-")));

    let (params, config) = load_checkpoint(&dir.path().join("model.ckpt")).unwrap();
    assert_eq!(params, out.params);
    assert_eq!(config, out.model_config);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["test_size"], out.result.test_size);
    assert_eq!(fs::read_to_string(dir.path().join("drops.jsonl")).unwrap().lines().count(), 4);
    let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn per_district_runs_feed_the_table() {
    let (records, vocab) = fixture();
    let groups: BTreeMap<String, DistrictGroup> = [
        ("Agra".to_string(), DistrictGroup::High),
        ("Basti".to_string(), DistrictGroup::Low),
    ]
    .into();
    let plan = ExperimentPlan {
        mode: ExperimentMode::PerDistrict,
        districts: vec!["Agra".into(), "Basti".into()],
        hyper: quick(1),
    };
    let outs = run_per_district(&plan, &records, &vocab, &groups).unwrap();
    assert_eq!(outs.len(), 2);
    assert_eq!(outs[0].result.name, "Agra");
    assert_eq!(outs[1].result.test_size, 12 - 12 * 4 / 5);
    let results: Vec<_> = outs.iter().map(|o| o.result.clone()).collect();
    let table = district_report(&results);
    let md = table.to_markdown();
    let high = md.find("Highest number of case documents").unwrap();
    let low = md.find("Lowest number of case documents").unwrap();
    let agra = md.find("| Agra |").unwrap();
    let basti = md.find("| Basti |").unwrap();
    assert!(high < agra && agra < low && low < basti);
    assert!(table.to_latex().contains("Agra & "));
}

#[test]
fn too_short_documents_are_a_model_error() {
    let (records, vocab) = fixture();
    let plan = ExperimentPlan {
        mode: ExperimentMode::PooledAll,
        districts: vec!["Agra".into()],
        hyper: Hyper {
            max_len_cap: 10,
            ..quick(1)
        },
    };
    match run_experiment(&plan, &records, &vocab) {
        Err(ExperimentError::Model(e)) => assert!(e.to_string().contains("16"), "{e}"),
        other => panic!("expected a model error, got {:?}", other.map(|o| o.result)),
    }
}

#[test]
fn different_seeds_give_different_models() {
    let (records, vocab) = fixture();
    let mut plan = ExperimentPlan {
        mode: ExperimentMode::PooledAll,
        districts: vec!["Agra".into()],
        hyper: quick(1),
    };
    let a = run_experiment(&plan, &records, &vocab).unwrap();
    plan.hyper.seed = 43;
    let b = run_experiment(&plan, &records, &vocab).unwrap();
    assert_ne!(a.params, b.params);
}
