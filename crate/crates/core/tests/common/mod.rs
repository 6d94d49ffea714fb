//! Independent oracles and synthetic data shared by the integration tests.
#![allow(dead_code)]

use bailcnn::corpus::{CaseRecord, Decision};
use bailcnn::nn::model::{forward, Mode, ModelConfig, Parameters};
use bailcnn::nn::ops;
use bailcnn::sanitize::DropRule;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- gradients

/// Mean BCE of eval-mode outputs, computed from scratch for every call.
pub fn loss_f64(params: &Parameters<f64>, config: &ModelConfig, ids: &[u32], y: &[f64]) -> (f64, u64) {
    let pass = forward(params, config, ids, Mode::Eval).unwrap();
    (ops::bce_loss(pass.probabilities(), y), pass.branch_signature())
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: &'static str,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`; exact agreement (including 0 vs 0) is 0.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    let d = (a - n).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(n.abs()).max(floor)
    }
}

/// Compares analytic gradients with central differences, coordinate by
/// coordinate. Per tensor it probes the `top` largest analytic entries plus
/// `random` uniformly drawn ones. A probe whose +h or -h point lands on a
/// different relu/pool branch than the base point straddles a kink, where the
/// derivative is undefined; such probes are counted and skipped.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    params: &Parameters<f64>,
    config: &ModelConfig,
    ids: &[u32],
    y: &[f64],
    analytic: &Parameters<f64>,
    h: f64,
    top: usize,
    random: usize,
    seed: u64,
) -> Vec<TensorCheck> {
    let (_, base_sig) = loss_f64(params, config, ids, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut out = Vec::new();
    for (ti, (name, grad)) in analytic.named().enumerate() {
        let g = grad.data();
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g[b].abs().partial_cmp(&g[a].abs()).unwrap());
        let mut coords: Vec<usize> = order.into_iter().take(top).collect();
        for _ in 0..random {
            coords.push(rng.random_range(0..g.len()));
        }
        let mut check = TensorCheck {
            name,
            checked: 0,
            skipped_kinks: 0,
            max_rel_err: 0.0,
        };
        for &j in &coords {
            let orig = work.tensors()[ti].data()[j];
            work.tensors_mut()[ti].data_mut()[j] = orig + h;
            let (lp, sp) = loss_f64(&work, config, ids, y);
            work.tensors_mut()[ti].data_mut()[j] = orig - h;
            let (lm, sm) = loss_f64(&work, config, ids, y);
            work.tensors_mut()[ti].data_mut()[j] = orig;
            if sp != base_sig || sm != base_sig {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            check.checked += 1;
            check.max_rel_err = check.max_rel_err.max(rel_err(g[j], numeric, 1e-6));
        }
        out.push(check);
    }
    out
}

/// Random ids in `0..vocab` and alternating labels.
pub fn random_batch(batch: usize, len: usize, vocab: u32, seed: u64) -> (Vec<u32>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let ids = (0..batch * len).map(|_| rng.random_range(0..vocab)).collect();
    let y = (0..batch).map(|i| (i % 2) as f64).collect();
    (ids, y)
}

// ---------------------------------------------------------------- wordpiece

/// Greedy longest-match WordPiece written directly from its definition over a
/// plain token list: at each position, try every remaining length from the
/// longest down and take the first that is listed (with `##` after the first
/// piece). Any dead end or an over-long word yields `[UNK]`.
pub fn wordpiece_oracle(vocab: &[&str], word: &str, max_chars: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return vec![];
    }
    if chars.len() > max_chars {
        return vec!["[UNK]".into()];
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut best = None;
        for j in (i + 1..=chars.len()).rev() {
            let body: String = chars[i..j].iter().collect();
            let piece = if i == 0 { body } else { format!("##{body}") };
            if vocab.iter().any(|v| *v == piece) {
                best = Some((piece, j));
                break;
            }
        }
        match best {
            Some((p, j)) => {
                out.push(p);
                i = j;
            }
            None => return vec!["[UNK]".into()],
        }
    }
    out
}

pub struct WordPieceFixture {
    pub vocab: &'static [&'static str],
    pub word: &'static str,
    pub max_chars: usize,
    pub expected: &'static [&'static str],
}

const V1: &[&str] = &["[PAD]", "[UNK]", "un", "##aff", "##able", "aff", "able", "##a", "##b", "a", "b"];
const V2: &[&str] = &["[PAD]", "[UNK]", "bail", "##able", "##s", "grant", "##ed", "dis", "##miss", "##al"];
const V3: &[&str] = &["[PAD]", "[UNK]", "जम", "##ान", "##त", "ज", "##म", "जमानत", "।"];
const V4: &[&str] = &["[PAD]", "[UNK]", "abc", "ab", "##c", "##cd", "##d", "a", "##bcd"];

/// Hand-built cases: multi-piece, exact match, `[UNK]`, over-length,
/// dead ends after a greedy choice, and non-Latin scripts.
pub const WORDPIECE_FIXTURES: [WordPieceFixture; 20] = [
    WordPieceFixture { vocab: V1, word: "unaffable", max_chars: 100, expected: &["un", "##aff", "##able"] },
    WordPieceFixture { vocab: V1, word: "able", max_chars: 100, expected: &["able"] },
    WordPieceFixture { vocab: V1, word: "aff", max_chars: 100, expected: &["aff"] },
    WordPieceFixture { vocab: V1, word: "ab", max_chars: 100, expected: &["a", "##b"] },
    WordPieceFixture { vocab: V1, word: "abba", max_chars: 100, expected: &["a", "##b", "##b", "##a"] },
    WordPieceFixture { vocab: V1, word: "xyz", max_chars: 100, expected: &["[UNK]"] },
    WordPieceFixture { vocab: V1, word: "unx", max_chars: 100, expected: &["[UNK]"] },
    WordPieceFixture { vocab: V1, word: "unaffable", max_chars: 8, expected: &["[UNK]"] },
    WordPieceFixture { vocab: V1, word: "unaffable", max_chars: 9, expected: &["un", "##aff", "##able"] },
    WordPieceFixture { vocab: V2, word: "bailable", max_chars: 100, expected: &["bail", "##able"] },
    WordPieceFixture { vocab: V2, word: "granted", max_chars: 100, expected: &["grant", "##ed"] },
    WordPieceFixture { vocab: V2, word: "dismissed", max_chars: 100, expected: &["dis", "##miss", "##ed"] },
    WordPieceFixture { vocab: V2, word: "dismissal", max_chars: 100, expected: &["dis", "##miss", "##al"] },
    WordPieceFixture { vocab: V2, word: "bails", max_chars: 100, expected: &["bail", "##s"] },
    WordPieceFixture { vocab: V2, word: "granting", max_chars: 100, expected: &["[UNK]"] },
    WordPieceFixture { vocab: V3, word: "जमानत", max_chars: 100, expected: &["जमानत"] },
    WordPieceFixture { vocab: V3, word: "जमान", max_chars: 100, expected: &["जम", "##ान"] },
    WordPieceFixture { vocab: V3, word: "।", max_chars: 100, expected: &["।"] },
    // Greedy takes "abc" first. Without "##d" it dead-ends, even though
    // "ab" + "##cd" would have covered the word.
    WordPieceFixture { vocab: V4, word: "abcd", max_chars: 100, expected: &["abc", "##d"] },
    WordPieceFixture { vocab: &["[PAD]", "[UNK]", "abc", "ab", "##cd"], word: "abcd", max_chars: 100, expected: &["[UNK]"] },
];

// ---------------------------------------------------------------- corpora

pub fn record(case_id: &str, district: &str, decision: Decision, amount: i64, text: &str) -> CaseRecord {
    CaseRecord {
        case_id: case_id.into(),
        district: district.into(),
        decision_raw: decision,
        bail_amount: amount,
        text: text.into(),
        source_path: String::new(),
    }
}

/// A 1000-record corpus in which exactly the returned case ids violate one of
/// the three decision/amount rules (46, 46 and 45 of them). Every other
/// record is clean.
pub fn planted_corpus(seed: u64) -> (Vec<CaseRecord>, Vec<(String, DropRule)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds: Vec<Option<DropRule>> = Vec::with_capacity(1000);
    kinds.extend(std::iter::repeat_n(Some(DropRule::DontKnow), 46));
    kinds.extend(std::iter::repeat_n(Some(DropRule::DismissedWithAmount), 46));
    kinds.extend(std::iter::repeat_n(Some(DropRule::GrantedWithoutAmount), 45));
    kinds.resize(1000, None);
    for i in (1..kinds.len()).rev() {
        let j = rng.random_range(0..=i);
        kinds.swap(i, j);
    }
    let districts = ["Agra", "Basti", "Ballia", "Sitapur"];
    let mut records = Vec::new();
    let mut planted = Vec::new();
    for (i, kind) in kinds.into_iter().enumerate() {
        let id = format!("case-{i:04}");
        let district = districts[i % districts.len()];
        let text = format!("आवेदक की जमानत याचिका संख्या {i}");
        let r = match kind {
            Some(DropRule::DontKnow) => {
                let amount = [-1, 0, 25_000][rng.random_range(0..3)];
                record(&id, district, Decision::DontKnow, amount, &text)
            }
            Some(DropRule::DismissedWithAmount) => {
                record(&id, district, Decision::Dismissed, rng.random_range(1..200_000), &text)
            }
            Some(DropRule::GrantedWithoutAmount) => {
                let amount = if rng.random_bool(0.5) { -1 } else { 0 };
                record(&id, district, Decision::Granted, amount, &text)
            }
            _ => {
                if rng.random_bool(0.5) {
                    record(&id, district, Decision::Granted, rng.random_range(1..200_000), &text)
                } else {
                    let amount = if rng.random_bool(0.5) { -1 } else { 0 };
                    record(&id, district, Decision::Dismissed, amount, &text)
                }
            }
        };
        if let Some(rule) = kind {
            planted.push((id, rule));
        }
        records.push(r);
    }
    (records, planted)
}

/// Rule-by-rule scan, each rule checked on its own and then prioritized.
pub fn sieve_oracle(records: &[CaseRecord]) -> Vec<(String, DropRule)> {
    let no_amount = |a: i64| a == -1 || a == 0;
    records
        .iter()
        .filter_map(|r| {
            let dont_know = r.decision_raw == Decision::DontKnow;
            let dismissed_amt = r.decision_raw == Decision::Dismissed && !no_amount(r.bail_amount);
            let granted_none = r.decision_raw == Decision::Granted && no_amount(r.bail_amount);
            let empty = r.text.chars().all(char::is_whitespace);
            let rule = if dont_know {
                DropRule::DontKnow
            } else if dismissed_amt {
                DropRule::DismissedWithAmount
            } else if granted_none {
                DropRule::GrantedWithoutAmount
            } else if empty {
                DropRule::EmptyText
            } else {
                return None;
            };
            Some((r.case_id.clone(), rule))
        })
        .collect()
}

/// Label-discriminating toy corpus: class 0 documents contain tokens from
/// `a_tokens`, class 1 from `b_tokens`, both mixed into shared filler.
pub fn separable_rows(n: usize, len: usize, seed: u64) -> Vec<(Vec<u32>, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_tokens = 2u32..8;
    let b_tokens = 8u32..14;
    let filler = 14u32..50;
    (0..n)
        .map(|i| {
            let label = (i % 2) as u32;
            let real = rng.random_range(len / 2..=len);
            let mut row: Vec<u32> = (0..real)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        if label == 0 {
                            rng.random_range(a_tokens.clone())
                        } else {
                            rng.random_range(b_tokens.clone())
                        }
                    } else {
                        rng.random_range(filler.clone())
                    }
                })
                .collect();
            row.resize(len, 0);
            (row, label)
        })
        .collect()
}

/// Corpus of `districts` districts whose documents read like the toy rows,
/// for end-to-end pipeline runs. Returns records and a matching vocabulary.
pub fn synthetic_corpus(districts: &[(&str, usize)], seed: u64) -> (Vec<CaseRecord>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let granted_words = ["जमानत", "स्वीकार", "रिहा", "मुचलका"];
    let dismissed_words = ["खारिज", "अस्वीकार", "गंभीर", "अपराध"];
    let filler = ["आवेदक", "न्यायालय", "पुलिस", "थाना", "धारा", "अभियुक्त", "याचिका", "सुनवाई"];
    let mut records = Vec::new();
    for (d, &(name, count)) in districts.iter().enumerate() {
        for i in 0..count {
            let granted = rng.random_bool(0.45);
            let words = if granted { &granted_words } else { &dismissed_words };
            let n = rng.random_range(6..20);
            let mut text = Vec::new();
            for _ in 0..n {
                if rng.random_bool(0.35) {
                    text.push(words[rng.random_range(0..4)]);
                } else {
                    text.push(filler[rng.random_range(0..filler.len())]);
                }
            }
            let body = text.join(" ") + " ।";
            let (decision, amount) = if granted {
                (Decision::Granted, rng.random_range(10..100) * 1000)
            } else {
                (Decision::Dismissed, -1)
            };
            records.push(record(&format!("d{d}-{i}"), name, decision, amount, &body));
        }
    }
    let mut vocab: Vec<String> = ["[PAD]", "[UNK]", "।"].iter().map(|s| s.to_string()).collect();
    vocab.extend(granted_words.iter().chain(&dismissed_words).chain(&filler).map(|s| s.to_string()));
    (records, vocab)
}
