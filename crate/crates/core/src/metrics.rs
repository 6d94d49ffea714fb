//! Binary confusion matrices and the derived precision/recall/F1 tables.
//!
//! Rows are the true class and columns the predicted class, both ordered
//! `[Granted, Dismissed]`. Predictions and truths are encoded 0 = Granted,
//! 1 = Dismissed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sanitize::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({pred}) and truths ({truth}) differ in length")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no samples")]
    Empty,
    #[error("class index {0} is not 0 or 1")]
    BadClass(u8),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix2 {
    /// `counts[true][predicted]`
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix2 {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix2 { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn row_sum(&self, truth: Label) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn column_sum(&self, pred: Label) -> u64 {
        self.counts[0][pred.index()] + self.counts[1][pred.index()]
    }

    pub fn add(&mut self, truth: Label, pred: Label) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    /// Relabels classes: Granted becomes Dismissed and vice versa.
    pub fn swapped(&self) -> Self {
        let c = self.counts;
        ConfusionMatrix2 {
            counts: [[c[1][1], c[1][0]], [c[0][1], c[0][0]]],
        }
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionMatrix2, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix2::default();
    for (&p, &t) in pred.iter().zip(truth) {
        let p = Label::from_index(p as usize).ok_or(MetricsError::BadClass(p))?;
        let t = Label::from_index(t as usize).ok_or(MetricsError::BadClass(t))?;
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix2,
    pub granted: ClassMetrics,
    pub dismissed: ClassMetrics,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        match label {
            Label::Granted => &self.granted,
            Label::Dismissed => &self.dismissed,
        }
    }

    /// Markdown table in the layout of a published confusion-matrix table:
    /// counts, then precision/recall/F1 per class, then accuracy and macro-F1.
    pub fn to_markdown(&self, places: u32) -> String {
        let r = round_report(self, places);
        let c = self.confusion.counts;
        let fmt = |v: f64| format!("{v:.*}", places as usize);
        let mut s = String::new();
        writeln!(s, "| | Granted | Dismissed |").unwrap();
        writeln!(s, "|---|---|---|").unwrap();
        writeln!(s, "| **Granted** | {} | {} |", c[0][0], c[0][1]).unwrap();
        writeln!(s, "| **Dismissed** | {} | {} |", c[1][0], c[1][1]).unwrap();
        writeln!(s, "| **Precision** | {} | {} |", fmt(r.granted.precision), fmt(r.dismissed.precision)).unwrap();
        writeln!(s, "| **Recall** | {} | {} |", fmt(r.granted.recall), fmt(r.dismissed.recall)).unwrap();
        writeln!(s, "| **F1 Score** | {} | {} |", fmt(r.granted.f1), fmt(r.dismissed.f1)).unwrap();
        writeln!(s, "| **Accuracy** | {} | |", fmt(r.accuracy)).unwrap();
        writeln!(s, "| **Macro F1** | {} | |", fmt(r.macro_f1)).unwrap();
        s
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 per class, accuracy and macro-F1. A 0/0
/// precision or recall is reported as 0.
pub fn compute_metrics(cm: &ConfusionMatrix2) -> Result<EvalReport, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let per = |label: Label| {
        let tp = cm.counts[label.index()][label.index()];
        let precision = ratio(tp, cm.column_sum(label));
        let recall = ratio(tp, cm.row_sum(label));
        ClassMetrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    };
    let granted = per(Label::Granted);
    let dismissed = per(Label::Dismissed);
    Ok(EvalReport {
        confusion: *cm,
        granted,
        dismissed,
        macro_f1: (granted.f1 + dismissed.f1) / 2.0,
        accuracy: ratio(cm.trace(), cm.total()),
    })
}

/// Half-up decimal rounding of the value's shortest decimal representation,
/// so `0.925` rounds to `0.93` even though the nearest double is slightly
/// below it. Ties go away from zero for negative inputs.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let negative = x < 0.0;
    let repr = format!("{}", x.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((repr.as_str(), ""));
    let places = places as usize;
    if frac_part.len() <= places {
        return x;
    }
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(places))
        .map(|b| b - b'0')
        .collect();
    if frac_part.as_bytes()[places] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let mut s = String::with_capacity(digits.len() + 2);
    if negative {
        s.push('-');
    }
    s.extend(digits[..split].iter().map(|d| (b'0' + d) as char));
    if places > 0 {
        s.push('.');
        s.extend(digits[split..].iter().map(|d| (b'0' + d) as char));
    }
    s.parse().expect("digits form a valid float")
}

pub fn round_report(report: &EvalReport, places: u32) -> EvalReport {
    let r = |v: f64| round_half_up(v, places);
    let rc = |c: &ClassMetrics| ClassMetrics {
        precision: r(c.precision),
        recall: r(c.recall),
        f1: r(c.f1),
    };
    EvalReport {
        confusion: report.confusion,
        granted: rc(&report.granted),
        dismissed: rc(&report.dismissed),
        macro_f1: r(report.macro_f1),
        accuracy: r(report.accuracy),
    }
}
