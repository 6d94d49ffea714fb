//! Bail-plea outcome prediction from district-court case text.
//!
//! The crate covers the whole pipeline:
//!
//! * [`corpus`]: reading case records, per-district inventories and label counts.
//! * [`sanitize`]: the decision/bail-amount consistency sieve and the seeded train/test split.
//! * [`tokenizer`]: WordPiece encoding against an external vocabulary file.
//! * [`nn`]: a small hand-written engine for the 1-D CNN classifier, with Adam and checkpoints.
//! * [`metrics`]: confusion matrices and precision/recall/F1 reporting.
//! * [`experiment`]: training, evaluation and district-table reporting for the
//!   pooled and per-district experiment shapes.

pub mod corpus;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sanitize;
pub mod tokenizer;

pub use corpus::{CaseRecord, Decision};
pub use metrics::{ConfusionMatrix2, EvalReport};
pub use sanitize::{CleanCase, Label};
