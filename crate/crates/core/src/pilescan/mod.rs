//! Streaming corpus scans: how often task labels appear in a pretraining
//! corpus, how many of those hits sit in UD-shaped lines, whether test
//! sentences leak into the corpus, and a reproducible sample of hit contexts
//! for manual review.
//!
//! POS labels are searched tab-anchored (`"\tNOUN\t"`), the way they appear
//! in a CoNLL-U UPOS column. BIO labels are searched as whitespace-delimited
//! tokens, the way they appear in CoNLL-2000/2003 column files.

mod attribution;
mod leakage;
mod scan;
mod shards;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::Task;

pub use attribution::{treebank_attribution, AttributionCount, AttributionReport};
pub use leakage::{leakage_check, leaked_sentence_ids, Detector, LeakageConfig, LeakageMatch, LeakageReport};
pub use scan::{scan, ContextSample, LabelStats, ScanConfig, ScanReport, ShardError, UdSentenceHits};
pub use shards::{for_each_document, is_jsonl, list_shards, Document, ShardStats, DEFAULT_CHUNK_BYTES};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid pattern: {0}")]
    Pattern(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("unknown pattern mode `{0}`")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternMode {
    TabAnchored,
    SpaceToken,
}

impl PatternMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternMode::TabAnchored => "tab_anchored",
            PatternMode::SpaceToken => "space_token",
        }
    }

    pub fn for_task(task: Task) -> Self {
        if task.is_bio() {
            PatternMode::SpaceToken
        } else {
            PatternMode::TabAnchored
        }
    }
}

impl fmt::Display for PatternMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternMode {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tab_anchored" | "tab" => Ok(PatternMode::TabAnchored),
            "space_token" | "token" => Ok(PatternMode::SpaceToken),
            other => Err(ScanError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScanPattern {
    pub label: String,
    pub mode: PatternMode,
}

impl ScanPattern {
    pub fn new(label: impl Into<String>, mode: PatternMode) -> Self {
        Self {
            label: label.into(),
            mode,
        }
    }

    pub fn tab(label: impl Into<String>) -> Self {
        Self::new(label, PatternMode::TabAnchored)
    }

    pub fn token(label: impl Into<String>) -> Self {
        Self::new(label, PatternMode::SpaceToken)
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        if self.label.is_empty() {
            return Err(ScanError::Pattern("empty label".into()));
        }
        if self.label.chars().any(char::is_whitespace) {
            return Err(ScanError::Pattern(format!("whitespace in label `{}`", self.label)));
        }
        Ok(())
    }

    /// Bytes searched for. Token patterns get their boundaries checked
    /// after matching.
    pub fn needle(&self) -> String {
        match self.mode {
            PatternMode::TabAnchored => format!("\t{}\t", self.label),
            PatternMode::SpaceToken => self.label.clone(),
        }
    }
}

/// One pattern per class, skipping single-character labels such as `X`
/// and `O`, which match far too much text to be informative.
pub fn patterns_for_task<S: AsRef<str>>(task: Task, classes: &[S]) -> Vec<ScanPattern> {
    let mode = PatternMode::for_task(task);
    classes
        .iter()
        .map(AsRef::as_ref)
        .filter(|c| c.chars().count() > 1)
        .map(|c| ScanPattern::new(c, mode))
        .collect()
}
