//! Task datasets: readers, splits and reproducible sampling.

mod columns;
mod conllu;
mod lexicon;
mod manifest;
mod sampling;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::labelspace::Task;
use crate::labelspace::{bio_classes, canonical_classes, BioTag};

pub use columns::{parse_conll_columns, write_conll_columns};
pub use conllu::{parse_conllu, write_conllu};
pub use lexicon::{majority_tag, WordLexicon};
pub use manifest::{DatasetFormat, DatasetManifest};
pub use sampling::{sample_demonstrations, sample_eval_subset, DEFAULT_MAX_ATTEMPTS};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no sentences")]
    Empty,
    #[error("input is not valid UTF-8 (byte {0})")]
    Utf8(usize),
    #[error("sentence `{0}` appears in both splits")]
    OverlappingSplits(String),
    #[error("duplicate sentence id `{0}`")]
    DuplicateId(String),
    #[error("invalid sentence `{id}`: {message}")]
    InvalidSentence { id: String, message: String },
    #[error("requested {requested} sentences but the {split} split has {available}")]
    SampleTooLarge {
        requested: usize,
        available: usize,
        split: &'static str,
    },
    #[error("max_attempts must be at least 1")]
    NoAttempts,
    #[error("dataset manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One sentence with its gold tagging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub sentence_id: String,
    pub words: Vec<String>,
    pub gold_tags: Vec<String>,
}

impl TaggedSentence {
    pub fn new(
        sentence_id: impl Into<String>,
        words: Vec<String>,
        gold_tags: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let sentence_id = sentence_id.into();
        if words.is_empty() {
            return Err(CorpusError::InvalidSentence {
                id: sentence_id,
                message: "no tokens".into(),
            });
        }
        if words.len() != gold_tags.len() {
            return Err(CorpusError::InvalidSentence {
                id: sentence_id,
                message: format!("{} words but {} tags", words.len(), gold_tags.len()),
            });
        }
        Ok(Self {
            sentence_id,
            words,
            gold_tags,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Train and test splits for one task plus the label inventory they use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task: Task,
    pub train: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
    pub label_inventory: Vec<String>,
}

impl TaskDataset {
    /// Checks split disjointness and derives the label inventory.
    pub fn new(
        task: Task,
        train: Vec<TaggedSentence>,
        test: Vec<TaggedSentence>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for s in &train {
            if !seen.insert(s.sentence_id.as_str()) {
                return Err(CorpusError::DuplicateId(s.sentence_id.clone()));
            }
        }
        let mut test_ids = HashSet::new();
        for s in &test {
            if seen.contains(s.sentence_id.as_str()) {
                return Err(CorpusError::OverlappingSplits(s.sentence_id.clone()));
            }
            if !test_ids.insert(s.sentence_id.as_str()) {
                return Err(CorpusError::DuplicateId(s.sentence_id.clone()));
            }
        }
        let label_inventory = label_inventory(task, train.iter().chain(&test));
        Ok(Self {
            task,
            train,
            test,
            label_inventory,
        })
    }

    pub fn label_index(&self, class: &str) -> Option<usize> {
        self.label_inventory.iter().position(|c| c == class)
    }
}

/// Observed tags ordered by the task's canonical listing.
///
/// POS and NER follow the built-in class lists, with unknown tags appended in
/// first-occurrence order. Chunk types come from the data: `O`, then `B-T`,
/// `I-T` per type in first-occurrence order. Only observed tags are kept.
pub fn label_inventory<'a>(
    task: Task,
    sentences: impl IntoIterator<Item = &'a TaggedSentence>,
) -> Vec<String> {
    let mut observed: Vec<String> = Vec::new();
    let mut observed_set = HashSet::new();
    for s in sentences {
        for t in &s.gold_tags {
            if observed_set.insert(t.clone()) {
                observed.push(t.clone());
            }
        }
    }
    let canonical = match task {
        Task::Pos | Task::Ner => canonical_classes(task),
        Task::Chunk => {
            let mut types: Vec<&str> = Vec::new();
            for t in &observed {
                if let Some(ty) = BioTag::parse(t).and_then(|b| b.entity_type()) {
                    if !types.contains(&ty) {
                        types.push(ty);
                    }
                }
            }
            bio_classes(&types)
        }
    };
    let mut inventory: Vec<String> = canonical
        .into_iter()
        .filter(|c| observed_set.contains(c))
        .collect();
    for t in observed {
        if !inventory.contains(&t) {
            inventory.push(t);
        }
    }
    inventory
}

/// `k` training sentences used as in-context demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub sentences: Vec<TaggedSentence>,
    pub k: usize,
    pub seed: u64,
    pub covered_labels: BTreeSet<String>,
}

impl DemonstrationSet {
    pub fn empty(seed: u64) -> Self {
        Self {
            sentences: Vec::new(),
            k: 0,
            seed,
            covered_labels: BTreeSet::new(),
        }
    }

    pub fn from_sentences(sentences: Vec<TaggedSentence>, seed: u64) -> Self {
        let covered_labels = sentences
            .iter()
            .flat_map(|s| s.gold_tags.iter().cloned())
            .collect();
        Self {
            k: sentences.len(),
            sentences,
            seed,
            covered_labels,
        }
    }

    pub fn sentence_ids(&self) -> Vec<&str> {
        self.sentences
            .iter()
            .map(|s| s.sentence_id.as_str())
            .collect()
    }
}

pub(crate) fn decode_utf8(bytes: Vec<u8>) -> Result<String, CorpusError> {
    String::from_utf8(bytes).map_err(|e| CorpusError::Utf8(e.utf8_error().valid_up_to()))
}
