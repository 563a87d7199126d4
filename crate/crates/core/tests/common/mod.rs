#![allow(dead_code)]

pub mod conlleval;

use structprompt::backend::MockLm;
use structprompt::corpus::{TaskDataset, WordLexicon};
use structprompt::labelspace::{original_labels, LabelSet, Task};
use structprompt::synthetic::{synthetic_dataset, SyntheticConfig};

pub fn dataset(task: Task, n_train: usize, n_test: usize, seed: u64) -> TaskDataset {
    synthetic_dataset(task, &SyntheticConfig::new(n_train, n_test, seed))
}

pub fn lexicon_mock(ds: &TaskDataset) -> MockLm {
    MockLm::from_training(&ds.train, original_labels(ds.task))
}

/// What a per-word-majority tagger says: the lexicon entry, or the first
/// class (the mock is uniform on unknown words and ties go to the first).
pub fn lexicon_oracle(lexicon: &WordLexicon, labels: &LabelSet, words: &[String]) -> Vec<String> {
    words
        .iter()
        .map(|w| lexicon.get(w).unwrap_or(labels.class(0)).to_string())
        .collect()
}

pub fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}
