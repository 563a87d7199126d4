//! Seeded synthetic tagging corpora with a known word/class structure.
//!
//! Every class owns a handful of private words; a small set of shared words
//! is sprinkled across classes so the per-word majority is not the gold tag
//! everywhere. Span tasks get valid BIO sequences. Used by tests, the
//! acceptance harness and CLI smoke runs when real treebanks are absent.

use crate::corpus::{TaggedSentence, TaskDataset};
use crate::labelspace::{canonical_classes, BioTag, Task, CHUNK_TYPES, NER_TYPES};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub words_per_class: usize,
    pub shared_words: usize,
    /// Probability that a token uses a shared word.
    pub ambiguity: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl SyntheticConfig {
    pub fn new(n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            n_train,
            n_test,
            seed,
            words_per_class: 6,
            shared_words: 4,
            ambiguity: 0.1,
            min_len: 4,
            max_len: 14,
        }
    }
}

fn word_for(rng: &mut SeededRng, class: &str, cfg: &SyntheticConfig) -> String {
    let roll = rng.next_u64() as f64 / u64::MAX as f64;
    if cfg.shared_words > 0 && roll < cfg.ambiguity {
        format!("shared{}", rng.below(cfg.shared_words as u64))
    } else {
        let stem: String = class
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        format!("{stem}{}", rng.below(cfg.words_per_class.max(1) as u64))
    }
}

fn tags_for(rng: &mut SeededRng, task: Task, classes: &[String], len: usize) -> Vec<String> {
    if !task.is_bio() {
        return (0..len)
            .map(|_| classes[rng.below(classes.len() as u64) as usize].clone())
            .collect();
    }
    let types: &[&str] = if task == Task::Ner { &NER_TYPES } else { &CHUNK_TYPES };
    let mut tags = Vec::with_capacity(len);
    while tags.len() < len {
        if rng.below(2) == 0 {
            tags.push("O".to_string());
            continue;
        }
        let t = types[rng.below(types.len() as u64) as usize];
        let span = 1 + rng.below(3) as usize;
        for i in 0..span.min(len - tags.len()) {
            tags.push(if i == 0 { format!("B-{t}") } else { format!("I-{t}") });
        }
    }
    tags
}

fn sentence(rng: &mut SeededRng, task: Task, classes: &[String], id: String, cfg: &SyntheticConfig) -> TaggedSentence {
    let span = cfg.max_len.saturating_sub(cfg.min_len) as u64 + 1;
    let len = cfg.min_len.max(1) + rng.below(span) as usize;
    let tags = tags_for(rng, task, classes, len);
    let words = tags.iter().map(|t| word_for(rng, t, cfg)).collect();
    TaggedSentence::new(id, words, tags).expect("lengths agree")
}

/// A dataset whose training split contains every canonical class of `task`.
pub fn synthetic_dataset(task: Task, cfg: &SyntheticConfig) -> TaskDataset {
    let classes = canonical_classes(task);
    let mut rng = SeededRng::new(cfg.seed);
    let mut train: Vec<TaggedSentence> = (0..cfg.n_train)
        .map(|i| sentence(&mut rng, task, &classes, format!("train-{i}"), cfg))
        .collect();
    // One sentence listing every class guarantees full coverage.
    let cover: Vec<String> = if task.is_bio() {
        classes
            .iter()
            .filter(|c| !matches!(BioTag::parse(c), Some(BioTag::Inside(_))))
            .flat_map(|c| match BioTag::parse(c) {
                Some(BioTag::Begin(t)) => vec![c.clone(), format!("I-{t}")],
                _ => vec![c.clone()],
            })
            .collect()
    } else {
        classes.clone()
    };
    let words = cover.iter().map(|t| word_for(&mut rng, t, cfg)).collect();
    train.push(TaggedSentence::new("train-cover", words, cover).expect("lengths agree"));
    let test = (0..cfg.n_test)
        .map(|i| sentence(&mut rng, task, &classes, format!("test-{i}"), cfg))
        .collect();
    TaskDataset::new(task, train, test).expect("ids are unique")
}
