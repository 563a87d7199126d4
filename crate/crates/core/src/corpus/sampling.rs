use std::collections::HashMap;

use super::{CorpusError, DemonstrationSet, TaggedSentence, TaskDataset};
use crate::rng::SeededRng;

pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

/// Draws `k` distinct training sentences, preferring samples that cover the
/// whole label inventory.
///
/// Up to `max_attempts` uniform samples are drawn from one seeded stream; the
/// first with full coverage wins, otherwise the attempt covering the most
/// labels (earliest on ties).
pub fn sample_demonstrations(
    dataset: &TaskDataset,
    k: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<DemonstrationSet, CorpusError> {
    if k > dataset.train.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: k,
            available: dataset.train.len(),
            split: "train",
        });
    }
    if k == 0 {
        return Ok(DemonstrationSet::empty(seed));
    }
    if max_attempts == 0 {
        return Err(CorpusError::NoAttempts);
    }

    let label_ids: HashMap<&str, usize> = dataset
        .label_inventory
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let words = dataset.label_inventory.len().div_ceil(64).max(1);
    let masks: Vec<Vec<u64>> = dataset
        .train
        .iter()
        .map(|s| {
            let mut m = vec![0u64; words];
            for t in &s.gold_tags {
                if let Some(&i) = label_ids.get(t.as_str()) {
                    m[i / 64] |= 1 << (i % 64);
                }
            }
            m
        })
        .collect();
    let full = dataset.label_inventory.len() as u32;

    let mut rng = SeededRng::new(seed);
    let mut best: Option<(u32, Vec<usize>)> = None;
    for _ in 0..max_attempts {
        let picks = rng.sample_indices(dataset.train.len(), k);
        let mut union = vec![0u64; words];
        for &p in &picks {
            for (u, m) in union.iter_mut().zip(&masks[p]) {
                *u |= m;
            }
        }
        let covered: u32 = union.iter().map(|w| w.count_ones()).sum();
        if covered == full {
            best = Some((covered, picks));
            break;
        }
        if best.as_ref().is_none_or(|(c, _)| covered > *c) {
            best = Some((covered, picks));
        }
    }
    let (_, picks) = best.expect("at least one attempt");
    let sentences = picks.into_iter().map(|i| dataset.train[i].clone()).collect();
    Ok(DemonstrationSet::from_sentences(sentences, seed))
}

/// Seeded sample of `n` test sentences without replacement, in sampled order.
pub fn sample_eval_subset(
    dataset: &TaskDataset,
    n: usize,
    seed: u64,
) -> Result<Vec<TaggedSentence>, CorpusError> {
    if n > dataset.test.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: dataset.test.len(),
            split: "test",
        });
    }
    let mut rng = SeededRng::new(seed);
    Ok(rng
        .sample_indices(dataset.test.len(), n)
        .into_iter()
        .map(|i| dataset.test[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;
    use std::collections::HashSet;

    fn sent(id: String, tags: &[&str]) -> TaggedSentence {
        TaggedSentence::new(
            id,
            tags.iter().map(|t| t.to_lowercase()).collect(),
            tags.iter().map(|t| t.to_string()).collect(),
        )
        .unwrap()
    }

    fn toy(n_train: usize, n_test: usize) -> TaskDataset {
        let train = (0..n_train)
            .map(|i| {
                let tags: &[&str] = if i == 0 { &["NOUN", "VERB"] } else { &["NOUN"] };
                sent(format!("tr{i}"), tags)
            })
            .collect();
        let test = (0..n_test)
            .map(|i| sent(format!("te{i}"), &["NOUN"]))
            .collect();
        TaskDataset::new(Task::Pos, train, test).unwrap()
    }

    #[test]
    fn zero_shot_is_empty() {
        let d = sample_demonstrations(&toy(10, 5), 0, 3, 100).unwrap();
        assert_eq!(d.k, 0);
        assert!(d.sentences.is_empty());
        assert!(d.covered_labels.is_empty());
    }

    #[test]
    fn deterministic() {
        let ds = toy(30, 5);
        let a = sample_demonstrations(&ds, 4, 9, 100).unwrap();
        let b = sample_demonstrations(&ds, 4, 9, 100).unwrap();
        assert_eq!(a.sentence_ids(), b.sentence_ids());
        assert_eq!(a.sentences.len(), 4);
    }

    #[test]
    fn k_too_large() {
        assert!(matches!(
            sample_demonstrations(&toy(3, 1), 4, 0, 10),
            Err(CorpusError::SampleTooLarge { .. })
        ));
        assert!(matches!(
            sample_eval_subset(&toy(3, 2), 3, 0),
            Err(CorpusError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn coverage_found_when_possible() {
        // With 3 of 4 sentences drawn, the VERB sentence is hit in most attempts.
        let ds = toy(4, 1);
        for seed in 0..20 {
            let d = sample_demonstrations(&ds, 3, seed, 100).unwrap();
            assert_eq!(d.covered_labels.len(), 2);
        }
    }

    #[test]
    fn eval_subset_is_full_permutation() {
        let ds = toy(2, 25);
        let s = sample_eval_subset(&ds, 25, 1).unwrap();
        let ids: HashSet<_> = s.iter().map(|s| s.sentence_id.clone()).collect();
        assert_eq!(ids.len(), 25);
    }

    #[test]
    fn eval_subset_seeds_differ() {
        let ds = toy(2, 500);
        let a = sample_eval_subset(&ds, 20, 1).unwrap();
        let b = sample_eval_subset(&ds, 20, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, sample_eval_subset(&ds, 20, 1).unwrap());
    }
}
