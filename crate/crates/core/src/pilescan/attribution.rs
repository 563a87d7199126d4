//! Matching UD-format hits back to the treebanks they were copied from.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::scan::UdSentenceHits;
use crate::corpus::TaskDataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionCount {
    pub treebank: String,
    pub split: String,
    /// Distinct corpus sentences attributed here.
    pub sentences: u64,
    /// Label hits inside those sentences, per label.
    pub hits: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttributionReport {
    pub counts: Vec<AttributionCount>,
    pub unattributed_sentences: u64,
    pub unattributed_hits: BTreeMap<String, u64>,
    /// Sentences found in more than one treebank; they count toward each.
    pub ambiguous_sentences: u64,
}

/// Case-folded, trimmed token sequence.
fn normalize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref().trim().to_lowercase())
        .collect::<Vec<_>>()
        .join("\u{1f}")
}

fn add(into: &mut BTreeMap<String, u64>, hits: &BTreeMap<String, u64>) {
    for (l, c) in hits {
        *into.entry(l.clone()).or_default() += c;
    }
}

/// Attributes each hit sentence to every (treebank, split) containing an
/// identical normalized sentence.
pub fn treebank_attribution(sentences: &[UdSentenceHits], refs: &[(String, TaskDataset)]) -> AttributionReport {
    let mut index: HashMap<String, Vec<(usize, &'static str)>> = HashMap::new();
    for (ti, (_, ds)) in refs.iter().enumerate() {
        for (split, list) in [("train", &ds.train), ("test", &ds.test)] {
            for s in list {
                let slot = index.entry(normalize(&s.words)).or_default();
                if !slot.contains(&(ti, split)) {
                    slot.push((ti, split));
                }
            }
        }
    }

    let mut counts: BTreeMap<(usize, &str), AttributionCount> = BTreeMap::new();
    let mut report = AttributionReport::default();
    for s in sentences {
        match index.get(&normalize(&s.tokens)) {
            None => {
                report.unattributed_sentences += 1;
                add(&mut report.unattributed_hits, &s.hits);
            }
            Some(places) => {
                let mut treebanks: Vec<usize> = places.iter().map(|p| p.0).collect();
                treebanks.sort_unstable();
                treebanks.dedup();
                if treebanks.len() > 1 {
                    report.ambiguous_sentences += 1;
                }
                for &(ti, split) in places {
                    let c = counts.entry((ti, split)).or_insert_with(|| AttributionCount {
                        treebank: refs[ti].0.clone(),
                        split: split.to_string(),
                        sentences: 0,
                        hits: BTreeMap::new(),
                    });
                    c.sentences += 1;
                    add(&mut c.hits, &s.hits);
                }
            }
        }
    }
    report.counts = counts.into_values().collect();
    report
}
