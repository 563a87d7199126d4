use std::collections::HashMap;
use std::fmt::Write as _;

use super::{CorpusError, TaggedSentence};

/// Most frequent tag in `sentences`; ties go to the earlier class in
/// `inventory` (unlisted tags rank last, by first occurrence).
pub fn majority_tag<'a>(
    sentences: impl IntoIterator<Item = &'a TaggedSentence>,
    inventory: &[String],
) -> Option<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for s in sentences {
        for t in &s.gold_tags {
            let c = counts.entry(t.as_str()).or_insert(0);
            if *c == 0 {
                order.push(t.as_str());
            }
            *c += 1;
        }
    }
    pick_majority(&counts, &order, inventory).map(str::to_string)
}

fn pick_majority<'a>(
    counts: &HashMap<&'a str, usize>,
    order: &[&'a str],
    inventory: &[String],
) -> Option<&'a str> {
    let rank = |t: &str| {
        inventory
            .iter()
            .position(|c| c == t)
            .unwrap_or(inventory.len() + order.iter().position(|o| *o == t).unwrap_or(0))
    };
    order
        .iter()
        .copied()
        .max_by(|a, b| counts[a].cmp(&counts[b]).then_with(|| rank(b).cmp(&rank(a))))
}

/// Per-word majority tags, keyed by exact (case-sensitive) surface form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordLexicon {
    entries: HashMap<String, String>,
}

impl WordLexicon {
    /// Builds the lexicon; tag ties resolve by `inventory` order.
    pub fn from_sentences<'a>(
        sentences: impl IntoIterator<Item = &'a TaggedSentence>,
        inventory: &[String],
    ) -> Self {
        let mut per_word: HashMap<&str, (HashMap<&str, usize>, Vec<&str>)> = HashMap::new();
        for s in sentences {
            for (w, t) in s.words.iter().zip(&s.gold_tags) {
                let (counts, order) = per_word.entry(w.as_str()).or_default();
                let c = counts.entry(t.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(t.as_str());
                }
                *c += 1;
            }
        }
        let entries = per_word
            .into_iter()
            .map(|(w, (counts, order))| {
                let tag = pick_majority(&counts, &order, inventory).expect("non-empty");
                (w.to_string(), tag.to_string())
            })
            .collect();
        Self { entries }
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.entries.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, word: impl Into<String>, tag: impl Into<String>) {
        self.entries.insert(word.into(), tag.into());
    }

    /// `word<TAB>tag` lines sorted by word.
    pub fn to_tsv(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let _ = writeln!(out, "{k}\t{}", self.entries[k]);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (w, t) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
                line: i + 1,
                message: "expected `word<TAB>tag`".into(),
            })?;
            if t.is_empty() || t.contains('\t') {
                return Err(CorpusError::Parse {
                    line: i + 1,
                    message: "expected `word<TAB>tag`".into(),
                });
            }
            entries.insert(w.to_string(), t.to_string());
        }
        Ok(Self { entries })
    }
}
