//! Test-set leakage detectors.
//!
//! * Text: a test sentence's words, concatenated with all whitespace removed,
//!   occur inside a document with whitespace likewise removed. This catches
//!   detokenized copies regardless of spacing around punctuation.
//! * Lines: at least `min_line_run` consecutive column-format token lines
//!   reproduce consecutive (word, tag) pairs of a test sentence.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use aho_corasick::{AhoCorasick, MatchKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scan::ShardError;
use super::shards::{for_each_document, DEFAULT_CHUNK_BYTES};
use super::ScanError;
use crate::corpus::TaggedSentence;
use crate::rng::fnv1a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Text,
    Lines,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LeakageMatch {
    pub shard: String,
    pub doc: u64,
    /// Byte offset of the match start in the decompressed shard (plain
    /// text) or in the document text (JSON lines).
    pub offset: u64,
    pub detector: Detector,
    pub sentence_id: String,
    /// Matched token lines; 0 for text matches.
    pub lines: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageConfig {
    /// Shorter sentences are skipped by the text detector.
    pub min_text_tokens: usize,
    /// Consecutive token lines needed for a line match (at least 3).
    pub min_line_run: usize,
    pub workers: usize,
    pub chunk_bytes: usize,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            min_text_tokens: 6,
            min_line_run: 3,
            workers: 1,
            chunk_bytes: DEFAULT_CHUNK_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LeakageReport {
    pub matches: Vec<LeakageMatch>,
    pub shard_errors: Vec<ShardError>,
}

fn strip_ws(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect()
}

fn pair_hash(pairs: &[(&str, &str)]) -> u64 {
    let mut buf = Vec::new();
    for (w, t) in pairs {
        buf.extend_from_slice(w.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(t.as_bytes());
        buf.push(0x1e);
    }
    fnv1a(&buf)
}

enum LineKind<'a> {
    Token(&'a str, &'a str),
    /// CoNLL-U multiword range or empty node: neither extends nor breaks a run.
    Skip,
    Break,
}

fn classify(line: &[u8]) -> LineKind<'_> {
    let Ok(line) = std::str::from_utf8(line) else {
        return LineKind::Break;
    };
    let line = line.trim_end_matches('\r');
    if line.trim().is_empty() || line.starts_with('#') {
        return LineKind::Break;
    }
    let tabs: Vec<&str> = line.split('\t').collect();
    if tabs.len() >= 8 {
        let id = tabs[0];
        if id.contains('-') || id.contains('.') {
            return LineKind::Skip;
        }
        if id.bytes().all(|b| b.is_ascii_digit()) && !id.is_empty() {
            return LineKind::Token(tabs[1], tabs[3]);
        }
    }
    let mut fields = line.split_whitespace();
    match (fields.next(), fields.next_back()) {
        (Some(w), Some(t)) => LineKind::Token(w, t),
        _ => LineKind::Break,
    }
}

struct Index<'a> {
    test: &'a [TaggedSentence],
    text: Option<AhoCorasick>,
    text_ids: Vec<Vec<usize>>,
    trigrams: HashMap<u64, Vec<(usize, usize)>>,
    min_run: usize,
}

impl<'a> Index<'a> {
    fn new(test: &'a [TaggedSentence], cfg: &LeakageConfig) -> Result<Self, ScanError> {
        let mut by_text: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
        for (i, s) in test.iter().enumerate() {
            if s.len() >= cfg.min_text_tokens.max(1) {
                let joined = strip_ws(s.words.concat().as_bytes());
                if !joined.is_empty() {
                    by_text.entry(joined).or_default().push(i);
                }
            }
        }
        let mut texts: Vec<(Vec<u8>, Vec<usize>)> = by_text.into_iter().collect();
        texts.sort();
        let (needles, text_ids): (Vec<_>, Vec<_>) = texts.into_iter().unzip();
        let text = if needles.is_empty() {
            None
        } else {
            Some(
                AhoCorasick::builder()
                    .match_kind(MatchKind::Standard)
                    .build(&needles)
                    .map_err(|e| ScanError::Pattern(e.to_string()))?,
            )
        };
        let mut trigrams: HashMap<u64, Vec<(usize, usize)>> = HashMap::new();
        for (i, s) in test.iter().enumerate() {
            let pairs: Vec<(&str, &str)> = s
                .words
                .iter()
                .zip(&s.gold_tags)
                .map(|(w, t)| (w.as_str(), t.as_str()))
                .collect();
            for j in 0..pairs.len().saturating_sub(2) {
                trigrams.entry(pair_hash(&pairs[j..j + 3])).or_default().push((i, j));
            }
        }
        Ok(Self {
            test,
            text,
            text_ids,
            trigrams,
            min_run: cfg.min_line_run.max(3),
        })
    }

    fn pair(&self, s: usize, j: usize) -> (&str, &str) {
        let t = &self.test[s];
        (t.words[j].as_str(), t.gold_tags[j].as_str())
    }

    fn text_matches(&self, shard: &str, doc: u64, base: u64, bytes: &[u8], out: &mut Vec<LeakageMatch>) {
        let Some(ac) = &self.text else { return };
        let mut stripped = Vec::with_capacity(bytes.len());
        let mut origin = Vec::with_capacity(bytes.len());
        for (i, &b) in bytes.iter().enumerate() {
            if !b.is_ascii_whitespace() {
                stripped.push(b);
                origin.push(i as u64);
            }
        }
        for m in ac.find_overlapping_iter(&stripped) {
            for &s in &self.text_ids[m.pattern().as_usize()] {
                out.push(LeakageMatch {
                    shard: shard.to_string(),
                    doc,
                    offset: base + origin[m.start()],
                    detector: Detector::Text,
                    sentence_id: self.test[s].sentence_id.clone(),
                    lines: 0,
                });
            }
        }
    }

    fn line_matches(&self, shard: &str, doc: u64, base: u64, bytes: &[u8], out: &mut Vec<LeakageMatch>) {
        // Open runs keyed by (sentence, last matched position).
        let mut active: HashMap<(usize, usize), (u64, usize)> = HashMap::new();
        let mut recent: Vec<((&str, &str), u64)> = Vec::with_capacity(3);
        let emit = |active: &mut HashMap<(usize, usize), (u64, usize)>, out: &mut Vec<LeakageMatch>| {
            for ((s, _), (start, lines)) in active.drain() {
                if lines >= self.min_run {
                    out.push(LeakageMatch {
                        shard: shard.to_string(),
                        doc,
                        offset: start,
                        detector: Detector::Lines,
                        sentence_id: self.test[s].sentence_id.clone(),
                        lines,
                    });
                }
            }
        };
        let mut pos = 0usize;
        for line in bytes.split(|&b| b == b'\n') {
            let line_offset = base + pos as u64;
            pos += line.len() + 1;
            match classify(line) {
                LineKind::Skip => continue,
                LineKind::Break => {
                    emit(&mut active, out);
                    recent.clear();
                }
                LineKind::Token(w, t) => {
                    if recent.len() == 3 {
                        recent.remove(0);
                    }
                    recent.push(((w, t), line_offset));
                    let mut next = HashMap::new();
                    if recent.len() == 3 {
                        let pairs = [recent[0].0, recent[1].0, recent[2].0];
                        if let Some(cands) = self.trigrams.get(&pair_hash(&pairs)) {
                            for &(s, j) in cands {
                                if (0..3).any(|k| self.pair(s, j + k) != pairs[k]) {
                                    continue;
                                }
                                let entry = match active.remove(&(s, j + 1)) {
                                    Some((start, lines)) => (start, lines + 1),
                                    None => (recent[0].1, 3),
                                };
                                next.insert((s, j + 2), entry);
                            }
                        }
                    }
                    emit(&mut active, out);
                    active = next;
                }
            }
        }
        emit(&mut active, out);
    }
}

/// Runs both detectors over every shard. Unreadable shards are recorded and
/// skipped. Matches are sorted by location.
pub fn leakage_check(
    shards: &[PathBuf],
    test: &[TaggedSentence],
    cfg: &LeakageConfig,
) -> Result<LeakageReport, ScanError> {
    if test.is_empty() {
        return Err(ScanError::EmptyTestSet);
    }
    let index = Index::new(test, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| ScanError::Pattern(e.to_string()))?;
    let per_shard: Vec<(Vec<LeakageMatch>, Option<ShardError>)> = pool.install(|| {
        shards
            .par_iter()
            .map(|path| {
                let name = path.display().to_string();
                let mut found = Vec::new();
                let result = for_each_document(path, cfg.chunk_bytes, 0, |d| {
                    index.text_matches(&name, d.doc, d.base, d.text, &mut found);
                    index.line_matches(&name, d.doc, d.base, d.text, &mut found);
                });
                match result {
                    Ok(_) => (found, None),
                    Err(e) => (
                        Vec::new(),
                        Some(ShardError {
                            shard: name,
                            message: e.to_string(),
                        }),
                    ),
                }
            })
            .collect()
    });
    let mut report = LeakageReport::default();
    for (found, err) in per_shard {
        report.matches.extend(found);
        report.shard_errors.extend(err);
    }
    report.matches.sort();
    report.matches.dedup();
    Ok(report)
}

/// Ids of test sentences with at least one match.
pub fn leaked_sentence_ids(matches: &[LeakageMatch]) -> HashSet<&str> {
    matches.iter().map(|m| m.sentence_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn sent(id: &str, words: &str, tags: &str) -> TaggedSentence {
        TaggedSentence::new(
            id,
            words.split(' ').map(String::from).collect(),
            tags.split(' ').map(String::from).collect(),
        )
        .unwrap()
    }

    fn test_set() -> Vec<TaggedSentence> {
        vec![
            sent(
                "t1",
                "The cat sat on the mat .",
                "DET NOUN VERB ADP DET NOUN PUNCT",
            ),
            sent("t2", "Dogs bark loudly at night", "NOUN VERB ADV ADP NOUN"),
        ]
    }

    fn run(text: &str) -> Vec<LeakageMatch> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, text).unwrap();
        leakage_check(&[p], &test_set(), &LeakageConfig::default()).unwrap().matches
    }

    #[test]
    fn verbatim_sentence_found() {
        let m = run("Intro text. The cat sat on the mat. More.\n");
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].detector, m[0].sentence_id.as_str()), (Detector::Text, "t1"));
        assert_eq!(m[0].offset, 12);
    }

    #[test]
    fn short_sentences_skip_text_detector() {
        assert!(run("Dogs bark loudly at night\n").is_empty());
    }

    #[test]
    fn clean_corpus_has_no_matches() {
        assert!(run("Nothing to see here.\n1\tA\ta\tDET\t_\t_\t0\tdet\t_\t_\n").is_empty());
    }

    #[test]
    fn three_conllu_lines_match() {
        let text = "# sent_id = x\n\
                    1\tDogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
                    2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_\n\
                    3\tloudly\tloudly\tADV\t_\t_\t2\tadvmod\t_\t_\n\
                    \n";
        let m = run(text);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].detector, Detector::Lines);
        assert_eq!(m[0].sentence_id, "t2");
        assert_eq!(m[0].lines, 3);
        assert_eq!(m[0].offset, text.find("1\tDogs").unwrap() as u64);
    }

    #[test]
    fn two_lines_or_wrong_tags_do_not_match() {
        let two = "1\tDogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_\n2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_\n";
        assert!(run(two).is_empty());
        let wrong = "Dogs NOUN\nbark NOUN\nloudly ADV\n";
        assert!(run(wrong).is_empty());
    }

    #[test]
    fn long_runs_reported_once_with_length() {
        let text = "The DT DET\ncat NN NOUN\nsat VBD VERB\non IN ADP\nthe DT DET\nmat NN NOUN\n";
        let m = run(text);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].lines, 6);
        assert_eq!(m[0].offset, 0);
    }

    #[test]
    fn range_lines_do_not_break_runs() {
        let text = "1\tDogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
                    2-3\tbarkloudly\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_\n\
                    3\tloudly\tloudly\tADV\t_\t_\t2\tadvmod\t_\t_\n";
        assert_eq!(run(text).len(), 1);
    }

    #[test]
    fn empty_test_set_rejected() {
        assert!(matches!(
            leakage_check(&[], &[], &LeakageConfig::default()),
            Err(ScanError::EmptyTestSet)
        ));
    }
}
