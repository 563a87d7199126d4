use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::path::PathBuf;

use aho_corasick::{AhoCorasick, MatchKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shards::{for_each_document, Document, DEFAULT_CHUNK_BYTES};
use super::{LeakageMatch, PatternMode, ScanError, ScanPattern};
use crate::rng::mix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Characters of context kept on each side of a sampled hit.
    pub window: usize,
    /// Sampled contexts kept per label.
    pub sample_cap: usize,
    pub seed: u64,
    pub workers: usize,
    pub chunk_bytes: usize,
    /// Record the containing UD sentence of every UD-format hit.
    pub collect_ud_sentences: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            window: 100,
            sample_cap: 100,
            seed: 0,
            workers: 1,
            chunk_bytes: DEFAULT_CHUNK_BYTES,
            collect_ud_sentences: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LabelStats {
    pub mode: Option<PatternMode>,
    pub total: u64,
    /// Hits on a line shaped like the label's native format: a CoNLL-U token
    /// line with the label in the UPOS column (tab-anchored), or a
    /// space-separated column line ending in the label (space tokens).
    pub format_count: u64,
}

impl LabelStats {
    pub fn format_fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.format_count as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSample {
    pub label: String,
    pub shard: String,
    pub doc: u64,
    pub offset: u64,
    pub text: String,
    #[serde(skip)]
    key: u64,
}

impl PartialOrd for ContextSample {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ContextSample {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.key, &self.shard, self.doc, self.offset).cmp(&(other.key, &other.shard, other.doc, other.offset))
    }
}

/// A UD sentence containing at least one UD-format hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdSentenceHits {
    pub tokens: Vec<String>,
    /// Hits per label inside this sentence.
    pub hits: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardError {
    pub shard: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScanReport {
    pub labels: BTreeMap<String, LabelStats>,
    pub samples: BTreeMap<String, Vec<ContextSample>>,
    pub shards_scanned: usize,
    pub bytes_scanned: u64,
    pub documents: u64,
    pub invalid_utf8_sequences: u64,
    pub malformed_records: u64,
    pub shard_errors: Vec<ShardError>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ud_sentences: Vec<UdSentenceHits>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leakage: Vec<LeakageMatch>,
}

impl ScanReport {
    /// `label, mode, total, format_count, format_fraction` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "mode", "total", "format_count", "format_fraction"])
            .expect("in-memory write");
        for (label, s) in &self.labels {
            w.write_record([
                label.clone(),
                s.mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
                s.total.to_string(),
                s.format_count.to_string(),
                s.format_fraction().map(|f| format!("{f:.6}")).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Review file: one block per sample, header line then the context.
    pub fn review_text(&self) -> String {
        let mut out = String::new();
        for samples in self.samples.values() {
            for s in samples {
                out.push_str(&format!(
                    "### label={} shard={} doc={} offset={}\n{}\n\n",
                    s.label, s.shard, s.doc, s.offset, s.text
                ));
            }
        }
        out
    }
}

/// Per-shard partial result; merging is associative and commutative.
#[derive(Default)]
struct Partial {
    stats: Vec<LabelStats>,
    heaps: Vec<BinaryHeap<ContextSample>>,
    bytes: u64,
    documents: u64,
    invalid_utf8: u64,
    malformed: u64,
    errors: Vec<ShardError>,
    sentences: HashMap<Vec<String>, BTreeMap<String, u64>>,
}

impl Partial {
    fn new(n: usize) -> Self {
        Self {
            stats: vec![LabelStats::default(); n],
            heaps: vec![BinaryHeap::new(); n],
            ..Self::default()
        }
    }

    fn merge(mut self, other: Partial, cap: usize) -> Partial {
        for (a, b) in self.stats.iter_mut().zip(other.stats) {
            a.total += b.total;
            a.format_count += b.format_count;
        }
        for (a, b) in self.heaps.iter_mut().zip(other.heaps) {
            for s in b {
                offer(a, s, cap);
            }
        }
        self.bytes += other.bytes;
        self.documents += other.documents;
        self.invalid_utf8 += other.invalid_utf8;
        self.malformed += other.malformed;
        self.errors.extend(other.errors);
        for (tokens, hits) in other.sentences {
            let e = self.sentences.entry(tokens).or_default();
            for (l, c) in hits {
                *e.entry(l).or_default() += c;
            }
        }
        self
    }
}

/// Keeps the `cap` smallest keys.
fn offer(heap: &mut BinaryHeap<ContextSample>, s: ContextSample, cap: usize) {
    if cap == 0 {
        return;
    }
    if heap.len() < cap {
        heap.push(s);
    } else if heap.peek().is_some_and(|top| s < *top) {
        heap.pop();
        heap.push(s);
    }
}

fn would_keep(heap: &BinaryHeap<ContextSample>, key: u64, cap: usize) -> bool {
    cap > 0 && (heap.len() < cap || heap.peek().is_some_and(|top| key <= top.key))
}

pub(crate) fn sample_key(seed: u64, shard: u64, doc: u64, offset: u64, label: u64) -> u64 {
    let mut k = mix64(seed);
    for v in [shard, doc, offset, label] {
        k = mix64(k ^ v);
    }
    k
}

struct Matcher {
    ac: AhoCorasick,
    patterns: Vec<ScanPattern>,
}

impl Matcher {
    fn new(patterns: &[ScanPattern]) -> Result<Self, ScanError> {
        for p in patterns {
            p.validate()?;
        }
        let needles: Vec<String> = patterns.iter().map(ScanPattern::needle).collect();
        let ac = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&needles)
            .map_err(|e| ScanError::Pattern(e.to_string()))?;
        Ok(Self {
            ac,
            patterns: patterns.to_vec(),
        })
    }
}

fn line_bounds(text: &[u8], at: usize) -> (usize, usize) {
    let start = text[..at].iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let end = text[at..].iter().position(|&b| b == b'\n').map_or(text.len(), |p| at + p);
    (start, end)
}

/// The hit's leading tab is the third tab of a line with at least 8 fields.
fn is_ud_line(text: &[u8], tab_at: usize) -> bool {
    let (start, end) = line_bounds(text, tab_at);
    let line = &text[start..end];
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let tabs_before = text[start..tab_at].iter().filter(|&&b| b == b'\t').count();
    tabs_before == 2 && line.iter().filter(|&&b| b == b'\t').count() + 1 >= 8
}

/// At least two whitespace-separated fields and the hit is the last one.
fn is_column_line(text: &[u8], at: usize, len: usize) -> bool {
    let (start, end) = line_bounds(text, at);
    let rest = &text[at + len..end];
    let before = &text[start..at];
    rest.iter().all(u8::is_ascii_whitespace) && before.iter().any(|b| !b.is_ascii_whitespace())
}

fn is_ws_boundary(text: &[u8], at: usize, len: usize) -> bool {
    let before_ok = at == 0 || text[at - 1].is_ascii_whitespace();
    let after_ok = at + len == text.len() || text[at + len].is_ascii_whitespace();
    before_ok && after_ok
}

/// Forms of the CoNLL-U token lines around `at`, or `None` if the block is
/// not UD-shaped.
fn ud_sentence_at(text: &[u8], at: usize) -> Option<Vec<String>> {
    let fields_of = |line: &[u8]| -> Option<Vec<String>> {
        let line = std::str::from_utf8(line).ok()?;
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        (f.len() >= 8).then(|| f.iter().map(|s| s.to_string()).collect())
    };
    let (start, end) = line_bounds(text, at);
    let mut first = start;
    while first > 0 {
        let (ps, _) = line_bounds(text, first - 1);
        if fields_of(&text[ps..first - 1]).is_none() {
            break;
        }
        first = ps;
    }
    let mut last = end;
    while last < text.len() {
        let (_, ne) = line_bounds(text, last + 1);
        if fields_of(&text[last + 1..ne]).is_none() {
            break;
        }
        last = ne;
    }
    let mut tokens = Vec::new();
    for line in text[first..last].split(|&b| b == b'\n') {
        let f = fields_of(line)?;
        if f[0].contains('-') || f[0].contains('.') {
            continue;
        }
        tokens.push(f[1].clone());
    }
    (!tokens.is_empty()).then_some(tokens)
}

/// Bytes needed on each side to hold `window` characters plus one
/// possibly cut character.
fn margin_bytes(window: usize) -> usize {
    window * 4 + 4
}

/// `window` characters either side of `text[at..at + len]`, reaching into
/// the neighbouring chunks when the hit is near an edge.
fn context_text(doc: &Document<'_>, at: usize, len: usize, window: usize) -> String {
    let need = margin_bytes(window);
    let text = doc.text;
    let mut left = Vec::with_capacity(need);
    if at < need {
        let from_before = (need - at).min(doc.before.len());
        left.extend_from_slice(&doc.before[doc.before.len() - from_before..]);
    }
    left.extend_from_slice(&text[at.saturating_sub(need)..at]);
    let mut right = text[at + len..(at + len + need).min(text.len())].to_vec();
    if right.len() < need {
        let more = (need - right.len()).min(doc.after.len());
        right.extend_from_slice(&doc.after[..more]);
    }
    let before = String::from_utf8_lossy(&left);
    let hit = String::from_utf8_lossy(&text[at..at + len]);
    let after = String::from_utf8_lossy(&right);
    let before: String = {
        let chars: Vec<char> = before.chars().collect();
        chars[chars.len().saturating_sub(window)..].iter().collect()
    };
    let after: String = after.chars().take(window).collect();
    format!("{before}{hit}{after}")
}

fn invalid_utf8_sequences(bytes: &[u8]) -> u64 {
    bytes.utf8_chunks().filter(|c| !c.invalid().is_empty()).count() as u64
}

fn scan_document(
    m: &Matcher,
    cfg: &ScanConfig,
    shard_idx: u64,
    shard_name: &str,
    document: &Document<'_>,
    part: &mut Partial,
) {
    let (doc, base, text) = (document.doc, document.base, document.text);
    part.invalid_utf8 += invalid_utf8_sequences(text);
    for hit in m.ac.find_overlapping_iter(text) {
        let pi = hit.pattern().as_usize();
        let p = &m.patterns[pi];
        let (at, len) = (hit.start(), hit.len());
        let in_format = match p.mode {
            PatternMode::TabAnchored => is_ud_line(text, at),
            PatternMode::SpaceToken => {
                if !is_ws_boundary(text, at, len) {
                    continue;
                }
                is_column_line(text, at, len)
            }
        };
        let stats = &mut part.stats[pi];
        stats.total += 1;
        if in_format {
            stats.format_count += 1;
            if cfg.collect_ud_sentences && p.mode == PatternMode::TabAnchored {
                if let Some(tokens) = ud_sentence_at(text, at + 1) {
                    *part.sentences.entry(tokens).or_default().entry(p.label.clone()).or_default() += 1;
                }
            }
        }
        let offset = base + at as u64;
        let key = sample_key(cfg.seed, shard_idx, doc, offset, pi as u64);
        if would_keep(&part.heaps[pi], key, cfg.sample_cap) {
            let (ctx_at, ctx_len) = match p.mode {
                // Report the label itself, not the surrounding tabs.
                PatternMode::TabAnchored => (at + 1, len - 2),
                PatternMode::SpaceToken => (at, len),
            };
            let sample = ContextSample {
                label: p.label.clone(),
                shard: shard_name.to_string(),
                doc,
                offset,
                text: context_text(document, ctx_at, ctx_len, cfg.window),
                key,
            };
            offer(&mut part.heaps[pi], sample, cfg.sample_cap);
        }
    }
}

/// Counts pattern occurrences over all shards. Unreadable shards are
/// recorded in the report and skipped.
pub fn scan(shards: &[PathBuf], patterns: &[ScanPattern], cfg: &ScanConfig) -> Result<ScanReport, ScanError> {
    let matcher = Matcher::new(patterns)?;
    let n = patterns.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| ScanError::Pattern(e.to_string()))?;

    let merged = pool.install(|| {
        shards
            .par_iter()
            .enumerate()
            .map(|(i, path)| {
                let name = path.display().to_string();
                let mut part = Partial::new(n);
                let result = for_each_document(path, cfg.chunk_bytes, margin_bytes(cfg.window), |d| {
                    scan_document(&matcher, cfg, i as u64, &name, d, &mut part);
                });
                match result {
                    Ok(stats) => {
                        part.bytes += stats.bytes;
                        part.documents += stats.documents;
                        part.malformed += stats.malformed_records;
                    }
                    Err(e) => {
                        log::warn!("skipping shard {name}: {e}");
                        part = Partial::new(n);
                        part.errors.push(ShardError {
                            shard: name,
                            message: e.to_string(),
                        });
                    }
                }
                part
            })
            .reduce(|| Partial::new(n), |a, b| a.merge(b, cfg.sample_cap))
    });

    let mut labels = BTreeMap::new();
    let mut samples = BTreeMap::new();
    for ((p, mut stats), heap) in patterns.iter().zip(merged.stats).zip(merged.heaps) {
        stats.mode = Some(p.mode);
        labels.insert(p.label.clone(), stats);
        samples.insert(p.label.clone(), heap.into_sorted_vec());
    }
    let mut errors = merged.errors;
    errors.sort_by(|a, b| a.shard.cmp(&b.shard));
    let mut ud_sentences: Vec<UdSentenceHits> = merged
        .sentences
        .into_iter()
        .map(|(tokens, hits)| UdSentenceHits { tokens, hits })
        .collect();
    ud_sentences.sort_by(|a, b| a.tokens.cmp(&b.tokens));
    Ok(ScanReport {
        labels,
        samples,
        shards_scanned: shards.len() - errors.len(),
        bytes_scanned: merged.bytes,
        documents: merged.documents,
        invalid_utf8_sequences: merged.invalid_utf8,
        malformed_records: merged.malformed,
        shard_errors: errors,
        ud_sentences,
        leakage: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn ud_line(id: usize, form: &str, upos: &str) -> String {
        format!("{id}\t{form}\t{}\t{upos}\t_\t_\t0\tdep\t_\t_\n", form.to_lowercase())
    }

    #[test]
    fn planted_cconj() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("prose and more prose\n");
        text.push_str(&ud_line(1, "and", "CCONJ"));
        text.push_str(&ud_line(2, "but", "CCONJ"));
        text.push_str(&ud_line(3, "or", "CCONJ"));
        text.push_str("a\tCCONJ\tb\n");
        text.push_str("x\ty\tz\tw\tCCONJ\tq\tr\ts\tt\n");
        text.push_str("\tCCONJ\t\n");
        text.push_str("foo\tCCONJ\tbar baz\n");
        let p = write(dir.path(), "a.txt", &text);
        let r = scan(&[p], &[ScanPattern::tab("CCONJ")], &ScanConfig::default()).unwrap();
        let s = &r.labels["CCONJ"];
        assert_eq!((s.total, s.format_count), (7, 3));
        assert_eq!(r.samples["CCONJ"].len(), 7);
    }

    #[test]
    fn adjacent_hits_share_a_tab() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.txt", "CCONJ\tCCONJ\tCCONJ\tCCONJ\n");
        let r = scan(&[p], &[ScanPattern::tab("CCONJ")], &ScanConfig::default()).unwrap();
        assert_eq!(r.labels["CCONJ"].total, 2);
    }

    #[test]
    fn space_tokens_respect_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.txt",
            "EU NNP B-NP B-ORG\nB-PER x B-PERSON xB-PER B-PER\nB-PER\n",
        );
        let r = scan(
            &[p],
            &[ScanPattern::token("B-PER"), ScanPattern::token("B-ORG")],
            &ScanConfig::default(),
        )
        .unwrap();
        assert_eq!(r.labels["B-PER"].total, 3);
        assert_eq!(r.labels["B-ORG"].total, 1);
        assert_eq!(r.labels["B-ORG"].format_count, 1);
        assert_eq!(r.labels["B-PER"].format_count, 1);
    }

    #[test]
    fn empty_and_missing_shards() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.txt", "");
        let missing = dir.path().join("nope.txt");
        let r = scan(&[empty, missing], &[ScanPattern::tab("NOUN")], &ScanConfig::default()).unwrap();
        assert_eq!(r.labels["NOUN"].total, 0);
        assert_eq!(r.shard_errors.len(), 1);
        assert_eq!(r.shards_scanned, 1);
        let r = scan(&[], &[ScanPattern::tab("NOUN")], &ScanConfig::default()).unwrap();
        assert_eq!(r.labels["NOUN"].format_fraction(), None);
    }

    #[test]
    fn invalid_utf8_counted_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        fs::write(&p, b"ok\tNOUN\t\xff\xfe more \xc3\n").unwrap();
        let r = scan(&[p], &[ScanPattern::tab("NOUN")], &ScanConfig::default()).unwrap();
        assert_eq!(r.labels["NOUN"].total, 1);
        // \xff, \xfe and the truncated \xc3 are separate invalid sequences.
        assert_eq!(r.invalid_utf8_sequences, 3);
    }

    #[test]
    fn context_window_in_chars() {
        let text = "ééééé\tNOUN\tüüüüü".as_bytes();
        let at = "ééééé\t".len();
        let doc = Document {
            doc: 0,
            base: 0,
            text,
            before: &[],
            after: &[],
        };
        assert_eq!(context_text(&doc, at, 4, 2), "é\tNOUN\tü");
        let (head, tail) = text.split_at(at + 2);
        let doc = Document {
            doc: 0,
            base: 0,
            text: head,
            before: &[],
            after: tail,
        };
        assert_eq!(context_text(&doc, at, 2, 2), "é\tNOUN");
    }

    #[test]
    fn ud_sentence_extraction() {
        let mut text = String::from("# sent_id = 1\n");
        text.push_str(&ud_line(1, "Cats", "NOUN"));
        text.push_str("2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n");
        text.push_str(&ud_line(2, "do", "AUX"));
        text.push_str(&ud_line(3, "n't", "PART"));
        text.push_str("\nnext\n");
        let at = text.find("\tAUX\t").unwrap();
        assert_eq!(ud_sentence_at(text.as_bytes(), at + 1).unwrap(), ["Cats", "do", "n't"]);
    }
}
