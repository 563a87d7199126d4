use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::{majority_tag, TaggedSentence, TaskDataset, WordLexicon};
use crate::labelspace::Task;

/// Labeled span with inclusive token bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

pub fn token_accuracy<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<f64, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == p.as_ref()).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Splits a tag into (prefix, type) the way conlleval does. Tags without a
/// `B-`/`I-` prefix (including `O` and placeholders) count as outside.
fn split_tag(tag: &str) -> (char, &str) {
    match tag.split_once('-') {
        Some(("B", t)) => ('B', t),
        Some(("I", t)) => ('I', t),
        _ => ('O', ""),
    }
}

fn ends_chunk(prev: char, prev_type: &str, tag: char, ty: &str) -> bool {
    (prev == 'B' && (tag == 'B' || tag == 'O'))
        || (prev == 'I' && (tag == 'B' || tag == 'O'))
        || (prev != 'O' && prev_type != ty)
}

fn starts_chunk(prev: char, prev_type: &str, tag: char, ty: &str) -> bool {
    tag == 'B' || (prev == 'O' && tag == 'I') || (tag != 'O' && prev_type != ty)
}

/// Spans in order of appearance. An `I-X` that cannot continue a span opens
/// a new one, as conlleval does.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let (mut prev, mut prev_type) = ('O', "");
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (t, ty) = split_tag(tag.as_ref());
        if let Some((start, oty)) = open {
            if ends_chunk(prev, prev_type, t, ty) {
                spans.push(Span {
                    entity_type: oty.to_string(),
                    start,
                    end: i - 1,
                });
                open = None;
            }
        }
        if starts_chunk(prev, prev_type, t, ty) {
            open = Some((i, ty));
        }
        prev = t;
        prev_type = ty;
    }
    if let Some((start, ty)) = open {
        spans.push(Span {
            entity_type: ty.to_string(),
            start,
            end: tags.len() - 1,
        });
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub n_gold: usize,
    pub n_pred: usize,
}

impl Prf {
    pub fn from_counts(true_positives: usize, n_gold: usize, n_pred: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, n_pred);
        let recall = ratio(true_positives, n_gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            true_positives,
            n_gold,
            n_pred,
        }
    }
}

fn check_aligned<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<T>],
) -> Result<(), MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::Misaligned(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(MetricsError::Misaligned(format!(
                "sentence {i}: {} gold tags, {} predicted",
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

fn span_f1_filtered<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<T>],
    keep: impl Fn(&Span) -> bool,
) -> Result<Prf, MetricsError> {
    check_aligned(gold, pred)?;
    let (mut tp, mut ng, mut np) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gs: Vec<Span> = extract_spans(g).into_iter().filter(&keep).collect();
        let ps: Vec<Span> = extract_spans(p).into_iter().filter(&keep).collect();
        tp += ps.iter().filter(|s| gs.contains(s)).count();
        ng += gs.len();
        np += ps.len();
    }
    Ok(Prf::from_counts(tp, ng, np))
}

/// Micro-averaged exact-match span precision, recall and F1.
pub fn span_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<Prf, MetricsError> {
    span_f1_filtered(gold, pred, |_| true)
}

/// Span scores counting only spans of one entity type.
pub fn span_f1_for_type<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<T>],
    entity_type: &str,
) -> Result<Prf, MetricsError> {
    span_f1_filtered(gold, pred, |s| s.entity_type == entity_type)
}

/// Accuracy for POS, span F1 otherwise.
pub fn task_score<S: AsRef<str>, T: AsRef<str>>(
    task: Task,
    gold: &[Vec<S>],
    pred: &[Vec<T>],
) -> Result<f64, MetricsError> {
    if task.is_bio() {
        Ok(span_f1(gold, pred)?.f1)
    } else {
        check_aligned(gold, pred)?;
        let g: Vec<&str> = gold.iter().flatten().map(AsRef::as_ref).collect();
        let p: Vec<&str> = pred.iter().flatten().map(AsRef::as_ref).collect();
        token_accuracy(&g, &p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub task: Task,
    pub majority_tag: String,
    pub overall_majority: f64,
    pub per_word_majority: f64,
    pub n_eval_sentences: usize,
}

/// Overall-majority and per-word-majority baselines trained on the train
/// split and scored on `eval` with the task metric. Unseen words back off to
/// the overall majority tag.
pub fn majority_baselines(dataset: &TaskDataset, eval: &[TaggedSentence]) -> Result<Baselines, MetricsError> {
    let majority = majority_tag(&dataset.train, &dataset.label_inventory).ok_or(MetricsError::Empty)?;
    if eval.is_empty() {
        return Err(MetricsError::Empty);
    }
    let lexicon = WordLexicon::from_sentences(&dataset.train, &dataset.label_inventory);
    let gold: Vec<Vec<&str>> = eval
        .iter()
        .map(|s| s.gold_tags.iter().map(String::as_str).collect())
        .collect();
    let overall: Vec<Vec<&str>> = eval.iter().map(|s| vec![majority.as_str(); s.len()]).collect();
    let per_word: Vec<Vec<&str>> = eval
        .iter()
        .map(|s| {
            s.words
                .iter()
                .map(|w| lexicon.get(w).unwrap_or(majority.as_str()))
                .collect()
        })
        .collect();
    Ok(Baselines {
        task: dataset.task,
        overall_majority: task_score(dataset.task, &gold, &overall)?,
        per_word_majority: task_score(dataset.task, &gold, &per_word)?,
        majority_tag: majority,
        n_eval_sentences: eval.len(),
    })
}
