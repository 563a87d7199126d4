use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::analysis::{seen_unseen_split, true_label_error_fraction, SeenUnseen, TrueLabelErrors};
use super::confusion::{confusion_spearman, CellSelection, ConfusionMatrix, PairwiseSpearman};
use super::scoring::{span_f1, span_f1_for_type, Baselines, Prf};
use super::MetricsError;
use crate::decoder::DecodeTrace;
use crate::labelspace::{original_labels_for, BioAutomaton, LabelSet, LabelVariant, Task};
use crate::prompt::PromptConfig;

/// Placeholder for words left untagged after a format error.
pub const MISSING: &str = "_";

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 over the newline-joined sentence ids, in order.
pub fn eval_fingerprint<S: AsRef<str>>(ids: &[S]) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_ref().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Everything needed to reproduce one run against the same backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub task: Task,
    pub labels: LabelSet,
    pub label_seed: Option<u64>,
    pub k: usize,
    pub run_index: usize,
    pub demo_seed: u64,
    pub demonstration_ids: Vec<String>,
    pub covered_labels: BTreeSet<String>,
    pub eval_seed: u64,
    pub n_eval: usize,
    pub eval_fingerprint: String,
    pub prompt: PromptConfig,
    pub constrained: bool,
    pub enforce_bio: bool,
    pub backend: String,
}

impl RunManifest {
    pub fn variant(&self) -> LabelVariant {
        self.labels.variant()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub sentence_id: String,
    pub words: Vec<String>,
    pub gold: Vec<String>,
    /// Same length as `gold`; [`MISSING`] past a format error.
    pub pred: Vec<String>,
    pub format_error_position: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    /// Gold tokens of the class (POS) or gold spans of the type.
    pub support: usize,
    pub correct: usize,
    pub predicted: usize,
    /// Class accuracy (POS) or type-restricted span F1.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub token_accuracy: f64,
    pub span: Option<Prf>,
    /// Keyed by class (POS) or entity type (BIO tasks).
    pub per_class: BTreeMap<String, ClassScore>,
    /// Over predicted positions only.
    pub confusion: ConfusionMatrix,
    pub format_errors: usize,
    pub untagged_tokens: usize,
    pub bio_violations: usize,
}

impl RunMetrics {
    pub fn compute(task: Task, classes: &[String], predictions: &[SentencePrediction]) -> Result<Self, MetricsError> {
        if predictions.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut confusion = ConfusionMatrix::new(classes.to_vec());
        let (mut n_tokens, mut hits, mut untagged) = (0, 0, 0);
        let mut per_class: BTreeMap<String, ClassScore> = BTreeMap::new();
        for p in predictions {
            if p.gold.len() != p.pred.len() {
                return Err(MetricsError::LengthMismatch {
                    gold: p.gold.len(),
                    pred: p.pred.len(),
                });
            }
            for (g, q) in p.gold.iter().zip(&p.pred) {
                n_tokens += 1;
                if g == q {
                    hits += 1;
                }
                if q == MISSING {
                    untagged += 1;
                } else {
                    confusion.add(g, q)?;
                }
                if !task.is_bio() {
                    let e = per_class.entry(g.clone()).or_insert(ClassScore {
                        support: 0,
                        correct: 0,
                        predicted: 0,
                        score: 0.0,
                    });
                    e.support += 1;
                    e.correct += usize::from(g == q);
                }
            }
        }
        if !task.is_bio() {
            for (j, class) in classes.iter().enumerate() {
                let predicted: u64 = confusion.counts.iter().map(|r| r[j]).sum();
                if let Some(e) = per_class.get_mut(class) {
                    e.predicted = predicted as usize;
                }
            }
            for e in per_class.values_mut() {
                e.score = e.correct as f64 / e.support as f64;
            }
        }

        let gold: Vec<&Vec<String>> = predictions.iter().map(|p| &p.gold).collect();
        let pred: Vec<&Vec<String>> = predictions.iter().map(|p| &p.pred).collect();
        let (span, bio_violations) = if task.is_bio() {
            let gold: Vec<Vec<&str>> = gold.iter().map(|g| g.iter().map(String::as_str).collect()).collect();
            let pred: Vec<Vec<&str>> = pred.iter().map(|g| g.iter().map(String::as_str).collect()).collect();
            let types: BTreeSet<String> = classes
                .iter()
                .filter_map(|c| c.split_once('-').map(|(_, t)| t.to_string()))
                .collect();
            for ty in types {
                let prf = span_f1_for_type(&gold, &pred, &ty)?;
                if prf.n_gold > 0 || prf.n_pred > 0 {
                    per_class.insert(
                        ty,
                        ClassScore {
                            support: prf.n_gold,
                            correct: prf.true_positives,
                            predicted: prf.n_pred,
                            score: prf.f1,
                        },
                    );
                }
            }
            let automaton = BioAutomaton::from_classes(classes)?;
            let violations = pred
                .iter()
                .map(|p| {
                    let tagged = p.iter().take_while(|t| **t != MISSING).count();
                    automaton.count_violations(&p[..tagged])
                })
                .sum();
            (Some(span_f1(&gold, &pred)?), violations)
        } else {
            (None, 0)
        };

        Ok(Self {
            n_sentences: predictions.len(),
            n_tokens,
            token_accuracy: hits as f64 / n_tokens as f64,
            span,
            per_class,
            confusion,
            format_errors: predictions.iter().filter(|p| p.format_error_position.is_some()).count(),
            untagged_tokens: untagged,
            bio_violations,
        })
    }

    /// Accuracy for POS, span F1 for BIO tasks.
    pub fn primary_score(&self) -> f64 {
        self.span.map_or(self.token_accuracy, |s| s.f1)
    }
}

/// One (demonstration set, label set, k) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub predictions: Vec<SentencePrediction>,
    pub metrics: Option<RunMetrics>,
    /// Set when the backend failed; such runs carry no metrics.
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<DecodeTrace>>,
}

impl RunResult {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none() && self.metrics.is_some()
    }
}

/// Tab-separated `sentence_id, index, word, gold, pred`, one token per line.
pub fn write_predictions(predictions: &[SentencePrediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        for (i, ((w, g), q)) in p.words.iter().zip(&p.gold).zip(&p.pred).enumerate() {
            let _ = writeln!(out, "{}\t{i}\t{w}\t{g}\t{q}", p.sentence_id);
        }
    }
    out
}

pub fn read_predictions(text: &str) -> Result<Vec<SentencePrediction>, MetricsError> {
    let mut out: Vec<SentencePrediction> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| MetricsError::PredictionFile {
            line: n + 1,
            message: m.to_string(),
        };
        if f.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let index: usize = f[1].parse().map_err(|_| bad("index is not a number"))?;
        let start_new = out.last().is_none_or(|p| p.sentence_id != f[0]);
        if start_new {
            if index != 0 {
                return Err(bad("sentence does not start at index 0"));
            }
            out.push(SentencePrediction {
                sentence_id: f[0].to_string(),
                words: Vec::new(),
                gold: Vec::new(),
                pred: Vec::new(),
                format_error_position: None,
            });
        }
        let p = out.last_mut().expect("pushed above");
        if index != p.words.len() {
            return Err(bad("token index out of sequence"));
        }
        p.words.push(f[2].to_string());
        p.gold.push(f[3].to_string());
        p.pred.push(f[4].to_string());
    }
    for p in &mut out {
        p.format_error_position = p.pred.iter().position(|t| t == MISSING);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over sqrt(m); absent for a single run.
    pub standard_error: Option<f64>,
}

impl Summary {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let standard_error = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
            var.sqrt() / m.sqrt()
        });
        Some(Self {
            values,
            mean,
            standard_error,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run_index: usize,
    pub message: String,
}

/// Statistics over the runs of one (task, label variant, k) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub task: Task,
    pub variant: LabelVariant,
    pub k: usize,
    pub metric: String,
    pub eval_fingerprint: String,
    pub n_runs: usize,
    pub failed_runs: Vec<FailedRun>,
    pub score: Summary,
    pub token_accuracy: Summary,
    pub span_f1: Option<Summary>,
    pub per_class: BTreeMap<String, Summary>,
    pub confusion_counts: ConfusionMatrix,
    pub confusion_display: Vec<Vec<f64>>,
    pub confusion_cells: CellSelection,
    pub spearman: Vec<PairwiseSpearman>,
    pub seen_unseen: BTreeMap<String, SeenUnseen>,
    pub true_label_errors: Option<TrueLabelErrors>,
    pub format_errors: usize,
    pub bio_violations: usize,
    pub baselines: Option<Baselines>,
}

impl AggregateReport {
    pub fn from_runs(runs: &[RunResult], cells: CellSelection) -> Result<Self, MetricsError> {
        let first = runs.first().ok_or(MetricsError::Empty)?;
        let m0 = &first.manifest;
        for r in runs {
            if r.manifest.task != m0.task {
                return Err(MetricsError::MixedTasks(m0.task, r.manifest.task));
            }
            if r.manifest.eval_fingerprint != m0.eval_fingerprint {
                return Err(MetricsError::Misaligned("runs were scored on different eval subsets".into()));
            }
        }
        let failed_runs = runs
            .iter()
            .filter(|r| !r.succeeded())
            .map(|r| FailedRun {
                run_index: r.manifest.run_index,
                message: r.failure.clone().unwrap_or_else(|| "no metrics".into()),
            })
            .collect();
        let ok: Vec<&RunResult> = runs.iter().filter(|r| r.succeeded()).collect();
        let metrics: Vec<&RunMetrics> = ok.iter().filter_map(|r| r.metrics.as_ref()).collect();
        if metrics.is_empty() {
            return Err(MetricsError::AllRunsFailed(runs.len()));
        }

        let score = Summary::new(metrics.iter().map(|m| m.primary_score()).collect()).expect("non-empty");
        let token_accuracy = Summary::new(metrics.iter().map(|m| m.token_accuracy).collect()).expect("non-empty");
        let span_f1 = Summary::new(metrics.iter().filter_map(|m| m.span.map(|s| s.f1)).collect());

        let keys: BTreeSet<&String> = metrics.iter().flat_map(|m| m.per_class.keys()).collect();
        let per_class = keys
            .into_iter()
            .filter_map(|k| {
                let vals = metrics.iter().filter_map(|m| m.per_class.get(k)).map(|c| c.score).collect();
                Summary::new(vals).map(|s| (k.clone(), s))
            })
            .collect();

        let mut confusion_counts = metrics[0].confusion.clone();
        for m in &metrics[1..] {
            confusion_counts.merge(&m.confusion)?;
        }
        let spearman = if metrics.len() >= 2 {
            let mats: Vec<ConfusionMatrix> = metrics.iter().map(|m| m.confusion.clone()).collect();
            confusion_spearman(&mats, cells)?
        } else {
            Vec::new()
        };

        let owned: Vec<RunResult> = ok.iter().map(|r| (*r).clone()).collect();
        let true_label_errors = if m0.variant() == LabelVariant::Shuffled {
            let original = original_labels_for(m0.task, m0.labels.classes())?;
            Some(true_label_error_fraction(&owned, &m0.labels, &original)?)
        } else {
            None
        };

        Ok(Self {
            task: m0.task,
            variant: m0.variant(),
            k: m0.k,
            metric: if m0.task.is_bio() { "span_f1" } else { "accuracy" }.into(),
            eval_fingerprint: m0.eval_fingerprint.clone(),
            n_runs: runs.len(),
            failed_runs,
            score,
            token_accuracy,
            span_f1,
            per_class,
            confusion_display: confusion_counts.display(),
            confusion_counts,
            confusion_cells: cells,
            spearman,
            seen_unseen: seen_unseen_split(&owned),
            true_label_errors,
            format_errors: metrics.iter().map(|m| m.format_errors).sum(),
            bio_violations: metrics.iter().map(|m| m.bio_violations).sum(),
            baselines: None,
        })
    }

    /// `class, mean, standard_error, seen, partial, unseen` rows.
    pub fn per_class_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "mean", "standard_error", "seen", "partial", "unseen"])
            .expect("in-memory write");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for (class, s) in &self.per_class {
            let su = self.seen_unseen.get(class);
            w.write_record([
                class.clone(),
                fmt(Some(s.mean)),
                fmt(s.standard_error),
                fmt(su.and_then(|x| x.seen)),
                fmt(su.and_then(|x| x.partial)),
                fmt(su.and_then(|x| x.unseen)),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// `run, score, token_accuracy` rows followed by mean and SE.
    pub fn runs_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["run", "score", "token_accuracy"]).expect("in-memory write");
        for (i, (s, a)) in self.score.values.iter().zip(&self.token_accuracy.values).enumerate() {
            w.write_record([i.to_string(), format!("{s:.6}"), format!("{a:.6}")])
                .expect("in-memory write");
        }
        let se = |s: &Summary| s.standard_error.map(|x| format!("{x:.6}")).unwrap_or_default();
        w.write_record(["mean".into(), format!("{:.6}", self.score.mean), format!("{:.6}", self.token_accuracy.mean)])
            .expect("in-memory write");
        w.write_record(["standard_error".into(), se(&self.score), se(&self.token_accuracy)])
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
