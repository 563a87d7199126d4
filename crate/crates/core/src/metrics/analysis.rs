use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::confusion::{spearman, SpearmanResult};
use super::report::{AggregateReport, RunResult, MISSING};
use super::MetricsError;
use crate::labelspace::{BioTag, LabelSet, LabelVariant};

/// Mean per-class score, bucketed by whether the demonstrations contained
/// the class. For BIO tasks the unit is the entity type and "partial" means
/// only some of its B-/I- classes were shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SeenUnseen {
    pub seen: Option<f64>,
    pub partial: Option<f64>,
    pub unseen: Option<f64>,
    pub seen_runs: usize,
    pub partial_runs: usize,
    pub unseen_runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bucket {
    Seen,
    Partial,
    Unseen,
}

pub fn seen_unseen_split(runs: &[RunResult]) -> BTreeMap<String, SeenUnseen> {
    let mut acc: BTreeMap<String, [Vec<f64>; 3]> = BTreeMap::new();
    for run in runs {
        let Some(metrics) = &run.metrics else { continue };
        let labels = &run.manifest.labels;
        let covered = &run.manifest.covered_labels;
        for (key, score) in &metrics.per_class {
            if score.support == 0 {
                continue;
            }
            let bucket = if labels.is_bio() {
                let members: Vec<&String> = labels
                    .classes()
                    .iter()
                    .filter(|c| BioTag::parse(c).and_then(|t| t.entity_type()) == Some(key.as_str()))
                    .collect();
                let shown = members.iter().filter(|c| covered.contains(**c)).count();
                match shown {
                    0 => Bucket::Unseen,
                    n if n == members.len() => Bucket::Seen,
                    _ => Bucket::Partial,
                }
            } else if covered.contains(key) {
                Bucket::Seen
            } else {
                Bucket::Unseen
            };
            let slot = match bucket {
                Bucket::Seen => 0,
                Bucket::Partial => 1,
                Bucket::Unseen => 2,
            };
            acc.entry(key.clone()).or_default()[slot].push(score.score);
        }
    }
    let mean = |v: &Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    acc.into_iter()
        .map(|(k, [s, p, u])| {
            (
                k,
                SeenUnseen {
                    seen: mean(&s),
                    partial: mean(&p),
                    unseen: mean(&u),
                    seen_runs: s.len(),
                    partial_runs: p.len(),
                    unseen_runs: u.len(),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub errors: usize,
    pub true_label: usize,
    pub fraction: Option<f64>,
}

impl ErrorTally {
    fn new(errors: usize, true_label: usize) -> Self {
        Self {
            errors,
            true_label,
            fraction: (errors > 0).then(|| true_label as f64 / errors as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueLabelErrors {
    pub overall: ErrorTally,
    /// Keyed by gold class.
    pub per_class: BTreeMap<String, ErrorTally>,
}

/// Among wrong predictions under shuffled labels, how many picked the class
/// whose shuffled surface is the gold class's original name, i.e. the model
/// wrote the true label instead of the demonstrated one.
pub fn true_label_error_fraction(
    runs: &[RunResult],
    shuffled: &LabelSet,
    original: &LabelSet,
) -> Result<TrueLabelErrors, MetricsError> {
    if shuffled.variant() != LabelVariant::Shuffled {
        return Err(MetricsError::WrongVariant(shuffled.variant()));
    }
    if shuffled.classes() != original.classes() {
        return Err(MetricsError::ShapeMismatch);
    }
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for run in runs {
        for p in &run.predictions {
            for (g, q) in p.gold.iter().zip(&p.pred) {
                if g == q || q == MISSING {
                    continue;
                }
                let e = per.entry(g.clone()).or_default();
                e.0 += 1;
                let g_orig = original.verbalize(g)?;
                let q_shuf = shuffled.verbalize(q)?;
                if q_shuf == g_orig {
                    e.1 += 1;
                }
            }
        }
    }
    let errors = per.values().map(|v| v.0).sum();
    let true_label = per.values().map(|v| v.1).sum();
    Ok(TrueLabelErrors {
        overall: ErrorTally::new(errors, true_label),
        per_class: per.into_iter().map(|(k, (e, t))| (k, ErrorTally::new(e, t))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub row: String,
    pub column: String,
    /// Mean score of `column` minus mean score of `row`.
    pub delta: f64,
    /// Spearman over the per-class scores both variants report.
    pub spearman: SpearmanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSetComparison {
    pub variants: Vec<String>,
    pub means: Vec<f64>,
    pub entries: Vec<DeltaEntry>,
}

impl LabelSetComparison {
    pub fn entry(&self, row: &str, column: &str) -> Option<&DeltaEntry> {
        self.entries.iter().find(|e| e.row == row && e.column == column)
    }

    /// Square tables of deltas and ρ, rows and columns in variant order.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "column", "delta", "spearman_rho", "spearman_p"])
            .expect("in-memory write");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for e in &self.entries {
            w.write_record([
                e.row.clone(),
                e.column.clone(),
                format!("{:.6}", e.delta),
                fmt(e.spearman.rho),
                fmt(e.spearman.p_value),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// All ordered pairs (including each variant with itself) of mean-score
/// deltas and per-class rank correlations.
pub fn label_set_comparison(reports: &[(String, AggregateReport)]) -> Result<LabelSetComparison, MetricsError> {
    let (_, first) = reports.first().ok_or(MetricsError::Empty)?;
    for (_, r) in reports {
        if r.eval_fingerprint != first.eval_fingerprint {
            return Err(MetricsError::Misaligned("label sets were scored on different eval subsets".into()));
        }
    }
    let mut entries = Vec::new();
    for (row_name, row) in reports {
        for (col_name, col) in reports {
            let shared: Vec<&String> = row.per_class.keys().filter(|k| col.per_class.contains_key(*k)).collect();
            let x: Vec<f64> = shared.iter().map(|k| row.per_class[*k].mean).collect();
            let y: Vec<f64> = shared.iter().map(|k| col.per_class[*k].mean).collect();
            entries.push(DeltaEntry {
                row: row_name.clone(),
                column: col_name.clone(),
                delta: col.score.mean - row.score.mean,
                spearman: spearman(&x, &y)?,
            });
        }
    }
    Ok(LabelSetComparison {
        variants: reports.iter().map(|(n, _)| n.clone()).collect(),
        means: reports.iter().map(|(_, r)| r.score.mean).collect(),
        entries,
    })
}
