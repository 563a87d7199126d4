//! Accuracy, conlleval-compatible span F1, baselines, confusion analysis and
//! label-set comparisons.

mod analysis;
mod confusion;
mod report;
mod scoring;

use thiserror::Error;

use crate::labelspace::{LabelError, LabelVariant, Task};

pub use analysis::{
    label_set_comparison, seen_unseen_split, true_label_error_fraction, DeltaEntry, ErrorTally,
    LabelSetComparison, SeenUnseen, TrueLabelErrors,
};
pub use confusion::{
    average_ranks, confusion_spearman, spearman, CellSelection, ConfusionMatrix, PairwiseSpearman,
    SpearmanResult,
};
pub use report::{
    eval_fingerprint, read_predictions, write_predictions, AggregateReport, ClassScore, FailedRun,
    RunManifest, RunMetrics, RunResult, SentencePrediction, Summary, ARTIFACT_VERSION, MISSING,
};
pub use scoring::{
    extract_spans, majority_baselines, span_f1, span_f1_for_type, task_score, token_accuracy,
    Baselines, Prf, Span,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {gold} gold vs {pred} predicted")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("nothing to score")]
    Empty,
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("matrices have different class inventories")]
    ShapeMismatch,
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("expected shuffled labels, got {0}")]
    WrongVariant(LabelVariant),
    #[error("runs mix tasks {0} and {1}")]
    MixedTasks(Task, Task),
    #[error("all {0} runs failed")]
    AllRunsFailed(usize),
    #[error("prediction file line {line}: {message}")]
    PredictionFile { line: usize, message: String },
    #[error(transparent)]
    Label(#[from] LabelError),
}
