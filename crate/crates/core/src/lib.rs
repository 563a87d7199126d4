//! Structured prompting: few-shot sequence tagging with autoregressive
//! language models.
//!
//! A sentence is tagged one word at a time. At step `t` the prompt holds the
//! demonstrations, the full sentence, and the words tagged so far; the word
//! `s_t` is appended and every allowed label surface is scored by its mean
//! token log-probability. The best label is appended and decoding moves on,
//! so a whole sentence is tagged in a single append-only pass over one
//! scoring session.
//!
//! Modules:
//!
//! * [`corpus`]: CoNLL-U / CoNLL column readers, demonstration and
//!   evaluation-subset sampling.
//! * [`labelspace`]: label inventories, verbalizers, label-set variants and
//!   the BIO transition automaton.
//! * [`prompt`]: exact prompt rendering and the incremental prompt state.
//! * [`backend`]: the scoring-session abstraction, a lexicon mock model and
//!   an HTTP client/server pair.
//! * [`decoder`]: constrained and unconstrained tagging, experiment runs.
//! * [`metrics`]: accuracy, conlleval-style span F1, baselines, confusion
//!   analysis and label-set comparisons.
//! * [`pilescan`]: corpus scanning for label occurrences and test leakage.
//! * [`synthetic`]: seeded toy corpora for tests and smoke runs.

pub mod backend;
pub mod corpus;
pub mod decoder;
pub mod labelspace;
pub mod metrics;
pub mod pilescan;
pub mod prompt;
pub mod rng;
pub mod synthetic;

mod io;

pub use backend::{open_session, BackendError, CandidateScore, LanguageModel, ScoringSession};
pub use corpus::{DemonstrationSet, TaggedSentence, Task, TaskDataset};
pub use decoder::{DecodeConfig, DecodeTrace};
pub use labelspace::{BioAutomaton, LabelSet, LabelVariant};
pub use metrics::{AggregateReport, RunResult, Span};
pub use prompt::{PromptConfig, PromptState};
