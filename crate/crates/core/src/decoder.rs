//! Structured prompting: tag a sentence one word at a time, scoring the
//! allowed label surfaces after each word and feeding the winner back into
//! the prompt. Also the unconstrained mode, where the model writes the whole
//! Tagged line and the output is parsed strictly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{open_session, BackendError, LanguageModel};
use crate::corpus::{sample_demonstrations, sample_eval_subset, CorpusError, TaggedSentence, TaskDataset, DEFAULT_MAX_ATTEMPTS};
use crate::labelspace::{BioAutomaton, LabelError, LabelSet};
use crate::metrics::{
    eval_fingerprint, MetricsError, RunManifest, RunMetrics, RunResult, SentencePrediction, ARTIFACT_VERSION, MISSING,
};
use crate::prompt::{parse_tagged_line, PromptConfig, PromptError, PromptState};
use crate::rng::mix64;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid decode configuration: {0}")]
    Config(String),
    #[error("cannot tag an empty sentence")]
    EmptySentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub constrained: bool,
    pub enforce_bio: bool,
    pub label_set: LabelSet,
    pub prompt_config: PromptConfig,
    /// Generation budget per word in unconstrained mode.
    pub max_tokens_per_word: usize,
}

impl DecodeConfig {
    /// Constrained decoding, with BIO enforcement whenever the labels are BIO.
    pub fn new(label_set: LabelSet) -> Self {
        Self {
            constrained: true,
            enforce_bio: label_set.is_bio(),
            label_set,
            prompt_config: PromptConfig::default(),
            max_tokens_per_word: 32,
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.enforce_bio && !self.label_set.is_bio() {
            return Err(DecodeError::Config("enforce_bio requires a BIO label set".into()));
        }
        if self.label_set.is_empty() {
            return Err(DecodeError::Config("label set is empty".into()));
        }
        if self.max_tokens_per_word == 0 {
            return Err(DecodeError::Config("max_tokens_per_word must be at least 1".into()));
        }
        self.prompt_config.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub word: String,
    /// Allowed classes, inventory order.
    pub allowed: Vec<String>,
    /// Mean log-probability of each allowed class's surface.
    pub scores: Vec<f64>,
    pub chosen: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DecodeTrace {
    pub sentence_id: String,
    pub steps: Vec<StepRecord>,
    pub format_error_position: Option<usize>,
    /// Raw model output (unconstrained mode).
    pub generated: Option<String>,
    pub append_count: usize,
}

/// Index of the maximum; the earliest wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Constrained structured prompting over one sentence.
pub fn tag_sentence(
    model: &dyn LanguageModel,
    demonstrations: &[TaggedSentence],
    words: &[String],
    config: &DecodeConfig,
) -> Result<(Vec<String>, DecodeTrace), DecodeError> {
    if words.is_empty() {
        return Err(DecodeError::EmptySentence);
    }
    let labels = &config.label_set;
    let automaton = if config.enforce_bio {
        Some(BioAutomaton::new(labels)?)
    } else {
        None
    };
    let all: Vec<usize> = (0..labels.len()).collect();

    let mut state = PromptState::start(&config.prompt_config, labels, demonstrations, words)?;
    let mut session = open_session(model, "")?;
    session.append(state.rendered_prefix());

    let mut prev: Option<usize> = None;
    let mut predictions = Vec::with_capacity(words.len());
    let mut steps = Vec::with_capacity(words.len());
    for word in words {
        let cue = state.pending_cue().expect("word pending");
        session.append(&cue);
        let allowed = match &automaton {
            Some(a) => a.allowed_indices(prev),
            None => all.clone(),
        };
        let candidates: Vec<String> = allowed.iter().map(|&i| labels.surface(i).to_string()).collect();
        let scores: Vec<f64> = session
            .score_candidates(&candidates)?
            .into_iter()
            .map(|s| s.mean_logprob)
            .collect();
        let pick = allowed[argmax(&scores)];
        let surface = labels.surface(pick);
        session.append(surface);
        state = state.advance(word, surface)?;
        debug_assert_eq!(session.committed_prefix(), state.rendered_prefix());

        predictions.push(labels.class(pick).to_string());
        steps.push(StepRecord {
            word: word.clone(),
            allowed: allowed.iter().map(|&i| labels.class(i).to_string()).collect(),
            scores,
            chosen: labels.class(pick).to_string(),
        });
        prev = Some(pick);
    }
    Ok((
        predictions,
        DecodeTrace {
            steps,
            append_count: session.append_count(),
            ..DecodeTrace::default()
        },
    ))
}

/// One greedy generation of the whole Tagged line, parsed up to the first
/// format error. Returns only the parsed predictions.
pub fn tag_sentence_unconstrained(
    model: &dyn LanguageModel,
    demonstrations: &[TaggedSentence],
    words: &[String],
    config: &DecodeConfig,
) -> Result<(Vec<String>, DecodeTrace), DecodeError> {
    if config.constrained {
        return Err(DecodeError::Config("unconstrained decoding requested with constrained=true".into()));
    }
    if words.is_empty() {
        return Err(DecodeError::EmptySentence);
    }
    let labels = &config.label_set;
    let state = PromptState::start(&config.prompt_config, labels, demonstrations, words)?;
    let mut session = open_session(model, "")?;
    session.append(state.rendered_prefix());
    let budget = config.max_tokens_per_word * words.len() + 8;
    let generation = session.generate_greedy("\n", budget)?;
    let parsed = parse_tagged_line(&generation.text, words, labels, &config.prompt_config);
    let predictions: Vec<String> = parsed.classes.iter().map(|&i| labels.class(i).to_string()).collect();
    Ok((
        predictions,
        DecodeTrace {
            format_error_position: parsed.format_error_position,
            generated: Some(generation.text),
            append_count: session.append_count(),
            ..DecodeTrace::default()
        },
    ))
}

/// Dispatches on `config.constrained`.
pub fn decode(
    model: &dyn LanguageModel,
    demonstrations: &[TaggedSentence],
    words: &[String],
    config: &DecodeConfig,
) -> Result<(Vec<String>, DecodeTrace), DecodeError> {
    if config.constrained {
        tag_sentence(model, demonstrations, words, config)
    } else {
        tag_sentence_unconstrained(model, demonstrations, words, config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub k: usize,
    pub m: usize,
    pub n_eval: usize,
    pub eval_seed: u64,
    /// One per run; see [`default_demo_seeds`].
    pub demo_seeds: Vec<u64>,
    /// Seed that produced a shuffled label set, recorded in manifests.
    pub label_seed: Option<u64>,
    pub max_attempts: usize,
    pub workers: usize,
    pub keep_traces: bool,
}

impl ExperimentSpec {
    /// k=10, m=5, n_eval=1000.
    pub fn new(seed: u64) -> Self {
        Self {
            k: 10,
            m: 5,
            n_eval: 1000,
            eval_seed: seed,
            demo_seeds: default_demo_seeds(seed, 5),
            label_seed: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            workers: 1,
            keep_traces: false,
        }
    }

    pub fn with_runs(mut self, m: usize, seed: u64) -> Self {
        self.m = m;
        self.demo_seeds = default_demo_seeds(seed, m);
        self
    }

    /// Runs actually executed: a single one when there are no demonstrations
    /// to vary.
    pub fn effective_runs(&self) -> usize {
        if self.k == 0 {
            1
        } else {
            self.m
        }
    }
}

pub fn default_demo_seeds(seed: u64, m: usize) -> Vec<u64> {
    (0..m as u64).map(|i| mix64(seed ^ mix64(i + 1))).collect()
}

/// Runs `m` demonstration draws over one fixed evaluation subset.
///
/// Configuration and sampling errors abort the experiment. A backend error
/// marks that run failed and the remaining runs still execute.
pub fn run_experiment(
    model: &dyn LanguageModel,
    dataset: &TaskDataset,
    spec: &ExperimentSpec,
    config: &DecodeConfig,
) -> Result<Vec<RunResult>, DecodeError> {
    config.validate()?;
    if spec.m == 0 {
        return Err(DecodeError::Config("m must be at least 1".into()));
    }
    let runs = spec.effective_runs();
    if spec.demo_seeds.len() < runs {
        return Err(DecodeError::Config(format!(
            "{} demonstration seeds for {runs} runs",
            spec.demo_seeds.len()
        )));
    }
    if let Some(missing) = dataset
        .label_inventory
        .iter()
        .find(|c| !config.label_set.contains(c))
    {
        return Err(DecodeError::Config(format!("dataset class `{missing}` is not in the label set")));
    }
    let eval = sample_eval_subset(dataset, spec.n_eval, spec.eval_seed)?;
    let ids: Vec<&str> = eval.iter().map(|s| s.sentence_id.as_str()).collect();
    let fingerprint = eval_fingerprint(&ids);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| DecodeError::Config(e.to_string()))?;

    let mut results = Vec::with_capacity(runs);
    for run_index in 0..runs {
        let demo_seed = spec.demo_seeds[run_index];
        let demos = sample_demonstrations(dataset, spec.k, demo_seed, spec.max_attempts)?;
        let manifest = RunManifest {
            artifact_version: ARTIFACT_VERSION.into(),
            task: dataset.task,
            labels: config.label_set.clone(),
            label_seed: spec.label_seed,
            k: spec.k,
            run_index,
            demo_seed,
            demonstration_ids: demos.sentence_ids().iter().map(|s| s.to_string()).collect(),
            covered_labels: demos.covered_labels.clone(),
            eval_seed: spec.eval_seed,
            n_eval: spec.n_eval,
            eval_fingerprint: fingerprint.clone(),
            prompt: config.prompt_config.clone(),
            constrained: config.constrained,
            enforce_bio: config.enforce_bio,
            backend: model.identity(),
        };
        log::info!(
            "run {run_index}: k={} seed={demo_seed} covered {}/{} labels",
            spec.k,
            demos.covered_labels.len(),
            dataset.label_inventory.len()
        );

        let decoded: Result<Vec<(SentencePrediction, DecodeTrace)>, DecodeError> = pool.install(|| {
            eval.par_iter()
                .map(|s| {
                    let (mut pred, mut trace) = decode(model, &demos.sentences, &s.words, config)?;
                    trace.sentence_id = s.sentence_id.clone();
                    pred.resize(s.len(), MISSING.to_string());
                    Ok((
                        SentencePrediction {
                            sentence_id: s.sentence_id.clone(),
                            words: s.words.clone(),
                            gold: s.gold_tags.clone(),
                            pred,
                            format_error_position: trace.format_error_position,
                        },
                        trace,
                    ))
                })
                .collect()
        });

        let result = match decoded {
            Ok(pairs) => {
                let (predictions, traces): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
                let metrics = RunMetrics::compute(dataset.task, config.label_set.classes(), &predictions)?;
                RunResult {
                    manifest,
                    predictions,
                    metrics: Some(metrics),
                    failure: None,
                    traces: spec.keep_traces.then_some(traces),
                }
            }
            Err(DecodeError::Backend(e)) => {
                log::error!("run {run_index} failed: {e}");
                RunResult {
                    manifest,
                    predictions: Vec::new(),
                    metrics: None,
                    failure: Some(e.to_string()),
                    traces: None,
                }
            }
            Err(other) => return Err(other),
        };
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CandidateScore, Generation, MockLm, MockMode};
    use crate::corpus::{Task, WordLexicon};
    use crate::labelspace::original_labels;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    fn pos_mock() -> MockLm {
        let mut lex = WordLexicon::default();
        for (w, t) in [("The", "DET"), ("dog", "NOUN"), ("ran", "VERB"), ("home", "ADV")] {
            lex.insert(w, t);
        }
        MockLm::new(lex, original_labels(Task::Pos))
    }

    #[test]
    fn constrained_follows_lexicon() {
        let m = pos_mock();
        let cfg = DecodeConfig::new(original_labels(Task::Pos));
        let (pred, trace) = tag_sentence(&m, &[], &words(&["The", "dog", "ran", "home"]), &cfg).unwrap();
        assert_eq!(pred, ["DET", "NOUN", "VERB", "ADV"]);
        assert_eq!(trace.append_count, 1 + 2 * 4);
        assert!(trace.steps.iter().all(|s| s.allowed.contains(&s.chosen)));
    }

    #[test]
    fn uniform_picks_first_class() {
        let m = pos_mock();
        let cfg = DecodeConfig::new(original_labels(Task::Pos));
        let (pred, _) = tag_sentence(&m, &[], &words(&["zzz"]), &cfg).unwrap();
        assert_eq!(pred, ["ADJ"]);
    }

    #[test]
    fn bio_enforced_against_adversary() {
        let ner = original_labels(Task::Ner);
        let adversary = MockLm::new(WordLexicon::default(), ner.clone())
            .with_mode(MockMode::Preference(vec!["I-LOC".into(), "I-PER".into(), "B-PER".into()]));
        let ws = words(&["a", "b", "c"]);
        let mut cfg = DecodeConfig::new(ner.clone());
        let (pred, _) = tag_sentence(&adversary, &[], &ws, &cfg).unwrap();
        assert_eq!(pred, ["B-PER", "I-PER", "I-PER"]);
        let automaton = BioAutomaton::new(&ner).unwrap();
        assert!(automaton.accepts(&pred));
        cfg.enforce_bio = false;
        let (pred, _) = tag_sentence(&adversary, &[], &ws, &cfg).unwrap();
        assert_eq!(pred, ["I-LOC", "I-LOC", "I-LOC"]);
        assert_eq!(automaton.count_violations(&pred), 1);
    }

    #[test]
    fn enforce_bio_needs_bio_labels() {
        let mut cfg = DecodeConfig::new(original_labels(Task::Pos));
        cfg.enforce_bio = true;
        assert!(matches!(cfg.validate(), Err(DecodeError::Config(_))));
    }

    #[test]
    fn unconstrained_matches_constrained_on_mock() {
        let m = pos_mock();
        let mut cfg = DecodeConfig::new(original_labels(Task::Pos));
        let ws = words(&["The", "dog", "ran"]);
        let (a, _) = tag_sentence(&m, &[], &ws, &cfg).unwrap();
        cfg.constrained = false;
        let (b, trace) = tag_sentence_unconstrained(&m, &[], &ws, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace.format_error_position, None);
        assert_eq!(trace.generated.as_deref(), Some(" The/DET dog/NOUN ran/VERB"));
    }

    struct Scripted(&'static str);

    impl LanguageModel for Scripted {
        fn identity(&self) -> String {
            "scripted".into()
        }
        fn score(&self, _: &str, c: &[String]) -> Result<Vec<CandidateScore>, BackendError> {
            c.iter().map(|x| CandidateScore::new(x.clone(), vec![], vec![-1.0])).collect()
        }
        fn generate(&self, _: &str, _: &str, _: usize) -> Result<Generation, BackendError> {
            Ok(Generation { text: self.0.into(), truncated: false })
        }
    }

    #[test]
    fn unconstrained_format_errors() {
        let mut cfg = DecodeConfig::new(original_labels(Task::Pos));
        cfg.constrained = false;
        let ws = words(&["The", "dog", "ran"]);
        let (p, t) = tag_sentence_unconstrained(&Scripted(" The/DET canine/NOUN ran/VERB"), &[], &ws, &cfg).unwrap();
        assert_eq!(p, ["DET"]);
        assert_eq!(t.format_error_position, Some(1));
        let (p, t) = tag_sentence_unconstrained(&Scripted("garbage"), &[], &ws, &cfg).unwrap();
        assert!(p.is_empty());
        assert_eq!(t.format_error_position, Some(0));
    }

    struct FailAfter {
        inner: MockLm,
        calls: AtomicUsize,
        limit: usize,
    }

    impl LanguageModel for FailAfter {
        fn identity(&self) -> String {
            "flaky".into()
        }
        fn score(&self, p: &str, c: &[String]) -> Result<Vec<CandidateScore>, BackendError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
                return Err(BackendError::Connection("gone".into()));
            }
            self.inner.score(p, c)
        }
        fn generate(&self, p: &str, s: &str, n: usize) -> Result<Generation, BackendError> {
            self.inner.generate(p, s, n)
        }
    }

    fn toy_dataset() -> TaskDataset {
        let mk = |id: String, w: &[&str], t: &[&str]| {
            TaggedSentence::new(id, words(w), t.iter().map(|s| s.to_string()).collect()).unwrap()
        };
        let train = (0..20)
            .map(|i| mk(format!("tr{i}"), &["The", "dog", "ran"], &["DET", "NOUN", "VERB"]))
            .collect();
        let test = (0..8)
            .map(|i| mk(format!("te{i}"), &["The", "dog", "ran", "home"], &["DET", "NOUN", "VERB", "ADV"]))
            .collect();
        TaskDataset::new(Task::Pos, train, test).unwrap()
    }

    #[test]
    fn experiment_is_deterministic() {
        let ds = toy_dataset();
        let m = MockLm::from_training(&ds.train, original_labels(Task::Pos));
        let mut spec = ExperimentSpec::new(4).with_runs(3, 4);
        spec.k = 2;
        spec.n_eval = 5;
        spec.workers = 3;
        let cfg = DecodeConfig::new(original_labels(Task::Pos));
        let a = run_experiment(&m, &ds, &spec, &cfg).unwrap();
        spec.workers = 1;
        let b = run_experiment(&m, &ds, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|r| r.manifest.eval_fingerprint == a[0].manifest.eval_fingerprint));
        // "home" is unseen in train: uniform → ADJ.
        assert_eq!(a[0].metrics.as_ref().unwrap().token_accuracy, 0.75);
    }

    #[test]
    fn zero_shot_collapses_to_one_run() {
        let ds = toy_dataset();
        let m = MockLm::from_training(&ds.train, original_labels(Task::Pos));
        let mut spec = ExperimentSpec::new(1);
        spec.k = 0;
        spec.n_eval = 3;
        let runs = run_experiment(&m, &ds, &spec, &DecodeConfig::new(original_labels(Task::Pos))).unwrap();
        assert_eq!(runs.len(), 1);
        assert!(runs[0].manifest.demonstration_ids.is_empty());
    }

    #[test]
    fn backend_failure_marks_run() {
        let ds = toy_dataset();
        let flaky = FailAfter {
            inner: MockLm::from_training(&ds.train, original_labels(Task::Pos)),
            calls: AtomicUsize::new(0),
            limit: 4 * 2,
        };
        let mut spec = ExperimentSpec::new(2).with_runs(2, 2);
        spec.k = 1;
        spec.n_eval = 2;
        let runs = run_experiment(&flaky, &ds, &spec, &DecodeConfig::new(original_labels(Task::Pos))).unwrap();
        assert!(runs[0].succeeded());
        assert!(!runs[1].succeeded());
        assert!(runs[1].failure.as_deref().unwrap().contains("gone"));
    }

    #[test]
    fn label_set_must_cover_dataset() {
        let ds = toy_dataset();
        let m = MockLm::from_training(&ds.train, original_labels(Task::Pos));
        let err = run_experiment(&m, &ds, &ExperimentSpec::new(0), &DecodeConfig::new(original_labels(Task::Ner)));
        assert!(matches!(err, Err(DecodeError::Config(_))));
    }
}
