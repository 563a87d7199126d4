//! Experiment manifests: the JSON file a `tag` run is driven by, and the
//! resolved copy written next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use structprompt::backend::{HttpBackend, HttpConfig, LanguageModel, MockLm, MockMode};
use structprompt::corpus::{DatasetFormat, DatasetManifest, TaskDataset, WordLexicon, DEFAULT_MAX_ATTEMPTS};
use structprompt::decoder::{default_demo_seeds, DecodeConfig, ExperimentSpec};
use structprompt::labelspace::{
    original_labels_for, proxy_labels, shuffle_labels, words_labels, LabelSet, LabelVariant, Task,
};
use structprompt::prompt::PromptConfig;

use crate::error::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// First proxy integer, so every POS label is two digits.
pub const PROXY_START: u64 = 11;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendDescriptor {
    /// Lexicon mock; the lexicon defaults to the train split's majority tags.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lexicon: Option<PathBuf>,
        /// `lexicon` or `random:<seed>`.
        #[serde(default = "default_mock_mode")]
        mode: String,
    },
    Http { url: String },
}

fn default_mock_mode() -> String {
    "lexicon".into()
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        BackendDescriptor::Mock {
            lexicon: None,
            mode: default_mock_mode(),
        }
    }
}

pub fn parse_mock_mode(s: &str) -> Result<MockMode, CliError> {
    match s.split_once(':') {
        None if s == "lexicon" => Ok(MockMode::Lexicon),
        Some(("random", seed)) => seed
            .parse()
            .map(|seed| MockMode::Random { seed })
            .map_err(|_| CliError::config(format!("backend.mode: bad seed in `{s}`"))),
        _ => Err(CliError::config(format!(
            "backend.mode: expected `lexicon` or `random:<seed>`, got `{s}`"
        ))),
    }
}

/// Everything that determines a run. With the same backend, the resolved
/// manifest reproduces prediction files byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default = "artifact_version")]
    pub artifact_version: String,
    pub task: Task,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DatasetFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_column: Option<usize>,
    #[serde(default = "original")]
    pub variant: LabelVariant,
    /// Derangement seed for the shuffled variant.
    #[serde(default)]
    pub label_seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default)]
    pub eval_seed: u64,
    /// Filled from `eval_seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_seeds: Option<Vec<u64>>,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default = "yes")]
    pub constrained: bool,
    /// Defaults to on for BIO tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enforce_bio: Option<bool>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens_per_word: usize,
    #[serde(default)]
    pub backend: BackendDescriptor,
    #[serde(default = "one")]
    pub workers: usize,
}

fn artifact_version() -> String {
    ARTIFACT_VERSION.into()
}
fn original() -> LabelVariant {
    LabelVariant::Original
}
fn default_k() -> usize {
    10
}
fn default_m() -> usize {
    5
}
fn default_n_eval() -> usize {
    1000
}
fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}
fn yes() -> bool {
    true
}
fn default_max_tokens() -> usize {
    32
}
fn one() -> usize {
    1
}

impl ExperimentManifest {
    #[cfg(test)]
    pub fn new(task: Task, train_path: PathBuf, test_path: PathBuf) -> Self {
        serde_json::from_value(serde_json::json!({
            "task": task,
            "train_path": train_path,
            "test_path": test_path,
        }))
        .expect("defaults deserialize")
    }

    /// Parses `path` and makes relative paths absolute against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut m: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
        m.train_path = base.join(&m.train_path);
        m.test_path = base.join(&m.test_path);
        if let BackendDescriptor::Mock { lexicon: Some(l), .. } = &mut m.backend {
            *l = base.join(&*l);
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Checks fields that need no file access.
    pub fn validate(&self) -> Result<(), CliError> {
        for (field, p) in [("train_path", &self.train_path), ("test_path", &self.test_path)] {
            if !p.is_file() {
                return Err(CliError::config(format!("{field}: {} does not exist", p.display())));
            }
        }
        if let BackendDescriptor::Mock { lexicon, mode } = &self.backend {
            if let Some(l) = lexicon {
                if !l.is_file() {
                    return Err(CliError::config(format!("backend.lexicon: {} does not exist", l.display())));
                }
            }
            parse_mock_mode(mode)?;
        }
        if self.m == 0 {
            return Err(CliError::config("m: must be at least 1"));
        }
        if self.workers == 0 {
            return Err(CliError::config("workers: must be at least 1"));
        }
        if let Some(seeds) = &self.demo_seeds {
            if seeds.len() < self.m {
                return Err(CliError::config(format!("demo_seeds: {} seeds for m={}", seeds.len(), self.m)));
            }
        }
        Ok(())
    }

    pub fn dataset_manifest(&self) -> DatasetManifest {
        let mut d = DatasetManifest::new(self.task, self.train_path.clone(), self.test_path.clone());
        if let Some(f) = self.format {
            d.format = f;
        }
        d.tag_column = self.tag_column;
        d
    }

    pub fn load_dataset(&self) -> Result<TaskDataset, CliError> {
        self.validate()?;
        let ds = self.dataset_manifest().load_dataset()?;
        if ds.task != self.task {
            return Err(CliError::config(format!("task: dataset is {}, manifest says {}", ds.task, self.task)));
        }
        Ok(ds)
    }

    /// Fills in demonstration seeds and clamps `n_eval` to the test split.
    pub fn resolve(&mut self, ds: &TaskDataset) {
        if self.n_eval > ds.test.len() {
            log::warn!("n_eval {} exceeds the test split; using {}", self.n_eval, ds.test.len());
            self.n_eval = ds.test.len();
        }
        if self.demo_seeds.is_none() {
            self.demo_seeds = Some(default_demo_seeds(self.eval_seed, self.m));
        }
    }

    pub fn labels(&self, ds: &TaskDataset) -> Result<LabelSet, CliError> {
        let base = original_labels_for(self.task, &ds.label_inventory)?;
        Ok(match self.variant {
            LabelVariant::Original => base,
            LabelVariant::Shuffled => shuffle_labels(&base, self.label_seed)?,
            LabelVariant::Proxy => proxy_labels(&base, PROXY_START)?,
            LabelVariant::Words => words_labels(&base)?,
        })
    }

    pub fn spec(&self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(self.eval_seed).with_runs(self.m, self.eval_seed);
        spec.k = self.k;
        spec.n_eval = self.n_eval;
        if let Some(seeds) = &self.demo_seeds {
            spec.demo_seeds = seeds.clone();
        }
        spec.label_seed = (self.variant == LabelVariant::Shuffled).then_some(self.label_seed);
        spec.max_attempts = self.max_attempts;
        spec.workers = self.workers;
        spec
    }

    pub fn decode_config(&self, labels: LabelSet) -> DecodeConfig {
        let mut cfg = DecodeConfig::new(labels);
        cfg.constrained = self.constrained;
        if let Some(b) = self.enforce_bio {
            cfg.enforce_bio = b && cfg.label_set.is_bio();
        }
        cfg.prompt_config = self.prompt.clone();
        cfg.max_tokens_per_word = self.max_tokens_per_word;
        cfg
    }

    pub fn backend(&self, ds: &TaskDataset, labels: &LabelSet) -> Result<Arc<dyn LanguageModel>, CliError> {
        match &self.backend {
            BackendDescriptor::Http { url } => {
                Ok(Arc::new(HttpBackend::connect(HttpConfig::new(url.clone()))?))
            }
            BackendDescriptor::Mock { lexicon, mode } => {
                let mock = match lexicon {
                    Some(path) => MockLm::new(read_lexicon(path)?, labels.clone()),
                    None => MockLm::from_training(&ds.train, labels.clone()),
                };
                Ok(Arc::new(
                    mock.with_mode(parse_mock_mode(mode)?)
                        .with_prompt_config(self.prompt.clone()),
                ))
            }
        }
    }
}

pub fn read_lexicon(path: &Path) -> Result<WordLexicon, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(WordLexicon::from_tsv(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let m = ExperimentManifest::new(Task::Pos, "a".into(), "b".into());
        assert_eq!((m.k, m.m, m.n_eval), (10, 5, 1000));
        assert!(m.constrained);
        assert_eq!(m.backend, BackendDescriptor::default());
        assert_eq!(m.variant, LabelVariant::Original);
    }

    #[test]
    fn json_round_trip() {
        let mut m = ExperimentManifest::new(Task::Ner, "train.txt".into(), "test.txt".into());
        m.backend = BackendDescriptor::Http {
            url: "http://localhost:1".into(),
        };
        m.demo_seeds = Some(vec![1, 2]);
        let back: ExperimentManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: Result<ExperimentManifest, _> =
            serde_json::from_str(r#"{"task":"pos","train_path":"a","test_path":"b","kk":3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn mock_modes() {
        assert_eq!(parse_mock_mode("lexicon").unwrap(), MockMode::Lexicon);
        assert_eq!(parse_mock_mode("random:7").unwrap(), MockMode::Random { seed: 7 });
        assert!(parse_mock_mode("random:x").is_err());
        assert!(parse_mock_mode("other").is_err());
    }

    #[test]
    fn missing_path_names_field() {
        let m = ExperimentManifest::new(Task::Pos, "/nonexistent/train".into(), "/nonexistent/test".into());
        let e = m.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("train_path"));
    }
}
