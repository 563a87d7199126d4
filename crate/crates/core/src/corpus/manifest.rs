use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_conll_columns, parse_conllu, CorpusError, TaggedSentence, Task, TaskDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Conllu,
    Columns,
}

/// Where a task's splits live and how to read them.
///
/// On disk this is a `key=value` text file with keys `task`, `train_path`,
/// `test_path` and optional `tag_column` / `format`. Relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub format: DatasetFormat,
    pub tag_column: Option<usize>,
}

impl DatasetManifest {
    pub fn new(task: Task, train_path: PathBuf, test_path: PathBuf) -> Self {
        Self {
            task,
            train_path,
            test_path,
            format: default_format(task),
            tag_column: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CorpusError> {
        let mut task = None;
        let mut train = None;
        let mut test = None;
        let mut tag_column = None;
        let mut format = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CorpusError::Manifest(format!("line {}: expected key=value", i + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "task" => {
                    task = Some(
                        value
                            .parse::<Task>()
                            .map_err(|e| CorpusError::Manifest(format!("task: {e}")))?,
                    )
                }
                "train_path" => train = Some(base_dir.join(value)),
                "test_path" => test = Some(base_dir.join(value)),
                "tag_column" => {
                    tag_column = Some(value.parse::<usize>().map_err(|_| {
                        CorpusError::Manifest(format!("tag_column: `{value}` is not an index"))
                    })?)
                }
                "format" => {
                    format = Some(match value {
                        "conllu" => DatasetFormat::Conllu,
                        "columns" | "conll" => DatasetFormat::Columns,
                        other => {
                            return Err(CorpusError::Manifest(format!(
                                "format: unknown value `{other}`"
                            )))
                        }
                    })
                }
                other => {
                    return Err(CorpusError::Manifest(format!("unknown key `{other}`")));
                }
            }
        }
        let task = task.ok_or_else(|| CorpusError::Manifest("missing field `task`".into()))?;
        Ok(Self {
            task,
            train_path: train
                .ok_or_else(|| CorpusError::Manifest("missing field `train_path`".into()))?,
            test_path: test
                .ok_or_else(|| CorpusError::Manifest("missing field `test_path`".into()))?,
            format: format.unwrap_or(default_format(task)),
            tag_column,
        })
    }

    /// Column holding the tag for column formats (CoNLL-2000: 2, CoNLL-2003: 3).
    pub fn effective_tag_column(&self) -> usize {
        self.tag_column.unwrap_or(match self.task {
            Task::Chunk => 2,
            Task::Ner | Task::Pos => 3,
        })
    }

    pub fn read_split(&self, path: &Path, split: &str) -> Result<Vec<TaggedSentence>, CorpusError> {
        let bytes = crate::io::read_file(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let wrap = |e: CorpusError| match e {
            CorpusError::Parse { line, message } => CorpusError::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        };
        match self.format {
            DatasetFormat::Conllu => parse_conllu(&bytes[..], split).map_err(wrap),
            DatasetFormat::Columns => {
                parse_conll_columns(&bytes[..], self.effective_tag_column(), split).map_err(wrap)
            }
        }
    }

    pub fn load_dataset(&self) -> Result<TaskDataset, CorpusError> {
        let train = self.read_split(&self.train_path, "train")?;
        let test = self.read_split(&self.test_path, "test")?;
        TaskDataset::new(self.task, train, test)
    }
}

fn default_format(task: Task) -> DatasetFormat {
    match task {
        Task::Pos => DatasetFormat::Conllu,
        Task::Chunk | Task::Ner => DatasetFormat::Columns,
    }
}
