use std::collections::HashMap;

use super::{BioTag, LabelError, LabelSet, LabelVariant, Task};

const POS_TABLE: &str = include_str!("../../data/words_pos.tsv");
const NER_TABLE: &str = include_str!("../../data/words_ner.tsv");
const CHUNK_TABLE: &str = include_str!("../../data/words_chunk.tsv");

/// The shipped class-name table for a task.
pub fn words_table(task: Task) -> &'static str {
    match task {
        Task::Pos => POS_TABLE,
        Task::Ner => NER_TABLE,
        Task::Chunk => CHUNK_TABLE,
    }
}

/// Parses a two-column TSV (identifier, English name). `#` lines are comments.
pub fn parse_words_table(text: &str) -> Result<HashMap<String, String>, LabelError> {
    let mut table = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(key), Some(name), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(LabelError::WordsTable {
                line: i + 1,
                message: "expected exactly two tab-separated columns".into(),
            });
        };
        if key.is_empty() || name.is_empty() {
            return Err(LabelError::WordsTable {
                line: i + 1,
                message: "empty column".into(),
            });
        }
        table.insert(key.to_string(), name.to_string());
    }
    Ok(table)
}

/// English class names over `base`'s classes. For BIO sets the table keys
/// are entity types and the prefixes are kept (`B-LOC` -> `B-location`).
pub fn words_labels_from_table(base: &LabelSet, table: &str) -> Result<LabelSet, LabelError> {
    let table = parse_words_table(table)?;
    let lookup = |key: &str| {
        table
            .get(key)
            .cloned()
            .ok_or_else(|| LabelError::MissingWord(key.to_string()))
    };
    let surfaces = base
        .classes()
        .iter()
        .map(|class| {
            if !base.is_bio() {
                return lookup(class);
            }
            match BioTag::parse(class) {
                Some(BioTag::Outside) => Ok(class.clone()),
                Some(tag) => Ok(format!(
                    "{}-{}",
                    tag.prefix(),
                    lookup(tag.entity_type().unwrap())?
                )),
                None => Err(LabelError::NotBio(class.clone())),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    LabelSet::new(
        base.task(),
        LabelVariant::Words,
        base.is_bio(),
        base.classes().to_vec(),
        surfaces,
    )
}

/// Words variant of `base` using the shipped table for its task.
pub fn words_labels(base: &LabelSet) -> Result<LabelSet, LabelError> {
    words_labels_from_table(base, words_table(base.task()))
}
