//! Class inventories, verbalizers and label-set variants.
//!
//! A [`LabelSet`] pairs an ordered list of class identifiers with the surface
//! string the language model sees for each class. Class identifiers never
//! change between variants; only the surfaces do. Inventory order is also the
//! tie-break order used by the decoder.

mod bio;
mod words;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

pub use bio::{BioAutomaton, BioTag};
pub use words::{parse_words_table, words_labels, words_labels_from_table, words_table};

/// The 17 UPOS tags in canonical (alphabetical) order.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

/// CoNLL-2003 entity types.
pub const NER_TYPES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];

/// CoNLL-2000 chunk types, most frequent first.
pub const CHUNK_TYPES: [&str; 11] = [
    "NP", "VP", "PP", "ADVP", "SBAR", "ADJP", "PRT", "CONJP", "INTJ", "LST", "UCP",
];

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("unknown task `{0}` (expected pos, chunk or ner)")]
    UnknownTask(String),
    #[error("verbalizer is not a bijection: surface `{0}` is used twice")]
    DuplicateSurface(String),
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("class `{0}` is not a BIO tag")]
    NotBio(String),
    #[error("{classes} classes but {surfaces} surfaces")]
    LengthMismatch { classes: usize, surfaces: usize },
    #[error("empty surface for class `{0}`")]
    EmptySurface(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("operation requires the {expected} variant, got {actual}")]
    WrongVariant {
        expected: LabelVariant,
        actual: LabelVariant,
    },
    #[error("no English name for `{0}` in the words table")]
    MissingWord(String),
    #[error("malformed words table line {line}: {message}")]
    WordsTable { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pos,
    Chunk,
    Ner,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Pos => "pos",
            Task::Chunk => "chunk",
            Task::Ner => "ner",
        }
    }

    /// Span tasks are BIO encoded and scored with span F1.
    pub fn is_bio(self) -> bool {
        !matches!(self, Task::Pos)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Ok(Task::Pos),
            "chunk" | "chunking" => Ok(Task::Chunk),
            "ner" => Ok(Task::Ner),
            _ => Err(LabelError::UnknownTask(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelVariant {
    Original,
    Shuffled,
    Proxy,
    Words,
}

impl LabelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelVariant::Original => "original",
            LabelVariant::Shuffled => "shuffled",
            LabelVariant::Proxy => "proxy",
            LabelVariant::Words => "words",
        }
    }
}

impl fmt::Display for LabelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(LabelVariant::Original),
            "shuffled" | "shuffle" => Ok(LabelVariant::Shuffled),
            "proxy" => Ok(LabelVariant::Proxy),
            "words" => Ok(LabelVariant::Words),
            other => Err(format!(
                "unknown label variant `{other}` (expected original, shuffled, proxy or words)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLabelSet {
    task: Task,
    variant: LabelVariant,
    bio: bool,
    classes: Vec<String>,
    surfaces: Vec<String>,
}

/// Ordered class inventory plus a bijective verbalizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawLabelSet", into = "RawLabelSet")]
pub struct LabelSet {
    task: Task,
    variant: LabelVariant,
    bio: bool,
    classes: Vec<String>,
    surfaces: Vec<String>,
    class_index: HashMap<String, usize>,
    surface_index: HashMap<String, usize>,
}

impl PartialEq for LabelSet {
    fn eq(&self, other: &Self) -> bool {
        self.task == other.task
            && self.variant == other.variant
            && self.bio == other.bio
            && self.classes == other.classes
            && self.surfaces == other.surfaces
    }
}

impl TryFrom<RawLabelSet> for LabelSet {
    type Error = LabelError;

    fn try_from(raw: RawLabelSet) -> Result<Self, Self::Error> {
        LabelSet::new(raw.task, raw.variant, raw.bio, raw.classes, raw.surfaces)
    }
}

impl From<LabelSet> for RawLabelSet {
    fn from(set: LabelSet) -> Self {
        RawLabelSet {
            task: set.task,
            variant: set.variant,
            bio: set.bio,
            classes: set.classes,
            surfaces: set.surfaces,
        }
    }
}

impl LabelSet {
    pub fn new(
        task: Task,
        variant: LabelVariant,
        bio: bool,
        classes: Vec<String>,
        surfaces: Vec<String>,
    ) -> Result<Self, LabelError> {
        if classes.len() != surfaces.len() {
            return Err(LabelError::LengthMismatch {
                classes: classes.len(),
                surfaces: surfaces.len(),
            });
        }
        let mut class_index = HashMap::with_capacity(classes.len());
        let mut surface_index = HashMap::with_capacity(classes.len());
        for (i, (class, surface)) in classes.iter().zip(&surfaces).enumerate() {
            if surface.is_empty() {
                return Err(LabelError::EmptySurface(class.clone()));
            }
            if class_index.insert(class.clone(), i).is_some() {
                return Err(LabelError::DuplicateClass(class.clone()));
            }
            if surface_index.insert(surface.clone(), i).is_some() {
                return Err(LabelError::DuplicateSurface(surface.clone()));
            }
            if bio && BioTag::parse(class).is_none() {
                return Err(LabelError::NotBio(class.clone()));
            }
        }
        Ok(Self {
            task,
            variant,
            bio,
            classes,
            surfaces,
            class_index,
            surface_index,
        })
    }

    /// Identity verbalizer over `classes`.
    pub fn identity(task: Task, classes: Vec<String>) -> Result<Self, LabelError> {
        let surfaces = classes.clone();
        Self::new(task, LabelVariant::Original, task.is_bio(), classes, surfaces)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn variant(&self) -> LabelVariant {
        self.variant
    }

    pub fn is_bio(&self) -> bool {
        self.bio
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn class(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn surface(&self, index: usize) -> &str {
        &self.surfaces[index]
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.class_index.get(class).copied()
    }

    pub fn contains(&self, class: &str) -> bool {
        self.class_index.contains_key(class)
    }

    /// The verbalizer: class identifier to surface.
    pub fn verbalize(&self, class: &str) -> Result<&str, LabelError> {
        self.index_of(class)
            .map(|i| self.surfaces[i].as_str())
            .ok_or_else(|| LabelError::UnknownClass(class.to_string()))
    }

    /// Inverse verbalizer.
    pub fn class_of_surface(&self, surface: &str) -> Option<usize> {
        self.surface_index.get(surface).copied()
    }

    /// Same classes with `surfaces[i]` taken from `self.surfaces[perm[i]]`.
    pub fn permuted(&self, perm: &[usize], variant: LabelVariant) -> Result<Self, LabelError> {
        let surfaces = perm.iter().map(|&p| self.surfaces[p].clone()).collect();
        Self::new(self.task, variant, self.bio, self.classes.clone(), surfaces)
    }

    /// BIO entity types in first-occurrence order of the inventory.
    pub fn entity_types(&self) -> Vec<String> {
        let mut types: Vec<String> = Vec::new();
        for class in &self.classes {
            if let Some(ty) = BioTag::parse(class).and_then(|t| t.entity_type().map(str::to_string))
            {
                if !types.contains(&ty) {
                    types.push(ty);
                }
            }
        }
        types
    }
}

/// Builds `O` followed by `B-T`, `I-T` for each type.
pub fn bio_classes<S: AsRef<str>>(types: &[S]) -> Vec<String> {
    let mut classes = vec!["O".to_string()];
    for ty in types {
        classes.push(format!("B-{}", ty.as_ref()));
        classes.push(format!("I-{}", ty.as_ref()));
    }
    classes
}

/// Canonical class listing for a task. Chunking uses the standard CoNLL-2000
/// type list; use [`original_labels_for`] to follow a dataset's inventory.
pub fn canonical_classes(task: Task) -> Vec<String> {
    match task {
        Task::Pos => UPOS_TAGS.iter().map(|s| s.to_string()).collect(),
        Task::Ner => bio_classes(&NER_TYPES),
        Task::Chunk => bio_classes(&CHUNK_TYPES),
    }
}

/// The dataset's own labels with the identity verbalizer.
pub fn original_labels(task: Task) -> LabelSet {
    LabelSet::identity(task, canonical_classes(task)).expect("canonical classes are valid")
}

/// Identity label set over an explicit inventory (usually a dataset's).
pub fn original_labels_for(task: Task, inventory: &[String]) -> Result<LabelSet, LabelError> {
    LabelSet::identity(task, inventory.to_vec())
}

/// Uniformly random permutation of `0..n` with no fixed points, found by
/// rejection. `n < 2` returns the identity.
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SeededRng::new(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return perm;
    }
    loop {
        rng.shuffle(&mut perm);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Reassigns surfaces by a seeded derangement; classes are untouched.
pub fn shuffle_labels(base: &LabelSet, seed: u64) -> Result<LabelSet, LabelError> {
    if base.variant() != LabelVariant::Original {
        return Err(LabelError::WrongVariant {
            expected: LabelVariant::Original,
            actual: base.variant(),
        });
    }
    let perm = derangement(base.len(), seed);
    base.permuted(&perm, LabelVariant::Shuffled)
}

/// Consecutive-integer surfaces. Flat label sets number classes in inventory
/// order; BIO sets number entity types and keep the `B-`/`I-` prefixes and a
/// literal `O`.
pub fn proxy_labels(base: &LabelSet, start: u64) -> Result<LabelSet, LabelError> {
    let surfaces: Vec<String> = if base.is_bio() {
        let types = base.entity_types();
        base.classes()
            .iter()
            .map(|class| match BioTag::parse(class) {
                Some(BioTag::Outside) | None => class.clone(),
                Some(tag) => {
                    let ty = tag.entity_type().expect("B/I tags carry a type");
                    let n = start + types.iter().position(|t| t == ty).unwrap() as u64;
                    format!("{}-{}", tag.prefix(), n)
                }
            })
            .collect()
    } else {
        (0..base.len()).map(|i| (start + i as u64).to_string()).collect()
    };
    LabelSet::new(
        base.task(),
        LabelVariant::Proxy,
        base.is_bio(),
        base.classes().to_vec(),
        surfaces,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class() -> LabelSet {
        LabelSet::new(
            Task::Pos,
            LabelVariant::Original,
            false,
            vec!["A".into(), "B".into()],
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    }

    #[test]
    fn original_inventories() {
        let pos = original_labels(Task::Pos);
        assert_eq!(pos.len(), 17);
        for tag in ["NOUN", "AUX", "CCONJ"] {
            assert!(pos.contains(tag));
        }
        assert_eq!(pos.verbalize("DET").unwrap(), "DET");

        let ner = original_labels(Task::Ner);
        assert_eq!(ner.len(), 9);
        assert!(ner.contains("O"));
        assert!(ner.is_bio());

        let chunk = original_labels(Task::Chunk);
        assert_eq!(chunk.len(), 23);
    }

    #[test]
    fn unknown_task() {
        assert!(matches!("srl".parse::<Task>(), Err(LabelError::UnknownTask(_))));
    }

    #[test]
    fn duplicate_surface_rejected() {
        let err = LabelSet::new(
            Task::Pos,
            LabelVariant::Original,
            false,
            vec!["A".into(), "B".into()],
            vec!["x".into(), "x".into()],
        )
        .unwrap_err();
        assert_eq!(err, LabelError::DuplicateSurface("x".into()));
    }

    #[test]
    fn shuffle_two_classes_swaps() {
        let shuffled = shuffle_labels(&two_class(), 5).unwrap();
        assert_eq!(shuffled.verbalize("A").unwrap(), "B");
        assert_eq!(shuffled.verbalize("B").unwrap(), "A");
        assert_eq!(shuffled.variant(), LabelVariant::Shuffled);
    }

    #[test]
    fn shuffle_keeps_classes_and_inverts() {
        let pos = original_labels(Task::Pos);
        let perm = derangement(pos.len(), 42);
        let shuffled = pos.permuted(&perm, LabelVariant::Shuffled).unwrap();
        assert_eq!(shuffled.classes(), pos.classes());
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let restored = shuffled.permuted(&inverse, LabelVariant::Original).unwrap();
        assert_eq!(restored, pos);
    }

    #[test]
    fn shuffle_requires_original() {
        let proxy = proxy_labels(&original_labels(Task::Pos), 11).unwrap();
        assert!(matches!(
            shuffle_labels(&proxy, 0),
            Err(LabelError::WrongVariant { .. })
        ));
    }

    #[test]
    fn single_class_shuffle_is_identity() {
        let one = LabelSet::identity(Task::Pos, vec!["NOUN".into()]).unwrap();
        let s = shuffle_labels(&one, 1).unwrap();
        assert_eq!(s.surface(0), "NOUN");
    }

    #[test]
    fn proxy_pos_eleven_to_twenty_seven() {
        let proxy = proxy_labels(&original_labels(Task::Pos), 11).unwrap();
        let expected: Vec<String> = (11..=27).map(|n| n.to_string()).collect();
        assert_eq!(proxy.surfaces(), expected.as_slice());
    }

    #[test]
    fn proxy_ner_types() {
        let proxy = proxy_labels(&original_labels(Task::Ner), 11).unwrap();
        assert_eq!(proxy.verbalize("O").unwrap(), "O");
        assert_eq!(proxy.verbalize("B-PER").unwrap(), "B-11");
        assert_eq!(proxy.verbalize("I-PER").unwrap(), "I-11");
        assert_eq!(proxy.verbalize("B-ORG").unwrap(), "B-12");
        assert_eq!(proxy.verbalize("I-LOC").unwrap(), "I-13");
        assert_eq!(proxy.verbalize("B-MISC").unwrap(), "B-14");
    }

    #[test]
    fn label_set_serde_roundtrip() {
        let ner = proxy_labels(&original_labels(Task::Ner), 11).unwrap();
        let json = serde_json::to_string(&ner).unwrap();
        let back: LabelSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ner);
        assert_eq!(back.class_of_surface("B-12"), ner.index_of("B-ORG"));
    }
}
