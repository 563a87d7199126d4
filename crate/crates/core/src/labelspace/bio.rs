use serde::{Deserialize, Serialize};

use super::{LabelError, LabelSet};

/// A parsed BIO class identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioTag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> BioTag<'a> {
    /// `O`, `B-X` or `I-X` with a non-empty `X`; anything else is `None`.
    pub fn parse(class: &'a str) -> Option<Self> {
        if class == "O" {
            return Some(BioTag::Outside);
        }
        let (prefix, ty) = class.split_once('-')?;
        if ty.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(BioTag::Begin(ty)),
            "I" => Some(BioTag::Inside(ty)),
            _ => None,
        }
    }

    pub fn entity_type(&self) -> Option<&'a str> {
        match *self {
            BioTag::Outside => None,
            BioTag::Begin(t) | BioTag::Inside(t) => Some(t),
        }
    }

    pub fn prefix(&self) -> &'static str {
        match self {
            BioTag::Outside => "O",
            BioTag::Begin(_) => "B",
            BioTag::Inside(_) => "I",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Kind {
    Outside,
    Begin(String),
    Inside(String),
}

/// Transition rule over a BIO label set: `O` and every `B-X` may follow
/// anything, `I-X` only follows `B-X` or `I-X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioAutomaton {
    classes: Vec<String>,
    kinds: Vec<Kind>,
}

impl BioAutomaton {
    pub fn new(labels: &LabelSet) -> Result<Self, LabelError> {
        Self::from_classes(labels.classes())
    }

    pub fn from_classes(classes: &[String]) -> Result<Self, LabelError> {
        let kinds = classes
            .iter()
            .map(|c| match BioTag::parse(c) {
                Some(BioTag::Outside) => Ok(Kind::Outside),
                Some(BioTag::Begin(t)) => Ok(Kind::Begin(t.to_string())),
                Some(BioTag::Inside(t)) => Ok(Kind::Inside(t.to_string())),
                None => Err(LabelError::NotBio(c.clone())),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            classes: classes.to_vec(),
            kinds,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Whether class index `next` may follow `previous` (`None` = sentence start).
    pub fn permits(&self, previous: Option<usize>, next: usize) -> bool {
        match &self.kinds[next] {
            Kind::Outside | Kind::Begin(_) => true,
            Kind::Inside(ty) => match previous.map(|p| &self.kinds[p]) {
                Some(Kind::Begin(prev)) | Some(Kind::Inside(prev)) => prev == ty,
                _ => false,
            },
        }
    }

    /// Allowed successor indices in inventory order.
    pub fn allowed_indices(&self, previous: Option<usize>) -> Vec<usize> {
        (0..self.kinds.len())
            .filter(|&next| self.permits(previous, next))
            .collect()
    }

    /// Allowed successor classes after `previous` (`None` = sentence start).
    pub fn allowed(&self, previous: Option<&str>) -> Result<Vec<&str>, LabelError> {
        let prev = match previous {
            None => None,
            Some(class) => Some(
                self.classes
                    .iter()
                    .position(|c| c == class)
                    .ok_or_else(|| LabelError::UnknownClass(class.to_string()))?,
            ),
        };
        Ok(self
            .allowed_indices(prev)
            .into_iter()
            .map(|i| self.classes[i].as_str())
            .collect())
    }

    /// Index of the first invalid transition, if any. Unknown classes count
    /// as invalid.
    pub fn first_violation<S: AsRef<str>>(&self, tags: &[S]) -> Option<usize> {
        let mut prev = None;
        for (i, tag) in tags.iter().enumerate() {
            match self.classes.iter().position(|c| c == tag.as_ref()) {
                Some(idx) if self.permits(prev, idx) => prev = Some(idx),
                _ => return Some(i),
            }
        }
        None
    }

    pub fn accepts<S: AsRef<str>>(&self, tags: &[S]) -> bool {
        self.first_violation(tags).is_none()
    }

    /// Number of positions whose transition from the previous tag is invalid.
    pub fn count_violations<S: AsRef<str>>(&self, tags: &[S]) -> usize {
        let mut prev = None;
        let mut violations = 0;
        for tag in tags {
            match self.classes.iter().position(|c| c == tag.as_ref()) {
                Some(idx) => {
                    if !self.permits(prev, idx) {
                        violations += 1;
                    }
                    prev = Some(idx);
                }
                None => {
                    violations += 1;
                    prev = None;
                }
            }
        }
        violations
    }
}
