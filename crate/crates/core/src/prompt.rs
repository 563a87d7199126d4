//! Prompt rendering.
//!
//! A demonstration renders as two lines:
//!
//! ```text
//! Context: The dog
//! Tagged: The/DET dog/NOUN
//! ```
//!
//! Demonstrations are separated by a blank line. The sentence being tagged
//! gets its `Context:` line and a bare `Tagged:` line; each decoding step then
//! appends ` word/` and the chosen surface. The prefix only ever grows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TaggedSentence;
use crate::labelspace::{LabelError, LabelSet};

/// Delimiters the prompt format accepts between a word and its label.
pub const DELIMITERS: [char; 5] = ['/', ':', '-', '_', '='];
pub const PAIR_SEPARATOR: &str = " ";
pub const EXAMPLE_SEPARATOR: &str = "\n\n";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("delimiter `{0}` is not one of / : - _ =")]
    BadDelimiter(String),
    #[error("keyword `{0}` must be non-empty and single-line")]
    BadKeyword(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("all {0} words are already tagged")]
    PastEnd(usize),
    #[error("expected word `{expected}` at position {position}, got `{got}`")]
    WordMismatch {
        position: usize,
        expected: String,
        got: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub context_keyword: String,
    pub tagged_keyword: String,
    pub delimiter: char,
    /// Repeat each word before its label on the Tagged line. Turning this off
    /// is only meant for the label-only ablation.
    pub include_word_in_tagged: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            context_keyword: "Context".into(),
            tagged_keyword: "Tagged".into(),
            delimiter: '/',
            include_word_in_tagged: true,
        }
    }
}

impl PromptConfig {
    pub fn with_delimiter(delimiter: &str) -> Result<Self, PromptError> {
        let mut chars = delimiter.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if DELIMITERS.contains(&c) => Ok(Self {
                delimiter: c,
                ..Self::default()
            }),
            _ => Err(PromptError::BadDelimiter(delimiter.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if !DELIMITERS.contains(&self.delimiter) {
            return Err(PromptError::BadDelimiter(self.delimiter.to_string()));
        }
        for kw in [&self.context_keyword, &self.tagged_keyword] {
            if kw.trim().is_empty() || kw.contains('\n') {
                return Err(PromptError::BadKeyword(kw.clone()));
            }
        }
        Ok(())
    }

    pub fn context_prefix(&self) -> String {
        format!("{}: ", self.context_keyword)
    }

    pub fn tagged_prefix(&self) -> String {
        format!("{}:", self.tagged_keyword)
    }

    /// Text appended before scoring the label of `word`.
    pub fn cue(&self, word: &str) -> String {
        if self.include_word_in_tagged {
            format!("{PAIR_SEPARATOR}{word}{}", self.delimiter)
        } else {
            PAIR_SEPARATOR.to_string()
        }
    }

    fn context_line<S: AsRef<str>>(&self, words: &[S]) -> String {
        let words: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
        format!("{}{}", self.context_prefix(), words.join(PAIR_SEPARATOR))
    }
}

/// Renders a gold-tagged sentence as a demonstration.
pub fn render_demonstration(
    sentence: &TaggedSentence,
    labels: &LabelSet,
    config: &PromptConfig,
) -> Result<String, PromptError> {
    config.validate()?;
    let surfaces = sentence
        .gold_tags
        .iter()
        .map(|t| labels.verbalize(t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = config.context_line(&sentence.words);
    out.push('\n');
    out.push_str(&config.tagged_prefix());
    for (w, s) in sentence.words.iter().zip(surfaces) {
        out.push_str(&config.cue(w));
        out.push_str(s);
    }
    Ok(out)
}

/// Incremental prompt for one sentence. Immutable; `advance` returns a new
/// state whose prefix extends this one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptState {
    config: PromptConfig,
    words: Vec<String>,
    history: Vec<(String, String)>,
    rendered_prefix: String,
}

impl PromptState {
    /// Demonstrations, then the sentence's Context line and a bare Tagged line.
    pub fn start(
        config: &PromptConfig,
        labels: &LabelSet,
        demonstrations: &[TaggedSentence],
        words: &[String],
    ) -> Result<Self, PromptError> {
        config.validate()?;
        let mut prefix = String::new();
        for demo in demonstrations {
            prefix.push_str(&render_demonstration(demo, labels, config)?);
            prefix.push_str(EXAMPLE_SEPARATOR);
        }
        prefix.push_str(&config.context_line(words));
        prefix.push('\n');
        prefix.push_str(&config.tagged_prefix());
        Ok(Self {
            config: config.clone(),
            words: words.to_vec(),
            history: Vec::new(),
            rendered_prefix: prefix,
        })
    }

    pub fn rendered_prefix(&self) -> &str {
        &self.rendered_prefix
    }

    pub fn pending_word_index(&self) -> usize {
        self.history.len()
    }

    pub fn pending_word(&self) -> Option<&str> {
        self.words.get(self.history.len()).map(String::as_str)
    }

    pub fn history(&self) -> &[(String, String)] {
        &self.history
    }

    pub fn is_complete(&self) -> bool {
        self.history.len() == self.words.len()
    }

    /// The text to append before scoring the pending word's label.
    pub fn pending_cue(&self) -> Option<String> {
        self.pending_word().map(|w| self.config.cue(w))
    }

    pub fn advance(&self, word: &str, predicted_surface: &str) -> Result<Self, PromptError> {
        let position = self.history.len();
        let expected = self
            .pending_word()
            .ok_or(PromptError::PastEnd(self.words.len()))?;
        if expected != word {
            return Err(PromptError::WordMismatch {
                position,
                expected: expected.to_string(),
                got: word.to_string(),
            });
        }
        let mut next = self.clone();
        next.rendered_prefix.push_str(&self.config.cue(word));
        next.rendered_prefix.push_str(predicted_surface);
        next.history
            .push((word.to_string(), predicted_surface.to_string()));
        Ok(next)
    }
}

/// Result of strictly parsing generated Tagged-line text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedParse {
    /// Class indices for the leading well-formed pairs.
    pub classes: Vec<usize>,
    /// Index of the first word whose pair failed to parse, if any.
    pub format_error_position: Option<usize>,
}

/// Parses `text` (everything after `Tagged:`) against the expected words.
///
/// Whitespace runs are normalized to single spaces. Each item must be
/// `word<delim>surface` for the next expected word (or just `surface` when
/// words are not repeated), where the surface is the longest verbalizer
/// surface followed by a space or the end of text. Parsing stops at the first
/// failure.
pub fn parse_tagged_line(
    text: &str,
    words: &[String],
    labels: &LabelSet,
    config: &PromptConfig,
) -> TaggedParse {
    let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut rest = normalized.as_str();
    let mut classes = Vec::new();
    for (i, word) in words.iter().enumerate() {
        let after_word = if config.include_word_in_tagged {
            let cue = format!("{word}{}", config.delimiter);
            match rest.strip_prefix(cue.as_str()) {
                Some(r) => r,
                None => {
                    return TaggedParse {
                        classes,
                        format_error_position: Some(i),
                    }
                }
            }
        } else {
            rest
        };
        let best = labels
            .surfaces()
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                after_word
                    .strip_prefix(s.as_str())
                    .is_some_and(|r| r.is_empty() || r.starts_with(' '))
            })
            .max_by_key(|(_, s)| s.len());
        match best {
            Some((idx, surface)) => {
                classes.push(idx);
                rest = after_word[surface.len()..].trim_start_matches(' ');
            }
            None => {
                return TaggedParse {
                    classes,
                    format_error_position: Some(i),
                }
            }
        }
    }
    TaggedParse {
        classes,
        format_error_position: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelspace::{original_labels, words_labels, Task};

    fn sentence(words: &[&str], tags: &[&str]) -> TaggedSentence {
        TaggedSentence::new(
            "s",
            words.iter().map(|w| w.to_string()).collect(),
            tags.iter().map(|t| t.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn demonstration_golden() {
        let s = sentence(&["The", "dog"], &["DET", "NOUN"]);
        let pos = original_labels(Task::Pos);
        assert_eq!(
            render_demonstration(&s, &pos, &PromptConfig::default()).unwrap(),
            "Context: The dog\nTagged: The/DET dog/NOUN"
        );
        let cfg = PromptConfig {
            include_word_in_tagged: false,
            ..PromptConfig::default()
        };
        assert_eq!(
            render_demonstration(&s, &pos, &cfg).unwrap(),
            "Context: The dog\nTagged: DET NOUN"
        );
    }

    #[test]
    fn delimiter_validation() {
        assert!(PromptConfig::with_delimiter("").is_err());
        assert!(PromptConfig::with_delimiter("//").is_err());
        assert!(PromptConfig::with_delimiter("|").is_err());
        for d in ["/", ":", "-", "_", "="] {
            assert!(PromptConfig::with_delimiter(d).is_ok());
        }
        let bad = PromptConfig {
            delimiter: '|',
            ..PromptConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tag_outside_label_set() {
        let s = sentence(&["x"], &["B-PER"]);
        assert!(matches!(
            render_demonstration(&s, &original_labels(Task::Pos), &PromptConfig::default()),
            Err(PromptError::Label(_))
        ));
    }

    #[test]
    fn prompt_with_demonstrations_golden() {
        let pos = original_labels(Task::Pos);
        let demo = sentence(&["A", "cat"], &["DET", "NOUN"]);
        let words = vec!["Dogs".to_string(), "bark".to_string()];
        let state = PromptState::start(&PromptConfig::default(), &pos, &[demo], &words).unwrap();
        assert_eq!(
            state.rendered_prefix(),
            "Context: A cat\nTagged: A/DET cat/NOUN\n\nContext: Dogs bark\nTagged:"
        );
        assert_eq!(state.pending_cue().as_deref(), Some(" Dogs/"));
        let state = state.advance("Dogs", "NOUN").unwrap();
        assert_eq!(state.pending_cue().as_deref(), Some(" bark/"));
        assert!(state.rendered_prefix().ends_with("Tagged: Dogs/NOUN"));
    }

    #[test]
    fn zero_shot_prefix() {
        let words = vec!["Hi".to_string()];
        let state = PromptState::start(
            &PromptConfig::default(),
            &original_labels(Task::Pos),
            &[],
            &words,
        )
        .unwrap();
        assert_eq!(state.rendered_prefix(), "Context: Hi\nTagged:");
    }

    #[test]
    fn advance_grows_and_matches_demonstration() {
        let pos = original_labels(Task::Pos);
        let s = sentence(&["The", "dog", "ran"], &["DET", "NOUN", "VERB"]);
        let mut state = PromptState::start(&PromptConfig::default(), &pos, &[], &s.words).unwrap();
        assert_eq!(state.history().len(), 0);
        for (w, t) in s.words.iter().zip(&s.gold_tags) {
            let next = state.advance(w, t).unwrap();
            assert!(next.rendered_prefix().starts_with(state.rendered_prefix()));
            assert!(next.rendered_prefix().len() > state.rendered_prefix().len());
            assert_eq!(next.pending_word_index(), next.history().len());
            state = next;
        }
        assert!(state.is_complete());
        let demo = render_demonstration(&s, &pos, &PromptConfig::default()).unwrap();
        assert!(state.rendered_prefix().ends_with(&demo));
        assert_eq!(state.advance("x", "X"), Err(PromptError::PastEnd(3)));
    }

    #[test]
    fn advance_wrong_word() {
        let words = vec!["a".to_string()];
        let st = PromptState::start(
            &PromptConfig::default(),
            &original_labels(Task::Pos),
            &[],
            &words,
        )
        .unwrap();
        assert!(matches!(st.advance("b", "X"), Err(PromptError::WordMismatch { .. })));
    }

    #[test]
    fn parse_exact() {
        let pos = original_labels(Task::Pos);
        let words: Vec<String> = ["The", "dog", "ran"].iter().map(|s| s.to_string()).collect();
        let p = parse_tagged_line(" The/DET dog/NOUN ran/VERB", &words, &pos, &PromptConfig::default());
        assert_eq!(p.classes.len(), 3);
        assert_eq!(p.format_error_position, None);
        assert_eq!(pos.class(p.classes[1]), "NOUN");
    }

    #[test]
    fn parse_word_mismatch() {
        let pos = original_labels(Task::Pos);
        let words: Vec<String> = ["The", "dog", "ran"].iter().map(|s| s.to_string()).collect();
        let p = parse_tagged_line(" The/DET canine/NOUN ran/VERB", &words, &pos, &PromptConfig::default());
        assert_eq!(p.classes.len(), 1);
        assert_eq!(p.format_error_position, Some(1));
    }

    #[test]
    fn parse_unknown_surface_and_empty() {
        let pos = original_labels(Task::Pos);
        let words: Vec<String> = ["The", "dog"].iter().map(|s| s.to_string()).collect();
        let p = parse_tagged_line("The/DETX dog/NOUN", &words, &pos, &PromptConfig::default());
        assert_eq!(p.format_error_position, Some(0));
        let p = parse_tagged_line("", &words, &pos, &PromptConfig::default());
        assert_eq!((p.classes.len(), p.format_error_position), (0, Some(0)));
    }

    #[test]
    fn parse_multiword_surfaces() {
        let words_set = words_labels(&original_labels(Task::Pos)).unwrap();
        let words: Vec<String> = ["Paris", "and"].iter().map(|s| s.to_string()).collect();
        let p = parse_tagged_line(
            " Paris/proper noun and/coordinating conjunction",
            &words,
            &words_set,
            &PromptConfig::default(),
        );
        assert_eq!(p.format_error_position, None);
        assert_eq!(words_set.class(p.classes[0]), "PROPN");
        assert_eq!(words_set.class(p.classes[1]), "CCONJ");
    }

    #[test]
    fn parse_without_words() {
        let pos = original_labels(Task::Pos);
        let cfg = PromptConfig {
            include_word_in_tagged: false,
            ..PromptConfig::default()
        };
        let words: Vec<String> = ["The", "dog"].iter().map(|s| s.to_string()).collect();
        let p = parse_tagged_line(" DET  NOUN\n", &words, &pos, &cfg);
        assert_eq!(p.classes.len(), 2);
        assert_eq!(p.format_error_position, None);
    }

    #[test]
    fn words_containing_the_delimiter() {
        let pos = original_labels(Task::Pos);
        let words: Vec<String> = ["1/2", "/"].iter().map(|s| s.to_string()).collect();
        let p = parse_tagged_line(" 1/2/NUM //PUNCT", &words, &pos, &PromptConfig::default());
        assert_eq!(p.format_error_position, None);
    }
}
