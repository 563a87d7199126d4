//! A lexicon-driven stand-in for a language model.
//!
//! The mock reads the rendered prompt, finds the word whose label is being
//! asked for, and puts probability `1 - ε` on the surface of that word's
//! majority class; the remaining `ε` is split evenly over the other classes.
//! Unknown words get a uniform distribution. Every token of a candidate
//! carries the candidate's log-probability, so the mean over tokens is the
//! class log-probability itself.
//!
//! Scores depend only on the prefix text, which makes the mock trivially
//! prefix-cache consistent.

use crate::corpus::{TaggedSentence, WordLexicon};
use crate::labelspace::LabelSet;
use crate::prompt::{parse_tagged_line, PromptConfig};
use crate::rng::{fnv1a, mix64};

use super::{simple_tokenize, BackendError, CandidateScore, Generation, LanguageModel};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    /// Majority-class lookup in the lexicon.
    Lexicon,
    /// Pseudo-random class distribution keyed on `(seed, prefix)`.
    Random { seed: u64 },
    /// Fixed preference over classes, ignoring the word. Listing `I-*`
    /// classes first yields an adversary for BIO constraints.
    Preference(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct MockLm {
    lexicon: WordLexicon,
    labels: LabelSet,
    prompt: PromptConfig,
    mode: MockMode,
    epsilon: f64,
    shift: f64,
}

impl MockLm {
    pub fn new(lexicon: WordLexicon, labels: LabelSet) -> Self {
        Self {
            lexicon,
            labels,
            prompt: PromptConfig::default(),
            mode: MockMode::Lexicon,
            epsilon: DEFAULT_EPSILON,
            shift: 0.0,
        }
    }

    /// Lexicon of per-word majority classes from `train`.
    pub fn from_training(train: &[TaggedSentence], labels: LabelSet) -> Self {
        let lexicon = WordLexicon::from_sentences(train, labels.classes());
        Self::new(lexicon, labels)
    }

    pub fn with_mode(mut self, mode: MockMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_prompt_config(mut self, prompt: PromptConfig) -> Self {
        self.prompt = prompt;
        self
    }

    /// Swaps the verbalizer. The lexicon is keyed on classes, so predictions
    /// are unchanged by the swap.
    pub fn with_labels(mut self, labels: LabelSet) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must be in (0, 1)");
        self.epsilon = epsilon;
        self
    }

    /// Adds `shift` (≤ 0) to every token log-probability.
    pub fn with_shift(mut self, shift: f64) -> Self {
        assert!(shift <= 0.0 && shift.is_finite(), "shift must be finite and non-positive");
        self.shift = shift;
        self
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn lexicon(&self) -> &WordLexicon {
        &self.lexicon
    }

    /// Word whose label the prefix is asking for, if the prefix ends on a cue.
    pub fn pending_word(&self, prefix: &str) -> Option<String> {
        let last_line = prefix.rsplit('\n').next().unwrap_or(prefix);
        if self.prompt.include_word_in_tagged {
            let body = last_line.strip_suffix(self.prompt.delimiter)?;
            let word = body.rsplit(' ').next()?;
            (!word.is_empty()).then(|| word.to_string())
        } else {
            let (words, tagged) = self.sentence_state(prefix)?;
            if !tagged.ends_with(' ') {
                return None;
            }
            let parsed = parse_tagged_line(tagged, &words, &self.labels, &self.prompt);
            words.get(parsed.classes.len()).cloned()
        }
    }

    /// Log-probability of each class (inventory order) given the prefix.
    pub fn class_logprobs(&self, prefix: &str) -> Vec<f64> {
        let n = self.labels.len();
        match &self.mode {
            MockMode::Lexicon => {
                let target = self
                    .pending_word(prefix)
                    .and_then(|w| self.lexicon.get(&w).map(str::to_string))
                    .and_then(|class| self.labels.index_of(&class));
                match target {
                    Some(t) if n > 1 => {
                        let hit = (1.0 - self.epsilon).ln();
                        let miss = (self.epsilon / (n - 1) as f64).ln();
                        (0..n).map(|i| if i == t { hit } else { miss }).collect()
                    }
                    _ => vec![-(n as f64).ln(); n],
                }
            }
            MockMode::Random { seed } => {
                let key = mix64(seed ^ fnv1a(prefix.as_bytes()));
                let logits: Vec<f64> = (0..n)
                    .map(|i| {
                        let bits = mix64(key.wrapping_add(i as u64)) >> 11;
                        4.0 * (bits as f64 / (1u64 << 53) as f64)
                    })
                    .collect();
                log_softmax(&logits)
            }
            MockMode::Preference(order) => {
                let logits: Vec<f64> = self
                    .labels
                    .classes()
                    .iter()
                    .map(|c| -(order.iter().position(|o| o == c).unwrap_or(order.len()) as f64))
                    .collect();
                log_softmax(&logits)
            }
        }
    }

    /// Words of the last Context line and the text after the last `Tagged:`.
    fn sentence_state<'p>(&self, prefix: &'p str) -> Option<(Vec<String>, &'p str)> {
        let context_marker = format!("\n{}", self.prompt.context_prefix());
        let tagged_marker = format!("\n{}", self.prompt.tagged_prefix());
        let ctx_start = if prefix.starts_with(&context_marker[1..]) && !prefix.contains(&context_marker) {
            context_marker.len() - 1
        } else {
            prefix.rfind(&context_marker)? + context_marker.len()
        };
        let rest = &prefix[ctx_start..];
        let line_end = rest.find('\n')?;
        let words = rest[..line_end].split(' ').map(str::to_string).collect();
        let tagged = rest[line_end..].strip_prefix(&tagged_marker)?;
        if tagged.contains('\n') {
            return None;
        }
        Some((words, tagged))
    }

    fn argmax_class(&self, prefix: &str) -> usize {
        let lp = self.class_logprobs(prefix);
        let mut best = 0;
        for (i, v) in lp.iter().enumerate() {
            if *v > lp[best] {
                best = i;
            }
        }
        best
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - z).collect()
}

impl LanguageModel for MockLm {
    fn identity(&self) -> String {
        let mode = match &self.mode {
            MockMode::Lexicon => "lexicon".to_string(),
            MockMode::Random { seed } => format!("random:{seed}"),
            MockMode::Preference(_) => "preference".to_string(),
        };
        format!(
            "mock({mode}, {} words, variant={}, eps={}, shift={})",
            self.lexicon.len(),
            self.labels.variant().as_str(),
            self.epsilon,
            self.shift
        )
    }

    fn score(&self, prefix: &str, candidates: &[String]) -> Result<Vec<CandidateScore>, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::NoCandidates);
        }
        let class_lp = self.class_logprobs(prefix);
        let n = self.labels.len().max(2);
        let unknown = (self.epsilon / (n - 1) as f64).ln();
        candidates
            .iter()
            .map(|c| {
                let tokens: Vec<String> = simple_tokenize(c).into_iter().map(str::to_string).collect();
                if tokens.is_empty() {
                    return Err(BackendError::Tokenization(c.clone()));
                }
                let lp = self
                    .labels
                    .class_of_surface(c)
                    .map_or(unknown, |i| class_lp[i])
                    + self.shift;
                let logprobs = vec![lp; tokens.len()];
                CandidateScore::new(c.clone(), tokens, logprobs)
            })
            .collect()
    }

    /// Completes the current Tagged line with the mock's argmax classes, then
    /// a newline. The prefix must end on a pair boundary.
    fn generate(&self, prefix: &str, stop: &str, max_tokens: usize) -> Result<Generation, BackendError> {
        if max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        let mut continuation = String::new();
        if let Some((words, tagged)) = self.sentence_state(prefix) {
            let done = parse_tagged_line(tagged, &words, &self.labels, &self.prompt)
                .classes
                .len();
            let mut running = prefix.to_string();
            for w in &words[done..] {
                let cue = self.prompt.cue(w);
                running.push_str(&cue);
                let surface = self.labels.surface(self.argmax_class(&running));
                running.push_str(surface);
                continuation.push_str(&cue);
                continuation.push_str(surface);
            }
        }
        continuation.push('\n');

        let mut text = String::new();
        for (i, tok) in simple_tokenize(&continuation).into_iter().enumerate() {
            if i == max_tokens {
                return Ok(Generation { text, truncated: true });
            }
            text.push_str(tok);
            if !stop.is_empty() {
                if let Some(pos) = text.find(stop) {
                    text.truncate(pos);
                    return Ok(Generation { text, truncated: false });
                }
            }
        }
        Ok(Generation { text, truncated: false })
    }
}
