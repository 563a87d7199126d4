use std::fmt::Write as _;
use std::io::Read;

use super::{decode_utf8, CorpusError, TaggedSentence};

/// Reads space-separated CoNLL-2000/2003 data: word = column 0, tag =
/// `tag_column`. Sentences are separated by blank lines and `-DOCSTART-`
/// lines are dropped. Ids are `{split}-{ordinal}`.
pub fn parse_conll_columns<R: Read>(
    mut reader: R,
    tag_column: usize,
    split: &str,
) -> Result<Vec<TaggedSentence>, CorpusError> {
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(|source| CorpusError::Io {
        path: format!("<{split}>"),
        source,
    })?;
    let raw = crate::io::maybe_gunzip(raw).map_err(|source| CorpusError::Io {
        path: format!("<{split}>"),
        source,
    })?;
    let text = decode_utf8(raw)?;

    let mut sentences = Vec::new();
    let mut words = Vec::new();
    let mut tags = Vec::new();
    let mut width: Option<usize> = None;

    let mut flush = |words: &mut Vec<String>, tags: &mut Vec<String>| {
        if !words.is_empty() {
            let id = format!("{split}-{}", sentences.len());
            sentences.push(TaggedSentence {
                sentence_id: id,
                words: std::mem::take(words),
                gold_tags: std::mem::take(tags),
            });
        }
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            flush(&mut words, &mut tags);
            continue;
        }
        if fields[0] == "-DOCSTART-" {
            continue;
        }
        match width {
            None => {
                if tag_column >= fields.len() {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        message: format!(
                            "tag column {tag_column} out of range for {} columns",
                            fields.len()
                        ),
                    });
                }
                width = Some(fields.len());
            }
            Some(w) if w != fields.len() => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("expected {w} columns, found {}", fields.len()),
                });
            }
            Some(_) => {}
        }
        words.push(fields[0].to_string());
        tags.push(fields[tag_column].to_string());
    }
    flush(&mut words, &mut tags);

    if sentences.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(sentences)
}

/// Writes `width`-column lines with the tag at `tag_column` and `_` fillers.
pub fn write_conll_columns(sentences: &[TaggedSentence], tag_column: usize, width: usize) -> String {
    assert!(tag_column > 0 && tag_column < width);
    let mut out = String::new();
    for s in sentences {
        for (w, t) in s.words.iter().zip(&s.gold_tags) {
            let mut cols = vec!["_"; width];
            cols[0] = w;
            cols[tag_column] = t;
            let _ = writeln!(out, "{}", cols.join(" "));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conll2003_tag_column() {
        let text = "-DOCSTART- -X- -X- O\n\nU.N. NNP I-NP I-ORG\nofficial NN I-NP O\n\nHi UH B-INTJ O\n";
        let s = parse_conll_columns(text.as_bytes(), 3, "train").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].words[0], "U.N.");
        assert_eq!(s[0].gold_tags[0], "I-ORG");
        assert_eq!(s[0].sentence_id, "train-0");
    }

    #[test]
    fn conll2000_chunk_column() {
        let text = "Confidence NN B-NP\nin IN B-PP\n\nthe DT B-NP\n";
        let s = parse_conll_columns(text.as_bytes(), 2, "test").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].gold_tags, ["B-NP", "B-PP"]);
    }

    #[test]
    fn inconsistent_columns() {
        let text = "a DT B-NP\nb NN\n";
        assert!(matches!(
            parse_conll_columns(text.as_bytes(), 2, "x"),
            Err(CorpusError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn docstart_only_is_empty() {
        assert!(matches!(
            parse_conll_columns(&b"-DOCSTART- -X- -X- O\n\n"[..], 3, "x"),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn write_then_parse() {
        let text = "EU NNP B-NP B-ORG\nrejects VBZ B-VP O\n\nPeter NNP B-NP B-PER\n";
        let s = parse_conll_columns(text.as_bytes(), 3, "train").unwrap();
        let again = parse_conll_columns(write_conll_columns(&s, 3, 4).as_bytes(), 3, "train").unwrap();
        assert_eq!(s, again);
    }
}
