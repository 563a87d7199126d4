use std::fmt::Write as _;
use std::io::Read;

use super::{decode_utf8, CorpusError, TaggedSentence};

const COLUMNS: usize = 10;

/// Reads CoNLL-U: word = FORM (column 2), tag = UPOS (column 4).
///
/// Multiword-token ranges (`3-4`) and empty nodes (`8.1`) are skipped. The
/// sentence id comes from a `# sent_id = ...` comment when present, else
/// `{split}-{ordinal}`. Gzip input is inflated transparently.
pub fn parse_conllu<R: Read>(mut reader: R, split: &str) -> Result<Vec<TaggedSentence>, CorpusError> {
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
    let mut sent_id: Option<String> = None;
    let mut first_line = 0;

    let mut flush = |words: &mut Vec<String>,
                     tags: &mut Vec<String>,
                     sent_id: &mut Option<String>,
                     line: usize|
     -> Result<(), CorpusError> {
        if !words.is_empty() {
            let id = sent_id
                .take()
                .unwrap_or_else(|| format!("{split}-{}", sentences.len()));
            let s = TaggedSentence::new(id, std::mem::take(words), std::mem::take(tags))
                .map_err(|e| CorpusError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            sentences.push(s);
        }
        *sent_id = None;
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            flush(&mut words, &mut tags, &mut sent_id, first_line)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("sent_id") {
                let id = id.trim_start().trim_start_matches('=').trim();
                if !id.is_empty() {
                    sent_id = Some(id.to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != COLUMNS {
            return Err(CorpusError::Parse {
                line: lineno,
                message: format!("expected {COLUMNS} tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        if words.is_empty() {
            first_line = lineno;
        }
        words.push(cols[1].to_string());
        tags.push(cols[3].to_string());
    }
    flush(&mut words, &mut tags, &mut sent_id, first_line)?;

    if sentences.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(sentences)
}

/// Writes sentences back as CoNLL-U with `_` in unused columns.
pub fn write_conllu(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        let _ = writeln!(out, "# sent_id = {}", s.sentence_id);
        for (i, (w, t)) in s.words.iter().zip(&s.gold_tags).enumerate() {
            let _ = writeln!(out, "{}\t{w}\t_\t{t}\t_\t_\t_\t_\t_\t_", i + 1);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "# sent_id = s1\n\
1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_\n\
2\tdog\tdog\tNOUN\tNN\t_\t3\tnsubj\t_\t_\n\
3\tdid\tdo\tAUX\tVBD\t_\t0\troot\t_\t_\n\
4\tnot\tnot\tPART\tRB\t_\t3\tadvmod\t_\t_\n\
5\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_\n\
\n\
# sent_id = s2\n\
1\tHi\thi\tINTJ\tUH\t_\t0\troot\t_\t_\n\
2\tthere\tthere\tADV\tRB\t_\t1\tadvmod\t_\t_\n\
3\t!\t!\tPUNCT\t.\t_\t1\tpunct\t_\t_\n";

    #[test]
    fn two_sentences() {
        let s = parse_conllu(TWO.as_bytes(), "train").unwrap();
        assert_eq!(s.iter().map(|s| s.len()).collect::<Vec<_>>(), [5, 3]);
        assert_eq!(s[0].words[0], "The");
        assert_eq!(s[0].gold_tags[0], "DET");
        assert_eq!(s[1].sentence_id, "s2");
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let text = "1\tI\tI\tPRON\t_\t_\t_\t_\t_\t_\n\
2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
2\tdo\tdo\tAUX\t_\t_\t_\t_\t_\t_\n\
3\tn't\tnot\tPART\t_\t_\t_\t_\t_\t_\n\
3.1\tgo\tgo\tVERB\t_\t_\t_\t_\t_\t_\n";
        let s = parse_conllu(text.as_bytes(), "test").unwrap();
        assert_eq!(s[0].words, ["I", "do", "n't"]);
        assert_eq!(s[0].gold_tags, ["PRON", "AUX", "PART"]);
        assert_eq!(s[0].sentence_id, "test-0");
    }

    #[test]
    fn wrong_column_count_names_line() {
        let text = "1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_\n2\tdog\tdog\tNOUN\n";
        match parse_conllu(text.as_bytes(), "x") {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_input() {
        assert!(matches!(parse_conllu(&b""[..], "x"), Err(CorpusError::Empty)));
        assert!(matches!(
            parse_conllu(&b"# only a comment\n\n"[..], "x"),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(TWO.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(
            parse_conllu(&gz[..], "t").unwrap(),
            parse_conllu(TWO.as_bytes(), "t").unwrap()
        );
    }

    #[test]
    fn write_then_parse() {
        let s = parse_conllu(TWO.as_bytes(), "train").unwrap();
        let again = parse_conllu(write_conllu(&s).as_bytes(), "train").unwrap();
        assert_eq!(s, again);
    }
}
