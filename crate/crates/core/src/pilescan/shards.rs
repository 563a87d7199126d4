//! Shard discovery and document iteration.
//!
//! A shard is plain text, JSON lines with a `"text"` field, or either of those
//! compressed with gzip or zstd. Plain text is cut into chunks at line
//! boundaries (blank lines preferred) so hits never straddle a chunk; each
//! chunk is reported with its byte offset in the decompressed stream.

use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::io::open_stream;

pub const DEFAULT_CHUNK_BYTES: usize = 8 << 20;

/// Regular files directly under `dir` (or `dir` itself if it is a file),
/// sorted by path. Hidden files are skipped.
pub fn list_shards(dir: &Path) -> io::Result<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if path.is_file() && !hidden {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn is_jsonl(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let stem = name
        .strip_suffix(".gz")
        .or_else(|| name.strip_suffix(".zst"))
        .unwrap_or(name);
    stem.ends_with(".jsonl") || stem.ends_with(".json")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShardStats {
    pub bytes: u64,
    pub documents: u64,
    pub malformed_records: u64,
}

#[derive(Deserialize)]
struct JsonDoc {
    text: String,
}

/// One unit of scanning: a JSON-lines record, or a newline-aligned chunk of
/// a plain-text shard. `before`/`after` hold up to `margin` bytes of the
/// neighbouring chunks so context windows do not depend on chunk size.
#[derive(Debug, Clone, Copy)]
pub struct Document<'a> {
    /// Line number for JSON lines, 0 for plain text.
    pub doc: u64,
    /// Offset of `text` in the decompressed shard (plain text) or 0.
    pub base: u64,
    pub text: &'a [u8],
    pub before: &'a [u8],
    pub after: &'a [u8],
}

/// Calls `f` for every document in the shard.
pub fn for_each_document<F>(path: &Path, chunk_bytes: usize, margin: usize, mut f: F) -> io::Result<ShardStats>
where
    F: FnMut(&Document<'_>),
{
    let reader = open_stream(path)?;
    if is_jsonl(path) {
        let mut stats = ShardStats::default();
        let mut reader = BufReader::with_capacity(1 << 20, reader);
        let mut line = Vec::new();
        let mut doc = 0u64;
        loop {
            line.clear();
            let n = reader.read_until(b'\n', &mut line)?;
            if n == 0 {
                break;
            }
            stats.bytes += n as u64;
            let trimmed = line.trim_ascii();
            if !trimmed.is_empty() {
                match serde_json::from_slice::<JsonDoc>(trimmed) {
                    Ok(d) => {
                        stats.documents += 1;
                        f(&Document {
                            doc,
                            base: 0,
                            text: d.text.as_bytes(),
                            before: &[],
                            after: &[],
                        });
                    }
                    Err(_) => stats.malformed_records += 1,
                }
            }
            doc += 1;
        }
        Ok(stats)
    } else {
        chunk_text(reader, chunk_bytes.max(1), margin, f)
    }
}

fn chunk_text<R: Read, F: FnMut(&Document<'_>)>(
    mut reader: R,
    chunk_bytes: usize,
    margin: usize,
    mut f: F,
) -> io::Result<ShardStats> {
    let mut stats = ShardStats::default();
    let mut buf: Vec<u8> = Vec::new();
    let mut tail: Vec<u8> = Vec::new();
    let mut base = 0u64;
    let mut eof = false;
    let mut fill = |buf: &mut Vec<u8>, want: usize, eof: &mut bool| -> io::Result<()> {
        if !*eof && want > 0 {
            let n = (&mut reader).take(want as u64).read_to_end(buf)?;
            *eof = n < want;
        }
        Ok(())
    };
    loop {
        if buf.len() < chunk_bytes {
            let want = chunk_bytes - buf.len();
            fill(&mut buf, want, &mut eof)?;
        }
        if buf.is_empty() {
            break;
        }
        let cut = if eof {
            buf.len()
        } else {
            match find_cut(&buf) {
                Some(c) => c,
                // One enormous line: keep reading until it ends.
                None => {
                    fill(&mut buf, chunk_bytes, &mut eof)?;
                    continue;
                }
            }
        };
        if buf.len() < cut + margin {
            let want = cut + margin - buf.len();
            fill(&mut buf, want, &mut eof)?;
        }
        stats.documents += 1;
        f(&Document {
            doc: 0,
            base,
            text: &buf[..cut],
            before: &tail,
            after: &buf[cut..buf.len().min(cut + margin)],
        });
        stats.bytes += cut as u64;
        base += cut as u64;
        let keep = cut.min(margin);
        if keep < margin {
            let drop = (tail.len() + keep).saturating_sub(margin);
            tail.drain(..drop);
        } else {
            tail.clear();
        }
        tail.extend_from_slice(&buf[cut - keep..cut]);
        buf.drain(..cut);
    }
    Ok(stats)
}

/// End of the last blank line, else the last newline.
fn find_cut(buf: &[u8]) -> Option<usize> {
    let tail_start = buf.len().saturating_sub(1 << 20);
    let tail = &buf[tail_start..];
    if let Some(p) = tail.windows(2).rposition(|w| w == b"\n\n") {
        return Some(tail_start + p + 2);
    }
    memchr_last(buf, b'\n').map(|p| p + 1)
}

fn memchr_last(buf: &[u8], b: u8) -> Option<usize> {
    buf.iter().rposition(|&x| x == b)
}
