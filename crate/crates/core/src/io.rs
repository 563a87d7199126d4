use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Reads a whole file, transparently inflating gzip content.
pub(crate) fn read_file(path: &Path) -> io::Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    maybe_gunzip(raw)
}

pub(crate) fn maybe_gunzip(raw: Vec<u8>) -> io::Result<Vec<u8>> {
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Streaming reader over a possibly compressed file. Compression is chosen
/// by extension (`.gz`, `.zst`), everything else is read as-is.
pub(crate) fn open_stream(path: &Path) -> io::Result<Box<dyn Read + Send>> {
    let file = BufReader::with_capacity(1 << 20, File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("gz") => Ok(Box::new(MultiGzDecoder::new(file))),
        Some("zst") => Ok(Box::new(zstd::stream::read::Decoder::with_buffer(file)?)),
        _ => Ok(Box::new(file)),
    }
}
