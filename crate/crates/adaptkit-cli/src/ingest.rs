//! Raw-text ingestion: one document per input line, Unicode NFC
//! normalization, trailing-whitespace trim, content-addressed ids.

use std::io::{BufRead, BufReader};
use std::path::Path;

use adaptkit::corpus::{Corpus, Document};
use unicode_normalization::UnicodeNormalization;

use crate::error::Result;
use crate::formats::{open, sha256_bytes};

#[derive(Debug, Default)]
pub struct IngestReport {
    pub ingested: usize,
    pub invalid_utf8: usize,
    pub empty: usize,
}

/// Read documents (one per line) from the given files. Lines that are
/// not valid UTF-8 are rejected and counted; the rest are NFC
/// normalized and right-trimmed. Ids are the first 12 hex digits of
/// the content hash plus an ingest ordinal, so re-ingesting identical
/// input reproduces identical ids.
pub fn ingest(inputs: &[impl AsRef<Path>]) -> Result<(Corpus, IngestReport)> {
    let mut docs = Vec::new();
    let mut report = IngestReport::default();
    let mut ordinal = 0usize;
    for input in inputs {
        let path = input.as_ref();
        let source = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "stdin".into());
        let mut r = BufReader::new(open(path)?);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = r.read_until(b'\n', &mut buf)?;
            if n == 0 {
                break;
            }
            if buf.last() == Some(&b'\n') {
                buf.pop();
            }
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
            let Ok(line) = std::str::from_utf8(&buf) else {
                report.invalid_utf8 += 1;
                continue;
            };
            let text: String = line.nfc().collect();
            let text = text.trim_end().to_string();
            if text.is_empty() {
                report.empty += 1;
                continue;
            }
            let digest = sha256_bytes(text.as_bytes());
            let id = format!("{}-{ordinal:06}", hex::encode(&digest[..6]));
            ordinal += 1;
            docs.push(Document::new(&id, &text, &source));
            report.ingested += 1;
        }
    }
    Ok((docs.into_iter().collect(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::tempdir;

    #[test]
    fn normalizes_trims_and_counts_invalid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("in.txt");
        let mut f = std::fs::File::create(&path).unwrap();
        // decomposed 가 (U+1100 U+1161) + trailing spaces, then an
        // invalid UTF-8 line, then a blank line
        f.write_all("\u{1100}\u{1161}  \n".as_bytes()).unwrap();
        f.write_all(&[0xFF, 0xFE, b'\n']).unwrap();
        f.write_all(b"   \n").unwrap();
        f.write_all(b"plain\r\n").unwrap();
        drop(f);

        let (corpus, report) = ingest(&[&path]).unwrap();
        assert_eq!(report.ingested, 2);
        assert_eq!(report.invalid_utf8, 1);
        assert_eq!(report.empty, 1);
        assert_eq!(corpus.docs[0].text, "가"); // NFC composed, trimmed
        assert_eq!(corpus.docs[1].text, "plain");
        assert_eq!(corpus.docs[0].source, "in");
    }

    #[test]
    fn ids_are_content_addressed_and_reproducible() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("in.txt");
        std::fs::write(&path, "one\ntwo\n").unwrap();
        let (a, _) = ingest(&[&path]).unwrap();
        let (b, _) = ingest(&[&path]).unwrap();
        assert_eq!(a.docs, b.docs);
        assert!(a.docs[0].id.ends_with("-000000"));
        assert_ne!(a.docs[0].id, a.docs[1].id);
    }
}
