//! JSONL checkpoints and dataset export.

use std::io::{self, Write};

use aquallm_core::AqaTriplet;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {source}")]
pub struct JsonlError {
    pub line: usize,
    #[source]
    pub source: serde_json::Error,
}

/// One compact JSON object per line, LF-terminated.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: DeserializeOwned>(input: &str) -> Result<Vec<T>, JsonlError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| JsonlError {
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn export_jsonl<W: Write>(triplets: &[AqaTriplet], mut out: W) -> io::Result<usize> {
    out.write_all(to_jsonl(triplets).as_bytes())?;
    out.flush()?;
    Ok(triplets.len())
}

pub fn import_jsonl(input: &str) -> Result<Vec<AqaTriplet>, JsonlError> {
    from_jsonl(input)
}

pub const CSV_HEADER: [&str; 3] = ["file_name", "QuestionText", "answer"];

/// CSV with header `file_name,QuestionText,answer`, CRLF records and quoting
/// only where needed.
pub fn export_csv<W: Write>(triplets: &[AqaTriplet], out: W) -> Result<usize, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for t in triplets {
        w.write_record([
            t.audio_path.as_str(),
            t.question.as_str(),
            t.answer.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(triplets.len())
}
