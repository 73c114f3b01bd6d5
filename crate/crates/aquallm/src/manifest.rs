//! Line-delimited JSON corpus manifests.

use std::collections::HashMap;

use aquallm_core::{AnnotationError, CorpusManifest, ManifestEntry, Split};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unknown split {value:?} (expected train, val or test)")]
    UnknownSplit { line: usize, value: String },
    #[error("line {line}: duplicate audio_id {audio_id:?} (first seen on line {first_line})")]
    DuplicateAudio {
        line: usize,
        audio_id: String,
        first_line: usize,
    },
    #[error("line {line}: {source}")]
    Entry {
        line: usize,
        #[source]
        source: AnnotationError,
    },
}

// Split is read as a plain string so an unknown value gets its own error.
#[derive(Deserialize)]
struct RawEntry {
    audio_id: String,
    #[serde(default)]
    audio_path: String,
    split: String,
    caption_ids: Vec<String>,
}

#[derive(Serialize)]
struct EntryLine<'a> {
    audio_id: &'a str,
    audio_path: &'a str,
    split: Split,
    caption_ids: &'a [String],
}

fn parse_split(s: &str) -> Option<Split> {
    match s {
        "train" => Some(Split::Train),
        "val" => Some(Split::Val),
        "test" => Some(Split::Test),
        _ => None,
    }
}

/// Parses a manifest; blank lines are skipped and unknown keys ignored.
/// Line numbers in errors are 1-based.
pub fn parse_manifest(input: &str, source_name: &str) -> Result<CorpusManifest, ManifestError> {
    let mut entries = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut captions: HashMap<String, usize> = HashMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|source| ManifestError::Json {
            line: line_no,
            source,
        })?;
        let split = parse_split(&raw.split).ok_or_else(|| ManifestError::UnknownSplit {
            line: line_no,
            value: raw.split.clone(),
        })?;
        if let Some(&first_line) = seen.get(&raw.audio_id) {
            return Err(ManifestError::DuplicateAudio {
                line: line_no,
                audio_id: raw.audio_id,
                first_line,
            });
        }
        seen.insert(raw.audio_id.clone(), line_no);
        let entry = ManifestEntry {
            audio_id: raw.audio_id,
            audio_path: raw.audio_path,
            split,
            caption_ids: raw.caption_ids,
        };
        entry.validate().map_err(|source| ManifestError::Entry {
            line: line_no,
            source,
        })?;
        for caption_id in &entry.caption_ids {
            if captions.insert(caption_id.clone(), line_no).is_some() {
                return Err(ManifestError::Entry {
                    line: line_no,
                    source: AnnotationError::DuplicateCaptionRef {
                        caption_id: caption_id.clone(),
                    },
                });
            }
        }
        entries.push(entry);
    }
    Ok(CorpusManifest {
        source_name: source_name.to_string(),
        entries,
    })
}

pub fn write_manifest(manifest: &CorpusManifest) -> String {
    let mut out = String::new();
    for e in &manifest.entries {
        let line = EntryLine {
            audio_id: &e.audio_id,
            audio_path: &e.audio_path,
            split: e.split,
            caption_ids: &e.caption_ids,
        };
        out.push_str(&serde_json::to_string(&line).expect("manifest entry serializes"));
        out.push('\n');
    }
    out
}
