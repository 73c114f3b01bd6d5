#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use aquallm::conllu::parse_conllu;
use aquallm::manifest::parse_manifest;
use aquallm_core::{build_corpus, AnnotatedCaption, CandidateType, Corpus, Span};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn fixture_captions() -> Vec<AnnotatedCaption> {
    parse_conllu(&read_fixture("captions.conllu")).unwrap()
}

pub fn fixture_corpus() -> Corpus {
    let manifest = parse_manifest(&read_fixture("manifest.jsonl"), "manifest").unwrap();
    let (corpus, warnings) = build_corpus(manifest, fixture_captions()).unwrap();
    assert!(warnings.is_empty());
    corpus
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedCandidate {
    pub span: Span,
    pub ctype: CandidateType,
    pub text: String,
}

/// The hand-derived candidate table, keyed by caption id.
pub fn expected_candidates() -> HashMap<String, Vec<ExpectedCandidate>> {
    let mut out: HashMap<String, Vec<ExpectedCandidate>> = HashMap::new();
    for line in read_fixture("expected_candidates.tsv").lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5, "bad oracle row {line:?}");
        let ctype = CandidateType::ALL
            .into_iter()
            .find(|t| t.as_str() == cols[3])
            .unwrap_or_else(|| panic!("unknown type in {line:?}"));
        out.entry(cols[0].to_string())
            .or_default()
            .push(ExpectedCandidate {
                span: Span::new(cols[1].parse().unwrap(), cols[2].parse().unwrap()),
                ctype,
                text: cols[4].to_string(),
            });
    }
    out
}

/// Config JSON for the mock gateway with the given worker count.
pub fn mock_config(workers: usize) -> String {
    format!(r#"{{"workers":{workers}}}"#)
}
