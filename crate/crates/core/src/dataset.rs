//! Final triplets and dataset statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::{Corpus, Split};
use crate::candidates::CandidateType;
use crate::metric::normalize_answer;
use crate::paraphrase::ExpandedPair;
use crate::text::normalize_key;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub caption_id: String,
    pub ctype: CandidateType,
    pub origin_caption_id: String,
    pub paraphrase_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AqaTriplet {
    pub audio_id: String,
    pub audio_path: String,
    pub question: String,
    pub answer: String,
    pub split: Split,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssemblyError {
    #[error("pair refers to unknown audio {0}")]
    UnknownAudio(String),
    #[error(
        "pair for audio {audio_id} has an empty answer or a question without '?': {question:?}"
    )]
    InvalidPair { audio_id: String, question: String },
}

/// One triplet per pair, split and path taken from the manifest.
///
/// Within an audio, pairs repeating an earlier (question, answer) after
/// case/whitespace normalization are dropped. Output is ordered by split,
/// then audio id, then input order.
pub fn assemble(pairs: &[ExpandedPair], corpus: &Corpus) -> Result<Vec<AqaTriplet>, AssemblyError> {
    let mut seen: BTreeSet<(&str, String, String)> = BTreeSet::new();
    let mut out = Vec::new();
    for pair in pairs {
        let d = &pair.draft;
        let entry = corpus
            .entry(&d.audio_id)
            .ok_or_else(|| AssemblyError::UnknownAudio(d.audio_id.clone()))?;
        if d.answer.trim().is_empty() || !d.question.trim_end().ends_with('?') {
            return Err(AssemblyError::InvalidPair {
                audio_id: d.audio_id.clone(),
                question: d.question.clone(),
            });
        }
        let key = (
            entry.audio_id.as_str(),
            normalize_key(&d.question),
            normalize_key(&d.answer),
        );
        if !seen.insert(key) {
            continue;
        }
        out.push(AqaTriplet {
            audio_id: d.audio_id.clone(),
            audio_path: entry.audio_path.clone(),
            question: d.question.clone(),
            answer: d.answer.clone(),
            split: entry.split,
            provenance: Provenance {
                caption_id: d.caption_id.clone(),
                ctype: d.ctype,
                origin_caption_id: d.origin_caption_id.clone(),
                paraphrase_of: pair.paraphrase_of.clone(),
            },
        });
    }
    // stable: keeps input order within an audio
    out.sort_by(|a, b| (a.split, &a.audio_id).cmp(&(b.split, &b.audio_id)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Audios in the source manifest.
    pub num_audios: usize,
    /// Captions in the source corpus.
    pub num_captions: usize,
    pub num_triplets: usize,
    pub num_unique_questions: usize,
    pub num_unique_answers: usize,
    /// Distinct normalized tokens over generated questions and answers.
    pub vocab_size: usize,
    /// Distinct normalized tokens over the source captions.
    pub caption_vocab_size: usize,
    pub per_split: BTreeMap<String, usize>,
    pub per_ctype: BTreeMap<String, usize>,
}

pub fn compute_stats(triplets: &[AqaTriplet], corpus: &Corpus) -> DatasetStats {
    let mut questions = BTreeSet::new();
    let mut answers = BTreeSet::new();
    let mut vocab = BTreeSet::new();
    let mut per_split: BTreeMap<String, usize> = [Split::Train, Split::Val, Split::Test]
        .iter()
        .map(|s| (s.as_str().to_string(), 0))
        .collect();
    let mut per_ctype: BTreeMap<String, usize> = CandidateType::ALL
        .iter()
        .map(|c| (c.as_str().to_string(), 0))
        .collect();
    for t in triplets {
        questions.insert(normalize_key(&t.question));
        answers.insert(normalize_key(&t.answer));
        vocab.extend(normalize_answer(&t.question));
        vocab.extend(normalize_answer(&t.answer));
        *per_split.entry(t.split.as_str().to_string()).or_default() += 1;
        *per_ctype
            .entry(t.provenance.ctype.as_str().to_string())
            .or_default() += 1;
    }
    let caption_vocab: BTreeSet<String> = corpus
        .captions()
        .iter()
        .flat_map(|c| normalize_answer(&c.text))
        .collect();
    DatasetStats {
        num_audios: corpus.num_audios(),
        num_captions: corpus.num_captions(),
        num_triplets: triplets.len(),
        num_unique_questions: questions.len(),
        num_unique_answers: answers.len(),
        vocab_size: vocab.len(),
        caption_vocab_size: caption_vocab.len(),
        per_split,
        per_ctype,
    }
}
