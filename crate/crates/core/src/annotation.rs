//! Annotated captions, the corpus manifest, and the joined [`Corpus`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("caption {caption_id}: no tokens")]
    EmptyCaption { caption_id: String },
    #[error("caption {caption_id}: expected token index {expected}, found {found}")]
    NonContiguous {
        caption_id: String,
        expected: usize,
        found: usize,
    },
    #[error("caption {caption_id}: token {index} has invalid head {head}")]
    InvalidHead {
        caption_id: String,
        index: usize,
        head: usize,
    },
    #[error("caption {caption_id}: expected exactly one root, found {count}")]
    RootCount { caption_id: String, count: usize },
    #[error("caption {caption_id}: token {index} text is empty or contains whitespace")]
    BadTokenText { caption_id: String, index: usize },
    #[error("duplicate audio id {audio_id}")]
    DuplicateAudio { audio_id: String },
    #[error("audio {audio_id} lists no caption ids")]
    NoCaptionIds { audio_id: String },
    #[error("caption id {caption_id} is listed more than once in the manifest")]
    DuplicateCaptionRef { caption_id: String },
    #[error("caption id {caption_id} is annotated more than once")]
    DuplicateAnnotation { caption_id: String },
    #[error("caption {caption_id} is referenced by the manifest but has no annotation")]
    MissingCaption { caption_id: String },
    #[error("caption {caption_id} is annotated for audio {found} but listed under {expected}")]
    AudioMismatch {
        caption_id: String,
        expected: String,
        found: String,
    },
}

/// Universal part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }

    /// Content-word classes: ADJ, ADV, INTJ, NOUN, PROPN, VERB.
    pub fn is_open_class(self) -> bool {
        matches!(
            self,
            Upos::Adj | Upos::Adv | Upos::Intj | Upos::Noun | Upos::Propn | Upos::Verb
        )
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownUpos(pub String);

impl fmt::Display for UnknownUpos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown UPOS tag {:?}", self.0)
    }
}

impl core::error::Error for UnknownUpos {}

impl FromStr for Upos {
    type Err = UnknownUpos;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Upos::ALL
            .iter()
            .copied()
            .find(|tag| tag.as_str() == s)
            .ok_or_else(|| UnknownUpos(s.to_string()))
    }
}

/// One word of a parsed caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub text: String,
    pub lemma: String,
    pub upos: Upos,
    /// Index of the governing token; 0 marks the root.
    pub head: usize,
    pub deprel: String,
    /// BIO entity tag such as `B-GPE`; `None` means outside any entity.
    pub ner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedCaption {
    pub caption_id: String,
    pub audio_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl AnnotatedCaption {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let caption_id = || self.caption_id.clone();
        if self.tokens.is_empty() {
            return Err(AnnotationError::EmptyCaption {
                caption_id: caption_id(),
            });
        }
        let n = self.tokens.len();
        let mut roots = 0;
        for (pos, token) in self.tokens.iter().enumerate() {
            if token.index != pos + 1 {
                return Err(AnnotationError::NonContiguous {
                    caption_id: caption_id(),
                    expected: pos + 1,
                    found: token.index,
                });
            }
            if token.head == token.index || token.head > n {
                return Err(AnnotationError::InvalidHead {
                    caption_id: caption_id(),
                    index: token.index,
                    head: token.head,
                });
            }
            if token.text.is_empty() || token.text.chars().any(char::is_whitespace) {
                return Err(AnnotationError::BadTokenText {
                    caption_id: caption_id(),
                    index: token.index,
                });
            }
            if token.head == 0 {
                roots += 1;
            }
        }
        if roots != 1 {
            return Err(AnnotationError::RootCount {
                caption_id: caption_id(),
                count: roots,
            });
        }
        Ok(())
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn root(&self) -> Option<&Token> {
        self.tokens.iter().find(|t| t.head == 0)
    }

    /// Space-joined token texts of an inclusive 1-based range.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for token in &self.tokens[start - 1..end] {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&token.text);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_id: String,
    #[serde(default)]
    pub audio_path: String,
    pub split: Split,
    pub caption_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source_name: String,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let mut audios = BTreeMap::new();
        let mut captions = BTreeMap::new();
        for entry in &self.entries {
            entry.validate()?;
            if audios.insert(entry.audio_id.as_str(), ()).is_some() {
                return Err(AnnotationError::DuplicateAudio {
                    audio_id: entry.audio_id.clone(),
                });
            }
            for caption_id in &entry.caption_ids {
                if captions.insert(caption_id.as_str(), ()).is_some() {
                    return Err(AnnotationError::DuplicateCaptionRef {
                        caption_id: caption_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl ManifestEntry {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.caption_ids.is_empty() {
            return Err(AnnotationError::NoCaptionIds {
                audio_id: self.audio_id.clone(),
            });
        }
        for (i, id) in self.caption_ids.iter().enumerate() {
            if self.caption_ids[..i].contains(id) {
                return Err(AnnotationError::DuplicateCaptionRef {
                    caption_id: id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Non-fatal findings from [`build_corpus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusWarning {
    UnreferencedCaption { caption_id: String },
}

/// A manifest joined with its caption annotations. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    manifest: CorpusManifest,
    // Ordered by manifest entry, then by caption id order within the entry.
    captions: Vec<AnnotatedCaption>,
    caption_index: BTreeMap<String, usize>,
    audio_index: BTreeMap<String, usize>,
}

/// Joins annotations onto the manifest by caption id.
///
/// Every caption the manifest references must be present; annotations that no
/// entry references are dropped and reported as warnings.
pub fn build_corpus(
    manifest: CorpusManifest,
    captions: Vec<AnnotatedCaption>,
) -> Result<(Corpus, Vec<CorpusWarning>), AnnotationError> {
    manifest.validate()?;
    let mut by_id: BTreeMap<String, AnnotatedCaption> = BTreeMap::new();
    let mut file_order = Vec::new();
    for caption in captions {
        caption.validate()?;
        if by_id.contains_key(&caption.caption_id) {
            return Err(AnnotationError::DuplicateAnnotation {
                caption_id: caption.caption_id,
            });
        }
        file_order.push(caption.caption_id.clone());
        by_id.insert(caption.caption_id.clone(), caption);
    }

    let mut ordered = Vec::new();
    let mut caption_index = BTreeMap::new();
    let mut audio_index = BTreeMap::new();
    for (entry_pos, entry) in manifest.entries.iter().enumerate() {
        audio_index.insert(entry.audio_id.clone(), entry_pos);
        for caption_id in &entry.caption_ids {
            let caption =
                by_id
                    .remove(caption_id)
                    .ok_or_else(|| AnnotationError::MissingCaption {
                        caption_id: caption_id.clone(),
                    })?;
            if caption.audio_id != entry.audio_id {
                return Err(AnnotationError::AudioMismatch {
                    caption_id: caption_id.clone(),
                    expected: entry.audio_id.clone(),
                    found: caption.audio_id,
                });
            }
            caption_index.insert(caption_id.clone(), ordered.len());
            ordered.push(caption);
        }
    }

    let warnings = file_order
        .into_iter()
        .filter(|id| by_id.contains_key(id))
        .map(|caption_id| CorpusWarning::UnreferencedCaption { caption_id })
        .collect();

    Ok((
        Corpus {
            manifest,
            captions: ordered,
            caption_index,
            audio_index,
        },
        warnings,
    ))
}

impl Corpus {
    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    /// Captions in manifest order.
    pub fn captions(&self) -> &[AnnotatedCaption] {
        &self.captions
    }

    pub fn caption(&self, caption_id: &str) -> Option<&AnnotatedCaption> {
        self.caption_index
            .get(caption_id)
            .map(|&i| &self.captions[i])
    }

    pub fn entry(&self, audio_id: &str) -> Option<&ManifestEntry> {
        self.audio_index
            .get(audio_id)
            .map(|&i| &self.manifest.entries[i])
    }

    /// Captions of one audio in manifest order.
    pub fn captions_of<'a>(
        &'a self,
        audio_id: &str,
    ) -> impl Iterator<Item = &'a AnnotatedCaption> + 'a {
        let ids: &'a [String] = self
            .entry(audio_id)
            .map(|e| e.caption_ids.as_slice())
            .unwrap_or(&[]);
        ids.iter().filter_map(move |id| self.caption(id))
    }

    /// Audio that a caption belongs to.
    pub fn audio_of(&self, caption_id: &str) -> Option<&str> {
        self.caption(caption_id).map(|c| c.audio_id.as_str())
    }

    pub fn num_audios(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn num_captions(&self) -> usize {
        self.captions.len()
    }
}
