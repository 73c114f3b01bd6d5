//! Paraphrase expansion of accepted pairs.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::Corpus;
use crate::exec::{Executor, Sequential};
use crate::filtering::{verify_pair, FilterConfig, FilterError};
use crate::gateway::{clean_paraphrases, ModelGateway};
use crate::generation::QaPairDraft;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParaphraseConfig {
    pub k: usize,
    /// Round-trip in-caption paraphrases through the filter again.
    pub reverify: bool,
}

impl Default for ParaphraseConfig {
    fn default() -> Self {
        ParaphraseConfig {
            k: 5,
            reverify: true,
        }
    }
}

/// A pair after paraphrase expansion. `paraphrase_of` holds the original
/// question for paraphrases and is `None` for originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedPair {
    #[serde(flatten)]
    pub draft: QaPairDraft,
    pub paraphrase_of: Option<String>,
}

impl ExpandedPair {
    pub fn original(draft: QaPairDraft) -> Self {
        ExpandedPair {
            draft,
            paraphrase_of: None,
        }
    }
}

/// One original followed by its surviving paraphrases.
pub fn expand_one<G: ModelGateway + ?Sized>(
    gateway: &G,
    original: &QaPairDraft,
    caption_text: &str,
    pcfg: &ParaphraseConfig,
    fcfg: &FilterConfig,
) -> Vec<ExpandedPair> {
    let mut out = Vec::with_capacity(pcfg.k + 1);
    out.push(ExpandedPair::original(original.clone()));
    let Ok(raw) = gateway.paraphrase_question(&original.question, pcfg.k) else {
        return out;
    };
    for question in clean_paraphrases(&original.question, raw, pcfg.k) {
        let mut draft = original.clone();
        draft.question = question;
        if pcfg.reverify && draft.ctype.is_in_caption() {
            let result = verify_pair(gateway, &draft, caption_text, fcfg);
            if !result.accepted {
                continue;
            }
            draft.verified = Some(result);
        }
        out.push(ExpandedPair {
            draft,
            paraphrase_of: Some(original.question.clone()),
        });
    }
    out
}

pub fn expand<G: ModelGateway + Sync + ?Sized>(
    gateway: &G,
    accepted: &[QaPairDraft],
    corpus: &Corpus,
    pcfg: &ParaphraseConfig,
    fcfg: &FilterConfig,
) -> Result<Vec<ExpandedPair>, FilterError> {
    expand_with(&Sequential, gateway, accepted, corpus, pcfg, fcfg)
}

pub fn expand_with<E: Executor, G: ModelGateway + Sync + ?Sized>(
    executor: &E,
    gateway: &G,
    accepted: &[QaPairDraft],
    corpus: &Corpus,
    pcfg: &ParaphraseConfig,
    fcfg: &FilterConfig,
) -> Result<Vec<ExpandedPair>, FilterError> {
    let mut texts = Vec::with_capacity(accepted.len());
    for d in accepted {
        let caption = corpus
            .caption(&d.caption_id)
            .ok_or_else(|| FilterError::UnknownCaption(d.caption_id.clone()))?;
        texts.push(caption.text.as_str());
    }
    let groups = executor.map(accepted.len(), |i| {
        expand_one(gateway, &accepted[i], texts[i], pcfg, fcfg)
    });
    Ok(groups.into_iter().flatten().collect())
}
