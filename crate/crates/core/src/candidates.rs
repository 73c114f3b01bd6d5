//! Candidate answer extraction.
//!
//! In-caption candidates come from five rule families over the POS and
//! dependency layers of a caption:
//!
//! * **Noun**: base noun phrases (a NOUN/PROPN head plus the unbroken run of
//!   `det`/`amod`/`compound`/`nummod`/`poss` dependents directly to its left)
//!   and maximal named-entity runs from the BIO layer.
//! * **Verbal**, **Adjective**, **Adverbial**: maximal contiguous spans that
//!   open with a VERB/ADJ/ADV, close with the same tag or a NOUN/PROPN, and
//!   contain only open-class tags in between.
//! * **Cardinal**: every NUM token, plus the NUM together with the noun phrase
//!   it modifies.
//!
//! Out-of-caption candidates (yes, no, zero) are constructed during question
//! generation and never produced here.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotatedCaption, Upos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CandidateType {
    Noun,
    Verbal,
    Adjective,
    Adverbial,
    Cardinal,
    BooleanYes,
    BooleanNo,
    Zero,
}

impl CandidateType {
    pub const ALL: [CandidateType; 8] = [
        CandidateType::Noun,
        CandidateType::Verbal,
        CandidateType::Adjective,
        CandidateType::Adverbial,
        CandidateType::Cardinal,
        CandidateType::BooleanYes,
        CandidateType::BooleanNo,
        CandidateType::Zero,
    ];

    /// In-caption types are answered by span extraction.
    pub fn is_in_caption(self) -> bool {
        matches!(
            self,
            CandidateType::Noun
                | CandidateType::Verbal
                | CandidateType::Adjective
                | CandidateType::Adverbial
                | CandidateType::Cardinal
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateType::Noun => "Noun",
            CandidateType::Verbal => "Verbal",
            CandidateType::Adjective => "Adjective",
            CandidateType::Adverbial => "Adverbial",
            CandidateType::Cardinal => "Cardinal",
            CandidateType::BooleanYes => "BooleanYes",
            CandidateType::BooleanNo => "BooleanNo",
            CandidateType::Zero => "Zero",
        }
    }

    /// Fixed answer of out-of-caption types.
    pub fn fixed_answer(self) -> Option<&'static str> {
        match self {
            CandidateType::BooleanYes => Some("yes"),
            CandidateType::BooleanNo => Some("no"),
            CandidateType::Zero => Some("zero"),
            _ => None,
        }
    }
}

/// Inclusive range of 1-based token indices. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn strictly_contains(&self, other: &Span) -> bool {
        self.contains(other) && self != other
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub caption_id: String,
    pub ctype: CandidateType,
    pub span: Option<Span>,
    pub text: String,
}

impl AnswerCandidate {
    fn in_caption(caption: &AnnotatedCaption, ctype: CandidateType, span: Span) -> Self {
        AnswerCandidate {
            caption_id: caption.caption_id.clone(),
            ctype,
            span: Some(span),
            text: caption.span_text(span.start, span.end),
        }
    }
}

const NP_LEFT_DEPRELS: [&str; 5] = ["det", "amod", "compound", "nummod", "poss"];

/// Base noun phrase for a nominal head: the head plus the contiguous run of
/// qualifying left dependents ending right before it.
pub fn noun_phrase_span(caption: &AnnotatedCaption, head: usize) -> Span {
    let mut start = head;
    while start > 1 {
        let prev = &caption.tokens[start - 2];
        if prev.head == head && NP_LEFT_DEPRELS.contains(&base_deprel(&prev.deprel)) {
            start -= 1;
        } else {
            break;
        }
    }
    Span::new(start, head)
}

// `compound:prt` and similar subtypes count as their base relation.
fn base_deprel(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

/// Maximal BIO runs of the entity layer.
pub fn entity_spans(caption: &AnnotatedCaption) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, &str)> = None;
    for token in &caption.tokens {
        let tag = token.ner.as_deref().unwrap_or("O");
        let (prefix, kind) = match tag.split_once('-') {
            Some((p, k)) => (p, k),
            None => (tag, ""),
        };
        let continues = prefix == "I" && current.is_some_and(|(_, k)| k == kind);
        if continues {
            continue;
        }
        if let Some((start, _)) = current.take() {
            spans.push(Span::new(start, token.index - 1));
        }
        if prefix == "B" || prefix == "I" {
            current = Some((token.index, kind));
        }
    }
    if let Some((start, _)) = current {
        spans.push(Span::new(start, caption.tokens.len()));
    }
    spans
}

pub fn extract_noun_candidates(caption: &AnnotatedCaption) -> Vec<AnswerCandidate> {
    let mut spans: Vec<Span> = caption
        .tokens
        .iter()
        .filter(|t| matches!(t.upos, Upos::Noun | Upos::Propn))
        .map(|t| noun_phrase_span(caption, t.index))
        .collect();
    spans.extend(entity_spans(caption));
    spans.sort();
    spans.dedup();
    spans
        .into_iter()
        .map(|span| AnswerCandidate::in_caption(caption, CandidateType::Noun, span))
        .collect()
}

/// Closing tags allowed for each opener.
pub fn default_closers(opener: Upos) -> &'static [Upos] {
    match opener {
        Upos::Verb => &[Upos::Verb, Upos::Noun, Upos::Propn],
        Upos::Adj => &[Upos::Adj, Upos::Noun, Upos::Propn],
        Upos::Adv => &[Upos::Adv, Upos::Noun, Upos::Propn],
        _ => &[],
    }
}

fn sequence_type(opener: Upos) -> CandidateType {
    match opener {
        Upos::Adj => CandidateType::Adjective,
        Upos::Adv => CandidateType::Adverbial,
        _ => CandidateType::Verbal,
    }
}

/// Maximal opener ... closer spans with open-class interiors.
pub fn extract_sequence_candidates(
    caption: &AnnotatedCaption,
    opener: Upos,
    closers: &[Upos],
) -> Vec<AnswerCandidate> {
    let tags: Vec<Upos> = caption.tokens.iter().map(|t| t.upos).collect();
    sequence_spans(&tags, opener, closers)
        .into_iter()
        .map(|span| AnswerCandidate::in_caption(caption, sequence_type(opener), span))
        .collect()
}

/// Span search over a bare tag sequence, in (start, end) order.
pub fn sequence_spans(tags: &[Upos], opener: Upos, closers: &[Upos]) -> Vec<Span> {
    // Longest valid span per start position. Any valid span is contained in
    // the longest span of its own start, so maximality only has to compare
    // these.
    let mut longest: Vec<Span> = Vec::new();
    for (i, &tag) in tags.iter().enumerate() {
        if tag != opener {
            continue;
        }
        let mut best = closers.contains(&opener).then_some(i);
        for (j, &next) in tags.iter().enumerate().skip(i + 1) {
            if closers.contains(&next) {
                best = Some(j);
            }
            if !next.is_open_class() {
                break;
            }
        }
        if let Some(end) = best {
            longest.push(Span::new(i + 1, end + 1));
        }
    }
    longest
        .iter()
        .filter(|span| !longest.iter().any(|other| other.strictly_contains(span)))
        .copied()
        .collect()
}

pub fn extract_cardinal_candidates(caption: &AnnotatedCaption) -> Vec<AnswerCandidate> {
    let mut spans = Vec::new();
    for token in caption.tokens.iter().filter(|t| t.upos == Upos::Num) {
        spans.push(Span::new(token.index, token.index));
        let modifies_next_phrase = base_deprel(&token.deprel) == "nummod"
            && token.head > token.index
            && caption
                .token(token.head)
                .is_some_and(|h| matches!(h.upos, Upos::Noun | Upos::Propn));
        if modifies_next_phrase {
            let phrase = noun_phrase_span(caption, token.head);
            // The phrase must begin at or right after the number.
            if phrase.start <= token.index + 1 && phrase.start >= token.index {
                spans.push(Span::new(token.index, phrase.end));
            }
        }
    }
    spans.sort();
    spans.dedup();
    spans
        .into_iter()
        .map(|span| AnswerCandidate::in_caption(caption, CandidateType::Cardinal, span))
        .collect()
}

/// All in-caption candidates of a caption.
///
/// Candidates with the same span from several rule families are kept once,
/// typed by the earliest family in Noun, Verbal, Adjective, Adverbial,
/// Cardinal order. Output is sorted by (start, end, type).
pub fn extract_candidates(caption: &AnnotatedCaption) -> Vec<AnswerCandidate> {
    let families = [
        extract_noun_candidates(caption),
        extract_sequence_candidates(caption, Upos::Verb, default_closers(Upos::Verb)),
        extract_sequence_candidates(caption, Upos::Adj, default_closers(Upos::Adj)),
        extract_sequence_candidates(caption, Upos::Adv, default_closers(Upos::Adv)),
        extract_cardinal_candidates(caption),
    ];
    let mut out: Vec<AnswerCandidate> = Vec::new();
    for candidate in families.into_iter().flatten() {
        let duplicate = out
            .iter()
            .any(|c| c.span == candidate.span && c.text == candidate.text);
        if !duplicate {
            out.push(candidate);
        }
    }
    out.sort_by_key(|c| (c.span, c.ctype));
    out
}
