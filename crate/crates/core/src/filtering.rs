//! Round-trip consistency filtering.
//!
//! Each generated question is answered again from its caption. An
//! in-caption pair survives only if the QA model finds an answer and that
//! answer's token F1 against the original candidate is strictly greater than
//! `tau`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::Corpus;
use crate::candidates::CandidateType;
use crate::exec::{Executor, Sequential};
use crate::gateway::{ModelGateway, QaOutcome};
use crate::generation::QaPairDraft;
use crate::metric::{normalize_answer, token_f1};
use crate::text::is_numeric_token;

pub const DEFAULT_TAU: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VerifyReason {
    Accepted,
    LowF1,
    Unanswerable,
    NegativeCheckFailed,
    GatewayError,
}

impl VerifyReason {
    pub const ALL: [VerifyReason; 5] = [
        VerifyReason::Accepted,
        VerifyReason::LowF1,
        VerifyReason::Unanswerable,
        VerifyReason::NegativeCheckFailed,
        VerifyReason::GatewayError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerifyReason::Accepted => "Accepted",
            VerifyReason::LowF1 => "LowF1",
            VerifyReason::Unanswerable => "Unanswerable",
            VerifyReason::NegativeCheckFailed => "NegativeCheckFailed",
            VerifyReason::GatewayError => "GatewayError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub model_answer: String,
    pub answerable: bool,
    pub f1: f64,
    pub accepted: bool,
    pub reason: VerifyReason,
    /// Accepted without consulting the QA model.
    #[serde(default)]
    pub passthrough: bool,
}

impl VerificationResult {
    fn passthrough() -> Self {
        VerificationResult {
            model_answer: String::new(),
            answerable: false,
            f1: 0.0,
            accepted: true,
            reason: VerifyReason::Accepted,
            passthrough: true,
        }
    }

    fn gateway_error() -> Self {
        VerificationResult {
            model_answer: String::new(),
            answerable: false,
            f1: 0.0,
            accepted: false,
            reason: VerifyReason::GatewayError,
            passthrough: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub tau: f64,
    /// Re-ask borrowed "no"/"zero" questions against their target caption.
    pub recheck_negatives: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            tau: DEFAULT_TAU,
            recheck_negatives: false,
        }
    }
}

impl FilterConfig {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("draft refers to unknown caption {0}")]
    UnknownCaption(String),
}

fn extractive(outcome: QaOutcome, reference: &str, tau: f64) -> VerificationResult {
    let f1 = if outcome.answerable {
        token_f1(&outcome.answer, reference)
    } else {
        0.0
    };
    let accepted = outcome.answerable && f1 > tau;
    let reason = if accepted {
        VerifyReason::Accepted
    } else if !outcome.answerable {
        VerifyReason::Unanswerable
    } else {
        VerifyReason::LowF1
    };
    VerificationResult {
        model_answer: outcome.answer,
        answerable: outcome.answerable,
        f1,
        accepted,
        reason,
        passthrough: false,
    }
}

/// Verifies one draft against the text of the caption it is attached to.
pub fn verify_pair<G: ModelGateway + ?Sized>(
    gateway: &G,
    draft: &QaPairDraft,
    caption_text: &str,
    cfg: &FilterConfig,
) -> VerificationResult {
    match draft.ctype {
        t if t.is_in_caption() => match gateway.answer_question(caption_text, &draft.question) {
            Ok(outcome) => extractive(outcome, &draft.answer, cfg.tau),
            Err(_) => VerificationResult::gateway_error(),
        },
        CandidateType::BooleanYes if gateway.supports_boolean_qa() => {
            match gateway.answer_question(caption_text, &draft.question) {
                Ok(outcome) => extractive(outcome, "yes", cfg.tau),
                Err(_) => VerificationResult::gateway_error(),
            }
        }
        CandidateType::BooleanNo | CandidateType::Zero if cfg.recheck_negatives => {
            match gateway.answer_question(caption_text, &draft.question) {
                Ok(outcome) => {
                    let tokens = normalize_answer(&outcome.answer);
                    let contradicted = outcome.answerable
                        && if draft.ctype == CandidateType::Zero {
                            tokens.iter().any(|w| is_numeric_token(w))
                        } else {
                            tokens == ["yes"]
                        };
                    VerificationResult {
                        f1: 0.0,
                        accepted: !contradicted,
                        reason: if contradicted {
                            VerifyReason::NegativeCheckFailed
                        } else {
                            VerifyReason::Accepted
                        },
                        model_answer: outcome.answer,
                        answerable: outcome.answerable,
                        passthrough: false,
                    }
                }
                Err(_) => VerificationResult::gateway_error(),
            }
        }
        _ => VerificationResult::passthrough(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtypeCounts {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub accepted: usize,
    pub passthrough: usize,
    pub by_reason: BTreeMap<String, usize>,
    pub by_ctype: BTreeMap<String, CtypeCounts>,
}

impl Default for FilterReport {
    fn default() -> Self {
        FilterReport {
            total: 0,
            accepted: 0,
            passthrough: 0,
            by_reason: VerifyReason::ALL
                .iter()
                .map(|r| (r.as_str().to_string(), 0))
                .collect(),
            by_ctype: CandidateType::ALL
                .iter()
                .map(|c| (c.as_str().to_string(), CtypeCounts::default()))
                .collect(),
        }
    }
}

impl FilterReport {
    pub fn record(&mut self, ctype: CandidateType, result: &VerificationResult) {
        self.total += 1;
        *self
            .by_reason
            .entry(result.reason.as_str().to_string())
            .or_default() += 1;
        let counts = self.by_ctype.entry(ctype.as_str().to_string()).or_default();
        if result.accepted {
            self.accepted += 1;
            counts.accepted += 1;
        } else {
            counts.rejected += 1;
        }
        if result.passthrough {
            self.passthrough += 1;
        }
    }

    pub fn reason_count(&self, reason: VerifyReason) -> usize {
        self.by_reason.get(reason.as_str()).copied().unwrap_or(0)
    }
}

pub fn filter_pairs<G: ModelGateway + Sync + ?Sized>(
    gateway: &G,
    drafts: &[QaPairDraft],
    corpus: &Corpus,
    cfg: &FilterConfig,
) -> Result<(Vec<QaPairDraft>, FilterReport), FilterError> {
    filter_pairs_with(&Sequential, gateway, drafts, corpus, cfg)
}

/// Verifies every draft and keeps the accepted ones, in input order, with
/// their verification attached.
pub fn filter_pairs_with<E: Executor, G: ModelGateway + Sync + ?Sized>(
    executor: &E,
    gateway: &G,
    drafts: &[QaPairDraft],
    corpus: &Corpus,
    cfg: &FilterConfig,
) -> Result<(Vec<QaPairDraft>, FilterReport), FilterError> {
    let mut texts = Vec::with_capacity(drafts.len());
    for d in drafts {
        let caption = corpus
            .caption(&d.caption_id)
            .ok_or_else(|| FilterError::UnknownCaption(d.caption_id.clone()))?;
        texts.push(caption.text.as_str());
    }
    let results = executor.map(drafts.len(), |i| {
        verify_pair(gateway, &drafts[i], texts[i], cfg)
    });
    let mut report = FilterReport::default();
    let mut accepted = Vec::new();
    for (draft, result) in drafts.iter().zip(results) {
        report.record(draft.ctype, &result);
        if result.accepted {
            let mut d = draft.clone();
            d.verified = Some(result);
            accepted.push(d);
        }
    }
    Ok((accepted, report))
}
