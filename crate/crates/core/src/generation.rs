//! Question generation and out-of-caption answer injection.
//!
//! Every in-caption candidate gets a generated question. Each caption also
//! gets a "yes" question generated from its own text, a "no" question
//! borrowed from another audio's "yes" pool, and each audio gets up to
//! `zero_per_audio` "How many" questions borrowed from other audios with the
//! answer rewritten to "zero". Borrowed questions are checked against the
//! target caption with the QA model so that a "no" or "zero" label is not
//! attached to a question the caption actually answers.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotatedCaption, Corpus};
use crate::candidates::{AnswerCandidate, CandidateType};
use crate::exec::{Executor, Sequential};
use crate::filtering::VerificationResult;
use crate::gateway::{GatewayError, ModelGateway, QaOutcome};
use crate::metric::normalize_answer;
use crate::sampling::{attempt_order, stream_rng};
use crate::text::{is_numeric_token, normalize_key};

/// Resample cap for "no" and "zero" injections.
pub const MAX_INJECTION_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPairDraft {
    /// Audio the pair is attached to.
    pub audio_id: String,
    /// Caption the pair is attached to.
    pub caption_id: String,
    pub question: String,
    pub answer: String,
    pub ctype: CandidateType,
    /// Caption whose text produced the question. Differs from `caption_id`
    /// only for borrowed (BooleanNo, Zero) questions.
    pub origin_caption_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<VerificationResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    pub zero_per_audio: usize,
    pub seed: u64,
    /// Check borrowed questions against the target caption before relabeling.
    pub verify_negatives: bool,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            zero_per_audio: 1,
            seed: 0,
            verify_negatives: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("candidate {text:?} is not an in-caption candidate of caption {caption_id}")]
    NotInCaption { caption_id: String, text: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Per-category draft and skip counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub icac_drafts: usize,
    pub icac_skipped: usize,
    pub yes_drafts: usize,
    pub yes_skipped: usize,
    pub no_drafts: usize,
    pub no_exhausted: usize,
    pub no_empty_pool: usize,
    pub no_gateway_errors: usize,
    pub zero_drafts: usize,
    pub zero_exhausted: usize,
    pub zero_empty_pool: usize,
    pub zero_gateway_errors: usize,
}

impl GenerationReport {
    pub fn merge(&mut self, other: &GenerationReport) {
        self.icac_drafts += other.icac_drafts;
        self.icac_skipped += other.icac_skipped;
        self.yes_drafts += other.yes_drafts;
        self.yes_skipped += other.yes_skipped;
        self.no_drafts += other.no_drafts;
        self.no_exhausted += other.no_exhausted;
        self.no_empty_pool += other.no_empty_pool;
        self.no_gateway_errors += other.no_gateway_errors;
        self.zero_drafts += other.zero_drafts;
        self.zero_exhausted += other.zero_exhausted;
        self.zero_empty_pool += other.zero_empty_pool;
        self.zero_gateway_errors += other.zero_gateway_errors;
    }
}

/// Result of one borrowed-question injection.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    Injected(QaPairDraft),
    /// Every sampled question failed the negative check.
    Exhausted,
    EmptyPool,
    Failed(GatewayError),
}

pub fn generate_for_candidate<G: ModelGateway + ?Sized>(
    gateway: &G,
    caption: &AnnotatedCaption,
    candidate: &AnswerCandidate,
) -> Result<QaPairDraft, GenerationError> {
    let belongs = candidate.ctype.is_in_caption()
        && candidate.caption_id == caption.caption_id
        && candidate
            .span
            .is_some_and(|s| s.start >= 1 && s.start <= s.end && s.end <= caption.tokens.len());
    if !belongs {
        return Err(GenerationError::NotInCaption {
            caption_id: caption.caption_id.clone(),
            text: candidate.text.clone(),
        });
    }
    let question = gateway.generate_question(&caption.text, &candidate.text)?;
    Ok(QaPairDraft {
        audio_id: caption.audio_id.clone(),
        caption_id: caption.caption_id.clone(),
        question: crate::gateway::validate_question(&question)?,
        answer: candidate.text.clone(),
        ctype: candidate.ctype,
        origin_caption_id: caption.caption_id.clone(),
        verified: None,
    })
}

pub fn inject_boolean_yes<G: ModelGateway + ?Sized>(
    gateway: &G,
    caption: &AnnotatedCaption,
) -> Result<QaPairDraft, GenerationError> {
    let question = gateway.generate_boolean_question(&caption.text)?;
    Ok(QaPairDraft {
        audio_id: caption.audio_id.clone(),
        caption_id: caption.caption_id.clone(),
        question: crate::gateway::validate_question(&question)?,
        answer: "yes".to_string(),
        ctype: CandidateType::BooleanYes,
        origin_caption_id: caption.caption_id.clone(),
        verified: None,
    })
}

fn answers_yes(outcome: &QaOutcome) -> bool {
    outcome.answerable && normalize_answer(&outcome.answer) == ["yes"]
}

fn answers_with_number(outcome: &QaOutcome) -> bool {
    outcome.answerable
        && normalize_answer(&outcome.answer)
            .iter()
            .any(|w| is_numeric_token(w))
}

/// Tries sampled pool questions against `target` until one passes the
/// negative check.
fn borrow_question<G: ModelGateway + ?Sized>(
    gateway: &G,
    target: &AnnotatedCaption,
    pool: &[&QaPairDraft],
    rng: &mut ChaCha8Rng,
    verify: bool,
    rejects: impl Fn(&QaOutcome) -> bool,
    ctype: CandidateType,
) -> Injection {
    if pool.is_empty() {
        return Injection::EmptyPool;
    }
    for i in attempt_order(rng, pool.len(), MAX_INJECTION_ATTEMPTS) {
        let source = pool[i];
        if verify {
            match gateway.answer_question(&target.text, &source.question) {
                Ok(outcome) if rejects(&outcome) => continue,
                Ok(_) => {}
                Err(e) => return Injection::Failed(e),
            }
        }
        return Injection::Injected(QaPairDraft {
            audio_id: target.audio_id.clone(),
            caption_id: target.caption_id.clone(),
            question: source.question.clone(),
            answer: ctype.fixed_answer().unwrap_or_default().to_string(),
            ctype,
            origin_caption_id: source.origin_caption_id.clone(),
            verified: None,
        });
    }
    Injection::Exhausted
}

/// Borrows another audio's yes-question and relabels it "no" for `target`.
pub fn inject_boolean_no<G: ModelGateway + ?Sized>(
    gateway: &G,
    target: &AnnotatedCaption,
    yes_pool: &[QaPairDraft],
    rng: &mut ChaCha8Rng,
    verify: bool,
) -> Injection {
    let eligible: Vec<&QaPairDraft> = yes_pool
        .iter()
        .filter(|d| d.ctype == CandidateType::BooleanYes && d.audio_id != target.audio_id)
        .collect();
    borrow_question(
        gateway,
        target,
        &eligible,
        rng,
        verify,
        answers_yes,
        CandidateType::BooleanNo,
    )
}

/// True for drafts that can seed a zero-count question.
pub fn is_how_many(draft: &QaPairDraft) -> bool {
    draft.ctype == CandidateType::Cardinal
        && draft
            .question
            .trim_start()
            .to_lowercase()
            .starts_with("how many")
}

/// Borrows a "How many" question from another audio and relabels it "zero".
/// Questions listed in `exclude` (normalized) are not reused.
pub fn inject_zero<G: ModelGateway + ?Sized>(
    gateway: &G,
    target_audio: &str,
    target_caption: &AnnotatedCaption,
    howmany_pool: &[QaPairDraft],
    exclude: &[String],
    rng: &mut ChaCha8Rng,
    verify: bool,
) -> Injection {
    let eligible: Vec<&QaPairDraft> = howmany_pool
        .iter()
        .filter(|d| is_how_many(d) && d.audio_id != target_audio)
        .filter(|d| !exclude.contains(&normalize_key(&d.question)))
        .collect();
    borrow_question(
        gateway,
        target_caption,
        &eligible,
        rng,
        verify,
        answers_with_number,
        CandidateType::Zero,
    )
}

/// Drafts for one caption: its in-caption candidates then its yes-question.
pub fn generate_caption<G: ModelGateway + ?Sized>(
    gateway: &G,
    caption: &AnnotatedCaption,
    candidates: &[AnswerCandidate],
) -> (Vec<QaPairDraft>, GenerationReport) {
    let mut report = GenerationReport::default();
    let mut drafts = Vec::with_capacity(candidates.len() + 1);
    for candidate in candidates {
        match generate_for_candidate(gateway, caption, candidate) {
            Ok(d) => {
                report.icac_drafts += 1;
                drafts.push(d);
            }
            Err(_) => report.icac_skipped += 1,
        }
    }
    match inject_boolean_yes(gateway, caption) {
        Ok(d) => {
            report.yes_drafts += 1;
            drafts.push(d);
        }
        Err(_) => report.yes_skipped += 1,
    }
    (drafts, report)
}

fn tally(injection: Injection, report: &mut GenerationReport, zero: bool) -> Option<QaPairDraft> {
    let (drafts, exhausted, empty, failed) = if zero {
        (
            &mut report.zero_drafts,
            &mut report.zero_exhausted,
            &mut report.zero_empty_pool,
            &mut report.zero_gateway_errors,
        )
    } else {
        (
            &mut report.no_drafts,
            &mut report.no_exhausted,
            &mut report.no_empty_pool,
            &mut report.no_gateway_errors,
        )
    };
    match injection {
        Injection::Injected(d) => {
            *drafts += 1;
            Some(d)
        }
        Injection::Exhausted => {
            *exhausted += 1;
            None
        }
        Injection::EmptyPool => {
            *empty += 1;
            None
        }
        Injection::Failed(_) => {
            *failed += 1;
            None
        }
    }
}

/// Zero injections for one audio, cycling through its captions as targets.
pub fn inject_zeros_for_audio<G: ModelGateway + ?Sized>(
    gateway: &G,
    corpus: &Corpus,
    audio_id: &str,
    howmany_pool: &[QaPairDraft],
    cfg: &InjectionConfig,
) -> (Vec<QaPairDraft>, GenerationReport) {
    let mut report = GenerationReport::default();
    let mut drafts = Vec::new();
    let targets: Vec<&AnnotatedCaption> = corpus.captions_of(audio_id).collect();
    if targets.is_empty() {
        return (drafts, report);
    }
    let mut rng = stream_rng(cfg.seed, "zero", &[audio_id]);
    let mut used: Vec<String> = Vec::new();
    for j in 0..cfg.zero_per_audio {
        let target = targets[j % targets.len()];
        let injection = inject_zero(
            gateway,
            audio_id,
            target,
            howmany_pool,
            &used,
            &mut rng,
            cfg.verify_negatives,
        );
        match tally(injection, &mut report, true) {
            Some(d) => {
                used.push(normalize_key(&d.question));
                drafts.push(d);
            }
            None => break,
        }
    }
    (drafts, report)
}

/// Groups a flat candidate list by caption id, keeping order.
pub fn group_candidates(candidates: &[AnswerCandidate]) -> BTreeMap<&str, Vec<AnswerCandidate>> {
    let mut grouped: BTreeMap<&str, Vec<AnswerCandidate>> = BTreeMap::new();
    for c in candidates {
        grouped
            .entry(c.caption_id.as_str())
            .or_default()
            .push(c.clone());
    }
    grouped
}

/// [`generate_all_with`] on the calling thread.
pub fn generate_all<G: ModelGateway + Sync + ?Sized>(
    gateway: &G,
    corpus: &Corpus,
    candidates: &[AnswerCandidate],
    cfg: &InjectionConfig,
) -> (Vec<QaPairDraft>, GenerationReport) {
    generate_all_with(&Sequential, gateway, corpus, candidates, cfg)
}

/// Full question generation over a corpus.
///
/// Runs in two barriers: (1) in-caption and yes-questions per caption,
/// (2) no-questions per caption and zero-questions per audio, sampling from
/// the pools completed in (1). Output is grouped per audio in manifest order:
/// each caption's candidate drafts, its yes draft and its no draft, followed
/// by the audio's zero drafts.
pub fn generate_all_with<E: Executor, G: ModelGateway + Sync + ?Sized>(
    executor: &E,
    gateway: &G,
    corpus: &Corpus,
    candidates: &[AnswerCandidate],
    cfg: &InjectionConfig,
) -> (Vec<QaPairDraft>, GenerationReport) {
    let captions = corpus.captions();
    let grouped = group_candidates(candidates);
    let empty: Vec<AnswerCandidate> = Vec::new();

    let phase_one = executor.map(captions.len(), |i| {
        let caption = &captions[i];
        let cands = grouped.get(caption.caption_id.as_str()).unwrap_or(&empty);
        generate_caption(gateway, caption, cands)
    });

    let mut yes_pool = Vec::new();
    let mut howmany_pool: Vec<QaPairDraft> = Vec::new();
    for (drafts, _) in &phase_one {
        for d in drafts {
            match d.ctype {
                CandidateType::BooleanYes => yes_pool.push(d.clone()),
                _ if is_how_many(d) => {
                    let key = normalize_key(&d.question);
                    if !howmany_pool
                        .iter()
                        .any(|p| normalize_key(&p.question) == key)
                    {
                        howmany_pool.push(d.clone());
                    }
                }
                _ => {}
            }
        }
    }

    let no_drafts = executor.map(captions.len(), |i| {
        let caption = &captions[i];
        let mut rng = stream_rng(cfg.seed, "no", &[&caption.audio_id, &caption.caption_id]);
        let mut report = GenerationReport::default();
        let injection =
            inject_boolean_no(gateway, caption, &yes_pool, &mut rng, cfg.verify_negatives);
        (tally(injection, &mut report, false), report)
    });

    let entries = &corpus.manifest().entries;
    let zero_drafts = executor.map(entries.len(), |i| {
        inject_zeros_for_audio(gateway, corpus, &entries[i].audio_id, &howmany_pool, cfg)
    });

    let mut report = GenerationReport::default();
    let mut out = Vec::new();
    let mut caption_pos = 0;
    for (entry, (zeros, zero_report)) in entries.iter().zip(zero_drafts) {
        for _ in &entry.caption_ids {
            let (drafts, r1) = &phase_one[caption_pos];
            let (no, r2) = &no_drafts[caption_pos];
            report.merge(r1);
            report.merge(r2);
            out.extend(drafts.iter().cloned());
            out.extend(no.iter().cloned());
            caption_pos += 1;
        }
        report.merge(&zero_report);
        out.extend(zeros);
    }
    (out, report)
}
