//! The language-model capabilities the pipeline consumes, and an offline mock.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::text::{
    contains_ci, find_ascii_ci, is_numeric_token, lowercase_first, normalize_key,
    strip_sentence_end,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidInput(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("request rejected with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Answer of the extractive QA capability. `answer` is empty iff the question
/// was judged unanswerable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaOutcome {
    pub answerable: bool,
    pub answer: String,
}

impl QaOutcome {
    pub fn answered(answer: impl Into<String>) -> Self {
        let answer = answer.into();
        QaOutcome {
            answerable: !answer.is_empty(),
            answer,
        }
    }

    pub fn unanswerable() -> Self {
        QaOutcome {
            answerable: false,
            answer: String::new(),
        }
    }
}

/// Question generation, question answering and paraphrasing.
///
/// Implementations must be deterministic per argument tuple within a run;
/// the HTTP gateway gets there by caching.
pub trait ModelGateway {
    fn generate_question(&self, context: &str, answer: &str) -> Result<String, GatewayError>;

    /// A yes/no question whose answer given `context` is "yes".
    fn generate_boolean_question(&self, context: &str) -> Result<String, GatewayError>;

    fn answer_question(&self, context: &str, question: &str) -> Result<QaOutcome, GatewayError>;

    /// Up to `k` distinct rewrites of `question`, best first.
    fn paraphrase_question(&self, question: &str, k: usize) -> Result<Vec<String>, GatewayError>;

    /// Whether [`answer_question`](Self::answer_question) can answer yes/no
    /// questions with "yes".
    fn supports_boolean_qa(&self) -> bool {
        false
    }
}

impl<G: ModelGateway + ?Sized> ModelGateway for &G {
    fn generate_question(&self, context: &str, answer: &str) -> Result<String, GatewayError> {
        (**self).generate_question(context, answer)
    }

    fn generate_boolean_question(&self, context: &str) -> Result<String, GatewayError> {
        (**self).generate_boolean_question(context)
    }

    fn answer_question(&self, context: &str, question: &str) -> Result<QaOutcome, GatewayError> {
        (**self).answer_question(context, question)
    }

    fn paraphrase_question(&self, question: &str, k: usize) -> Result<Vec<String>, GatewayError> {
        (**self).paraphrase_question(question, k)
    }

    fn supports_boolean_qa(&self) -> bool {
        (**self).supports_boolean_qa()
    }
}

pub fn require_non_empty(field: &str, value: &str) -> Result<(), GatewayError> {
    if value.trim().is_empty() {
        Err(GatewayError::InvalidInput(format!(
            "{field} must not be empty"
        )))
    } else {
        Ok(())
    }
}

/// Trims a generated question and checks it ends with `?`.
pub fn validate_question(question: &str) -> Result<String, GatewayError> {
    let q = question.trim();
    if q.len() > 1 && q.ends_with('?') {
        Ok(q.to_string())
    } else {
        Err(GatewayError::Malformed(format!(
            "generated question {q:?} does not end with '?'"
        )))
    }
}

/// Applies the paraphrase contract to raw model output: drops rewrites equal
/// to the original or to an earlier rewrite after case/whitespace
/// normalization, drops entries that are not questions, keeps at most `k`.
pub fn clean_paraphrases(question: &str, raw: Vec<String>, k: usize) -> Vec<String> {
    let mut seen = vec![normalize_key(question)];
    let mut out = Vec::new();
    for candidate in raw {
        if out.len() == k {
            break;
        }
        let candidate = candidate.trim();
        if !candidate.ends_with('?') {
            continue;
        }
        let key = normalize_key(candidate);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        out.push(candidate.to_string());
    }
    out
}

const QG_PREFIX: &str = "What is mentioned in connection with ";
const QG_MARKER: &str = "mentioned in connection with ";
const BOOLEAN_PREFIX: &str = "Is it true that ";
const BOOLEAN_MARKER: &str = "is it true that ";

const FUNCTION_WORDS: &[&str] = &[
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how", "is", "are", "was",
    "were", "be", "been", "do", "does", "did", "can", "could", "will", "would", "should", "may",
    "might", "must", "has", "have", "had", "the", "a", "an", "it", "that", "this", "of", "in",
    "on", "at", "to", "for", "with", "by", "from", "you", "me", "say", "tell",
];

/// Deterministic stand-in for the three models.
///
/// * question generation: `What is mentioned in connection with {answer}?`,
///   or `How many {noun} are mentioned in connection with {answer}?` when the
///   answer starts with a number and a counted noun is known;
/// * boolean questions: `Is it true that {caption}?` with the caption's final
///   punctuation removed and its first letter lowercased;
/// * question answering: reads the answer slot back out of either template
///   and answers only if the slot text occurs in the context;
/// * paraphrasing: five fixed string rewrites.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGateway;

impl MockGateway {
    pub fn new() -> Self {
        MockGateway
    }

    /// The raw, un-deduplicated rewrites in rule order.
    pub fn rewrites(question: &str) -> [String; 5] {
        let q = question.trim();
        let lowered = lowercase_first(q);
        let body = q.strip_suffix('?').unwrap_or(q).trim_end();
        let which = match q.strip_prefix("What ") {
            Some(rest) => format!("Which thing {rest}"),
            None => format!("Exactly {lowered}"),
        };
        [
            format!("Tell me, {lowered}"),
            which,
            format!("{body} exactly?"),
            format!("Can you say {lowered}"),
            uppercase_first_content_word(q),
        ]
    }
}

fn uppercase_first_content_word(q: &str) -> String {
    let mut out = String::with_capacity(q.len());
    let mut done = false;
    for (i, word) in q.split(' ').enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let bare = word
            .trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase();
        if !done && !bare.is_empty() && !FUNCTION_WORDS.contains(&bare.as_str()) {
            out.push_str(&word.to_uppercase());
            done = true;
        } else {
            out.push_str(word);
        }
    }
    out
}

fn words_ci_eq(a: &str, b: &str) -> bool {
    let trim = |w: &str| {
        w.trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase()
    };
    trim(a) == trim(b)
}

/// Word that follows `answer` in `context`, if `answer` occurs there as whole
/// words and the next word is alphabetic.
fn word_after(context: &str, answer: &str) -> Option<String> {
    let ctx: Vec<&str> = context.split_whitespace().collect();
    let ans: Vec<&str> = answer.split_whitespace().collect();
    if ans.is_empty() || ans.len() >= ctx.len() {
        return None;
    }
    (0..ctx.len() - ans.len()).find_map(|i| {
        let hit = ctx[i..i + ans.len()]
            .iter()
            .zip(&ans)
            .all(|(c, a)| words_ci_eq(c, a));
        if !hit {
            return None;
        }
        let next = ctx[i + ans.len()].trim_matches(|c: char| c.is_ascii_punctuation());
        (!next.is_empty() && next.chars().all(char::is_alphabetic)).then(|| next.to_string())
    })
}

/// Text between `marker` and the final `?`.
fn slot_after<'q>(question: &'q str, marker: &str) -> Option<&'q str> {
    let q = question.trim();
    let inner = q.strip_suffix('?')?;
    let (_, end) = find_ascii_ci(inner, marker)?;
    let slot = inner[end..].trim();
    (!slot.is_empty()).then_some(slot)
}

impl ModelGateway for MockGateway {
    fn generate_question(&self, context: &str, answer: &str) -> Result<String, GatewayError> {
        require_non_empty("context", context)?;
        require_non_empty("answer", answer)?;
        let answer = answer.trim();
        let mut words = answer.split_whitespace();
        let leads_with_number = words.next().is_some_and(is_numeric_token);
        if leads_with_number {
            let rest: Vec<&str> = words.collect();
            let counted = if rest.is_empty() {
                word_after(context, answer)
            } else {
                Some(rest.join(" "))
            };
            if let Some(noun) = counted {
                return Ok(format!("How many {noun} are {QG_MARKER}{answer}?"));
            }
        }
        Ok(format!("{QG_PREFIX}{answer}?"))
    }

    fn generate_boolean_question(&self, context: &str) -> Result<String, GatewayError> {
        require_non_empty("context", context)?;
        let clause = lowercase_first(strip_sentence_end(context));
        Ok(format!("{BOOLEAN_PREFIX}{clause}?"))
    }

    fn answer_question(&self, context: &str, question: &str) -> Result<QaOutcome, GatewayError> {
        require_non_empty("context", context)?;
        require_non_empty("question", question)?;
        if let Some(slot) = slot_after(question, QG_MARKER) {
            return Ok(if contains_ci(context, slot) {
                QaOutcome::answered(slot)
            } else {
                QaOutcome::unanswerable()
            });
        }
        if let Some(clause) = slot_after(question, BOOLEAN_MARKER) {
            return Ok(if contains_ci(context, clause) {
                QaOutcome::answered("yes")
            } else {
                QaOutcome::unanswerable()
            });
        }
        Ok(QaOutcome::unanswerable())
    }

    fn paraphrase_question(&self, question: &str, k: usize) -> Result<Vec<String>, GatewayError> {
        require_non_empty("question", question)?;
        if k == 0 {
            return Err(GatewayError::InvalidInput("k must be at least 1".into()));
        }
        Ok(clean_paraphrases(
            question,
            Self::rewrites(question).into(),
            k,
        ))
    }

    fn supports_boolean_qa(&self) -> bool {
        true
    }
}
