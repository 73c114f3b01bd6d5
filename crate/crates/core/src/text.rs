//! Small string helpers shared across stages.

use alloc::string::String;

/// Lowercases and collapses runs of whitespace to one space, trimming the ends.
///
/// This is the identity used for question/answer uniqueness and paraphrase
/// dedup.
pub fn normalize_key(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

const NUMBER_WORDS: &[&str] = &[
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
    "thirty",
    "forty",
    "fifty",
    "sixty",
    "seventy",
    "eighty",
    "ninety",
    "hundred",
    "thousand",
    "million",
    "dozen",
    "several",
    "multiple",
];

/// True for digit strings (`3`, `1,000`, `2.5`) and English cardinal words.
pub fn is_numeric_token(word: &str) -> bool {
    let word = word.trim_matches(|c: char| c.is_ascii_punctuation());
    if word.is_empty() {
        return false;
    }
    if word.chars().next().is_some_and(|c| c.is_ascii_digit())
        && word
            .chars()
            .all(|c| c.is_ascii_digit() || c == ',' || c == '.')
    {
        return true;
    }
    let lower = word.to_lowercase();
    NUMBER_WORDS.contains(&lower.as_str())
        || lower.split('-').all(|part| NUMBER_WORDS.contains(&part))
}

pub fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Removes trailing sentence punctuation (`.`, `!`, `?`, `;`, `:`, `,`) and
/// surrounding whitespace.
pub fn strip_sentence_end(s: &str) -> &str {
    s.trim()
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .trim_end()
}

/// Case-insensitive substring test.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Finds `needle` case-insensitively and returns the byte offset in `haystack`
/// just past the match. Only ASCII needles are supported.
pub(crate) fn find_ascii_ci(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    debug_assert!(needle.is_ascii());
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len())
        .find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
        .map(|i| (i, i + n.len()))
}
