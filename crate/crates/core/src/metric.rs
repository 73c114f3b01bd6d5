//! SQuAD-style answer normalization and token-level F1.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Lowercase, drop ASCII punctuation, drop the articles `a`/`an`/`the`, and
/// split on whitespace.
pub fn normalize_answer(s: &str) -> Vec<String> {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(String::from)
        .collect()
}

/// Harmonic mean of token precision and recall over normalized multisets.
///
/// Two empty answers score 1, one empty answer scores 0.
pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(reference);
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for token in &gold {
        *counts.entry(token.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for token in &pred {
        if let Some(n) = counts.get_mut(token.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    // 2PR/(P+R) reduces to 2·overlap/(|pred|+|gold|), which divides exact
    // integers once and so lands exactly on ratios like 11/20.
    (2 * overlap) as f64 / (pred.len() + gold.len()) as f64
}
