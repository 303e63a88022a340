use regex::Regex;
use std::collections::HashMap;
use std::sync::OnceLock;

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// Lowercase, drop ASCII punctuation, drop articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1 when the normalized prediction equals some normalized gold answer.
pub fn exact_match(predicted: &str, gold_answers: &[String]) -> u8 {
    let p = normalize_answer(predicted);
    u8::from(gold_answers.iter().any(|g| normalize_answer(g) == p))
}

fn f1_single(predicted: &str, gold: &str) -> f64 {
    let p = normalize_answer(predicted);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        // both empty is an exact match; one empty shares nothing
        return if pt.len() == gt.len() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-overlap F1, maximized over gold answers.
pub fn f1_score(predicted: &str, gold_answers: &[String]) -> f64 {
    gold_answers.iter().map(|g| f1_single(predicted, g)).fold(0.0, f64::max)
}
