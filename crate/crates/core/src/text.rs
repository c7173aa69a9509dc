//! Text normalization shared by answer matching and confirmation parsing.

use std::collections::BTreeSet;

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercases, collapses runs of whitespace to a single space and strips
/// leading/trailing punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let mut s = collapsed.as_str();
    loop {
        let next = s.trim_matches(is_punct).trim();
        if next.len() == s.len() {
            break;
        }
        s = next;
    }
    s.to_string()
}

/// Set of normalized word tokens, each stripped of surrounding punctuation.
pub fn token_set(text: &str) -> BTreeSet<String> {
    normalize(text)
        .split(' ')
        .map(|t| t.trim_matches(is_punct))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Jaccard similarity of two token sets; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
