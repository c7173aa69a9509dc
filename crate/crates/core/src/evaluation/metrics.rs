use crate::text;

/// Relaxed exact match: the normalized target occurs anywhere in the
/// normalized generation. Generations are already length-capped by the
/// backend, so no truncation happens here.
pub fn relaxed_em(target: &str, generated: &str) -> bool {
    let t = text::normalize(target);
    if t.is_empty() {
        // punctuation-only target: fall back to plain case-folded containment
        let raw = target.trim().to_lowercase();
        return !raw.is_empty() && generated.to_lowercase().contains(&raw);
    }
    text::normalize(generated).contains(&t)
}

/// Best-effort answer span of a free-running generation: its first non-empty
/// line, without an "Answer:" prefix.
pub fn extract_answer(generated: &str) -> String {
    let line = generated
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let norm = text::normalize(line);
    match norm.strip_prefix("answer:") {
        Some(rest) => text::normalize(rest),
        None => norm,
    }
}

/// Locality under the behavioral reading: the post-update answer reproduces
/// the pre-update one, either verbatim after normalization or by containing
/// its extracted answer span.
pub fn behavioral_match(pre_edit: &str, post_edit: &str) -> bool {
    if text::normalize(pre_edit) == text::normalize(post_edit) {
        return true;
    }
    let span = extract_answer(pre_edit);
    !span.is_empty() && relaxed_em(&span, post_edit)
}
