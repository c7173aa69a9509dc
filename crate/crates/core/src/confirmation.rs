//! Knowledge confirmation.
//!
//! The generator is shown the retrieved facts and the question and asked to
//! echo the single fact that answers it, or to say "no relevant fact." The
//! free-text verdict is mapped back onto the candidate set by
//! [`parse_confirmation`], which is total: every output yields a result and a
//! confirmed id is always one of the candidates.

use serde::{Deserialize, Serialize};

use crate::backends::{GenerationRequest, Generator, CONFIRM_MAX_NEW_TOKENS};
use crate::error::{Error, Result};
use crate::retrieval::CandidateSet;
use crate::text;

pub const NO_RELEVANT_FACT: &str = "no relevant fact";

const PROMPT_HEAD: &str = "Given a set of facts and a question, return the fact that best matches the core knowledge asked in the question. If the question cannot be answered with the facts, return \"no relevant fact.\"";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Decision {
    Confirmed { entry_id: usize },
    NoRelevantFact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMethod {
    Exact,
    NormalizedSubstring,
    TokenOverlap,
    DeclaredNone,
    EmptyCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationResult {
    pub decision: Decision,
    pub raw_output: String,
    pub match_method: MatchMethod,
    pub overlap_score: f64,
}

impl ConfirmationResult {
    fn none(raw: &str, method: MatchMethod, overlap: f64) -> Self {
        Self {
            decision: Decision::NoRelevantFact,
            raw_output: raw.to_string(),
            match_method: method,
            overlap_score: overlap,
        }
    }

    fn confirmed(raw: &str, entry_id: usize, method: MatchMethod, overlap: f64) -> Self {
        Self {
            decision: Decision::Confirmed { entry_id },
            raw_output: raw.to_string(),
            match_method: method,
            overlap_score: overlap,
        }
    }

    pub fn confirmed_id(&self) -> Option<usize> {
        match self.decision {
            Decision::Confirmed { entry_id } => Some(entry_id),
            Decision::NoRelevantFact => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfirmConfig {
    /// Minimum token Jaccard overlap for a fuzzy match.
    pub overlap_threshold: f64,
    pub max_new_tokens: usize,
}

impl Default for ConfirmConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.5,
            max_new_tokens: CONFIRM_MAX_NEW_TOKENS,
        }
    }
}

pub fn build_confirmation_prompt(question: &str, candidates: &CandidateSet) -> String {
    let facts = candidates
        .candidates
        .iter()
        .map(|c| format!("- {}", c.statement))
        .collect::<Vec<_>>()
        .join("\n");
    format!("{PROMPT_HEAD}\n\nFacts: {facts}\nQuestion: {question}\n\nOutput:")
}

pub fn parse_confirmation(raw_output: &str, candidates: &CandidateSet) -> ConfirmationResult {
    parse_confirmation_with(
        raw_output,
        candidates,
        ConfirmConfig::default().overlap_threshold,
    )
}

pub fn parse_confirmation_with(
    raw_output: &str,
    candidates: &CandidateSet,
    overlap_threshold: f64,
) -> ConfirmationResult {
    let out = text::normalize(raw_output);
    if out.contains(NO_RELEVANT_FACT) {
        return ConfirmationResult::none(raw_output, MatchMethod::DeclaredNone, 0.0);
    }
    if candidates.is_empty() {
        return ConfirmationResult::none(raw_output, MatchMethod::EmptyCandidates, 0.0);
    }
    let normalized: Vec<String> = candidates
        .candidates
        .iter()
        .map(|c| text::normalize(&c.statement))
        .collect();

    let trimmed = raw_output.trim();
    if let Some(i) = candidates
        .candidates
        .iter()
        .position(|c| c.statement.trim() == trimmed)
    {
        return ConfirmationResult::confirmed(
            raw_output,
            candidates.candidates[i].entry_id,
            MatchMethod::Exact,
            0.0,
        );
    }

    if !out.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in normalized.iter().enumerate() {
            let len = if !s.is_empty() && out.contains(s.as_str()) {
                s.len()
            } else if s.contains(out.as_str()) {
                out.len()
            } else {
                continue;
            };
            if best.is_none_or(|(_, l)| len > l) {
                best = Some((i, len));
            }
        }
        if let Some((i, _)) = best {
            return ConfirmationResult::confirmed(
                raw_output,
                candidates.candidates[i].entry_id,
                MatchMethod::NormalizedSubstring,
                0.0,
            );
        }
    }

    let out_tokens = text::token_set(raw_output);
    let mut best = (0usize, 0.0f64);
    for (i, c) in candidates.candidates.iter().enumerate() {
        let j = text::jaccard(&out_tokens, &text::token_set(&c.statement));
        if j > best.1 {
            best = (i, j);
        }
    }
    if best.1 >= overlap_threshold && best.1 > 0.0 {
        ConfirmationResult::confirmed(
            raw_output,
            candidates.candidates[best.0].entry_id,
            MatchMethod::TokenOverlap,
            best.1,
        )
    } else {
        ConfirmationResult::none(raw_output, MatchMethod::TokenOverlap, best.1)
    }
}

/// Asks `gen` to pick the relevant candidate. Empty candidate sets are
/// answered locally without a backend call.
pub fn confirm<G: Generator + ?Sized>(
    question: &str,
    candidates: &CandidateSet,
    gen: &G,
    cfg: &ConfirmConfig,
) -> Result<ConfirmationResult> {
    if candidates.is_empty() {
        return Ok(ConfirmationResult::none(
            "",
            MatchMethod::EmptyCandidates,
            0.0,
        ));
    }
    let prompt = build_confirmation_prompt(question, candidates);
    let raw = gen
        .generate(&GenerationRequest::greedy(prompt, cfg.max_new_tokens))
        .map_err(Error::Confirmation)?;
    Ok(parse_confirmation_with(
        &raw,
        candidates,
        cfg.overlap_threshold,
    ))
}
