//! Contextual reasoning and the end-to-end answer pipeline.

use serde::{Deserialize, Serialize};

use crate::backends::{
    Embedder, EmbeddingRequest, GenerationRequest, Generator, ANSWER_MAX_NEW_TOKENS,
};
use crate::confirmation::{self, ConfirmConfig, ConfirmationResult};
use crate::error::{Error, Result, Stage};
use crate::memory::KnowledgeStore;
use crate::retrieval::{self, CandidateSet};

const INSTRUCTION: &str = "Answer the question based on the Updated Fact provided, without any explanation. At times, you need to think about the relationship between problems and facts before reasoning based on the information to answer.";

/// Final prompt for the answer call. Without a confirmed fact the question is
/// sent bare.
pub fn build_reasoning_prompt(question: &str, fact: Option<&str>) -> String {
    match fact {
        Some(fact) => {
            format!("{INSTRUCTION}\n\nUpdated Fact: {fact}\nQuestion: {question}\nAnswer:")
        }
        None => question.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnswerConfig {
    pub k: usize,
    pub max_new_tokens: usize,
    pub confirm: ConfirmConfig,
}

impl Default for AnswerConfig {
    fn default() -> Self {
        Self {
            k: 1,
            max_new_tokens: ANSWER_MAX_NEW_TOKENS,
            confirm: ConfirmConfig::default(),
        }
    }
}

impl AnswerConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Parameter("k must be >= 1".into()));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::Parameter("max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything that happened while answering one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub question: String,
    pub candidates: CandidateSet,
    pub confirmation: ConfirmationResult,
    pub final_prompt: String,
    pub answer_text: String,
    pub used_fact: Option<usize>,
    /// Generation calls made; embedding calls are not counted.
    pub backend_calls: usize,
}

/// Retrieve, confirm, then answer with at most one confirmed fact in context.
pub fn answer_query<G, E>(
    question: &str,
    store: &KnowledgeStore,
    gen: &G,
    emb: &E,
    cfg: &AnswerConfig,
) -> Result<AnswerTrace>
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    cfg.validate()?;

    let candidates = if store.is_empty() {
        CandidateSet::empty(question, cfg.k)
    } else {
        let raw = emb
            .embed(&EmbeddingRequest::new(question))
            .map_err(|e| Error::at_stage(Stage::Embed, e.into()))?;
        let query = retrieval::normalize(&raw).map_err(|e| Error::at_stage(Stage::Embed, e))?;
        retrieval::top_k(store, question, &query, cfg.k)
            .map_err(|e| Error::at_stage(Stage::Retrieve, e))?
    };

    let mut backend_calls = 0;
    if !candidates.is_empty() {
        backend_calls += 1;
    }
    let confirmation = confirmation::confirm(question, &candidates, gen, &cfg.confirm)
        .map_err(|e| Error::at_stage(Stage::Confirm, e))?;

    let used_fact = confirmation.confirmed_id();
    let fact = used_fact
        .and_then(|id| store.get(id))
        .map(|e| e.statement.as_str());
    let final_prompt = build_reasoning_prompt(question, fact);

    backend_calls += 1;
    let answer_text = gen
        .generate(&GenerationRequest::greedy(
            final_prompt.clone(),
            cfg.max_new_tokens,
        ))
        .map_err(|e| Error::at_stage(Stage::Answer, e.into()))?;

    Ok(AnswerTrace {
        question: question.to_string(),
        candidates,
        confirmation,
        final_prompt,
        answer_text,
        used_fact,
        backend_calls,
    })
}
