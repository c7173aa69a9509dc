//! Semantic filtering: exact top-k search over a knowledge store.
//!
//! Embeddings are normalized on the way in, so the dot product used here is
//! the cosine similarity. Ranking is by score, then by higher round, then by
//! higher id, which makes results deterministic and prefers recent facts when
//! two statements embed identically.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{KnowledgeEntry, KnowledgeStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub entry_id: usize,
    pub round: u64,
    pub statement: String,
    pub score: f64,
}

/// Ordered top-k result for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query_text: String,
    pub k_requested: usize,
    pub candidates: Vec<ScoredCandidate>,
}

impl CandidateSet {
    pub fn empty(query_text: impl Into<String>, k_requested: usize) -> Self {
        Self {
            query_text: query_text.into(),
            k_requested,
            candidates: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.entry_id).collect()
    }

    pub fn contains(&self, entry_id: usize) -> bool {
        self.candidates.iter().any(|c| c.entry_id == entry_id)
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize vector with norm {norm}"
        )));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Ranking order: higher score first, then higher round, then higher id.
pub fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.round.cmp(&a.round))
        .then(b.entry_id.cmp(&a.entry_id))
}

fn score(entry: &KnowledgeEntry, query: &[f64]) -> ScoredCandidate {
    ScoredCandidate {
        entry_id: entry.id,
        round: entry.round,
        statement: entry.statement.clone(),
        // dimensions are checked by the caller
        score: similarity(query, &entry.embedding).unwrap_or(f64::NAN),
    }
}

/// Returns the `min(k, store.len())` best entries for `query_embedding`.
pub fn top_k(
    store: &KnowledgeStore,
    query_text: &str,
    query_embedding: &[f64],
    k: usize,
) -> Result<CandidateSet> {
    if k < 1 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if query_embedding.len() != store.dim() {
        return Err(Error::Dimension {
            expected: store.dim(),
            actual: query_embedding.len(),
        });
    }
    let mut scored: Vec<ScoredCandidate> = store
        .entries()
        .iter()
        .map(|e| score(e, query_embedding))
        .collect();
    let take = k.min(scored.len());
    if take < scored.len() {
        scored.select_nth_unstable_by(take - 1, rank_order);
        scored.truncate(take);
    }
    scored.sort_unstable_by(rank_order);
    Ok(CandidateSet {
        query_text: query_text.to_string(),
        k_requested: k,
        candidates: scored,
    })
}
