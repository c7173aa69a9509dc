use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{
    BackendError, BackendFingerprint, Embedder, EmbeddingRequest, GenerationRequest, Generator,
};
use crate::text;

const MOCK_ENDPOINT: &str = "mock";

/// Generation mock driven by a lookup table.
///
/// Resolution order: exact prompt match, then the first substring rule whose
/// needle occurs in the prompt, then the default response.
#[derive(Debug)]
pub struct ScriptedGenerator {
    name: String,
    exact: HashMap<String, String>,
    rules: Vec<(String, String)>,
    default: String,
    fail_first: usize,
    calls: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new(name: impl Into<String>, default: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            exact: HashMap::new(),
            rules: Vec::new(),
            default: default.into(),
            fail_first: 0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_exact(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.insert_exact(prompt, response);
        self
    }

    pub fn with_rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.push_rule(needle, response);
        self
    }

    /// The first `n` calls fail with a transient error.
    pub fn fail_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    pub fn insert_exact(&mut self, prompt: impl Into<String>, response: impl Into<String>) {
        self.exact.insert(prompt.into(), response.into());
    }

    pub fn push_rule(&mut self, needle: impl Into<String>, response: impl Into<String>) {
        self.rules.push((needle.into(), response.into()));
    }

    /// Number of `generate` calls so far, failed ones included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn respond(&self, prompt: &str) -> &str {
        if let Some(hit) = self.exact.get(prompt) {
            return hit;
        }
        self.rules
            .iter()
            .find(|(needle, _)| prompt.contains(needle.as_str()))
            .map(|(_, resp)| resp.as_str())
            .unwrap_or(&self.default)
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        req.check(MOCK_ENDPOINT)?;
        if n < self.fail_first {
            return Err(BackendError::transient(
                MOCK_ENDPOINT,
                format!("scripted failure {} of {}", n + 1, self.fail_first),
            ));
        }
        Ok(self.respond(&req.prompt).to_string())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint {
            name: self.name.clone(),
            dim: 0,
            endpoint: MOCK_ENDPOINT.into(),
        }
    }
}

/// Function words carry no topical signal and would otherwise dominate short
/// templated statements.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "has",
    "have", "in", "is", "it", "its", "of", "on", "or", "that", "the", "to", "was", "were", "what",
    "which", "who", "whose", "with",
];

/// Feature-hashing embedder.
///
/// Function words are dropped (unless nothing else is left), then word
/// unigrams and half-weight padded character trigrams are hashed into `dim`
/// signed buckets with hash-derived weights and the result is normalized. Retrieval quality on short
/// templated facts needs a few hundred dimensions.
///
/// Texts registered with [`HashEmbedder::with_vector`] return their assigned
/// vector instead, so tests can pin retrieval geometry exactly.
#[derive(Debug)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    fixed: HashMap<String, Vec<f64>>,
    calls: AtomicUsize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self::with_seed(dim, 0)
    }

    pub fn with_seed(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            seed,
            fixed: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Oracle mode: `text` embeds to exactly `vector`.
    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        assert_eq!(vector.len(), self.dim, "fixed vector has wrong dimension");
        self.fixed.insert(text.into(), vector);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn add_feature(&self, out: &mut [f64], feature: &str, scale: f64) {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(feature.as_bytes());
        let digest = hasher.finalize();
        let word = |i: usize| u64::from_le_bytes(digest[i..i + 8].try_into().unwrap());
        let bucket = (word(0) % self.dim as u64) as usize;
        let sign = if word(8) & 1 == 0 { 1.0 } else { -1.0 };
        let weight = 0.5 + (word(16) >> 11) as f64 / (1u64 << 53) as f64;
        out[bucket] += sign * weight * scale;
    }

    fn hash_text(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let all: Vec<String> = text::normalize(text)
            .split(' ')
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
            .filter(|w| !w.is_empty())
            .collect();
        let content: Vec<String> = all
            .iter()
            .filter(|w| !STOPWORDS.contains(&w.as_str()))
            .cloned()
            .collect();
        let words = if content.is_empty() { all } else { content };
        for w in &words {
            self.add_feature(&mut out, &format!("w:{w}"), 1.0);
            let padded: Vec<char> = format!("#{w}#").chars().collect();
            for tri in padded.windows(3) {
                let tri: String = tri.iter().collect();
                self.add_feature(&mut out, &format!("c:{tri}"), 0.5);
            }
        }
        if out.iter().all(|x| *x == 0.0) {
            self.add_feature(&mut out, &format!("raw:{text}"), 1.0);
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.iter().map(|x| x / norm).collect()
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f64>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if req.text.is_empty() {
            return Err(BackendError::invalid(MOCK_ENDPOINT, "empty text"));
        }
        if let Some(v) = self.fixed.get(&req.text) {
            return Ok(v.clone());
        }
        Ok(self.hash_text(&req.text))
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint {
            name: format!("hash-ngram-seed{}", self.seed),
            dim: self.dim,
            endpoint: MOCK_ENDPOINT.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn gen(g: &ScriptedGenerator, prompt: &str) -> String {
        g.generate(&GenerationRequest::greedy(prompt, 30)).unwrap()
    }

    fn emb(e: &HashEmbedder, text: &str) -> Vec<f64> {
        e.embed(&EmbeddingRequest::new(text)).unwrap()
    }

    #[test]
    fn scripted_lookup_and_default() {
        let g = ScriptedGenerator::new("g", "default answer")
            .with_exact("P1", "Syria")
            .with_rule("needle", "ruled");
        assert_eq!(gen(&g, "P1"), "Syria");
        assert_eq!(gen(&g, "a needle here"), "ruled");
        assert_eq!(gen(&g, "unknown"), "default answer");
        assert_eq!(g.calls(), 3);
    }

    #[test]
    fn exact_beats_rules_and_first_rule_wins() {
        let g = ScriptedGenerator::new("g", "d")
            .with_exact("needle", "exact")
            .with_rule("need", "first")
            .with_rule("needle", "second");
        assert_eq!(gen(&g, "needle"), "exact");
        assert_eq!(gen(&g, "needle!"), "first");
    }

    #[test]
    fn hash_embedding_is_deterministic_and_shaped() {
        let e = HashEmbedder::new(16);
        assert_eq!(emb(&e, "abc"), emb(&e, "abc"));
        assert_eq!(emb(&e, "abc").len(), 16);
        assert_eq!(emb(&e, "some longer sentence here").len(), 16);
        let norm: f64 = emb(&e, "abc").iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hash_embedding_has_no_collisions_on_word_corpus() {
        let e = HashEmbedder::new(16);
        assert_ne!(emb(&e, "abc"), emb(&e, "abd"));
        let letters: Vec<char> = ('a'..='z').collect();
        let words: Vec<String> = (0..1000)
            .map(|i| {
                let (a, b, c) = (i / 676, (i / 26) % 26, i % 26);
                [letters[a], letters[b], letters[c]].iter().collect()
            })
            .collect();
        let mut seen = HashSet::new();
        for w in &words {
            let key: Vec<u64> = emb(&e, w).iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision on {w}");
        }
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        let e = HashEmbedder::new(8);
        let v = emb(&e, "?!");
        assert!(v.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn fixed_vectors_override_hashing() {
        let e = HashEmbedder::new(2).with_vector("x", vec![0.0, 1.0]);
        assert_eq!(emb(&e, "x"), vec![0.0, 1.0]);
        assert!(e.embed(&EmbeddingRequest::new("")).is_err());
    }
}
