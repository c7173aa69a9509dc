//! Append-only textual knowledge store.
//!
//! The store is the only mutable state of knowledge updating: every update
//! round appends one declarative statement together with its unit-norm
//! embedding. Entries are never edited or removed, so contradicting facts
//! coexist and recency is resolved downstream (retrieval tie-break and the
//! confirmation step).
//!
//! On disk a store is newline-delimited JSON: a header object carrying `dim`
//! and `created_with`, followed by one entry object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of an embedding's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: usize,
    pub round: u64,
    pub statement: String,
    pub embedding: Vec<f64>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeStore {
    entries: Vec<KnowledgeEntry>,
    dim: usize,
    created_with: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    created_with: String,
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl KnowledgeStore {
    pub fn new(dim: usize, created_with: impl Into<String>) -> Self {
        Self {
            entries: Vec::new(),
            dim,
            created_with: created_with.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn created_with(&self) -> &str {
        &self.created_with
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&KnowledgeEntry> {
        self.entries.get(id)
    }

    /// Appends a statement and returns its id, which is the prior store size.
    ///
    /// The embedding must already be unit-norm (see
    /// [`retrieval::normalize`](crate::retrieval::normalize)) and rounds must
    /// be nondecreasing and start at 1.
    pub fn add_entry(
        &mut self,
        statement: impl Into<String>,
        embedding: Vec<f64>,
        round: u64,
        source: Option<String>,
    ) -> Result<usize> {
        if embedding.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: embedding.len(),
            });
        }
        let norm = l2_norm(&embedding);
        if !((1.0 - NORM_TOLERANCE)..=(1.0 + NORM_TOLERANCE)).contains(&norm) {
            return Err(Error::Normalization { norm });
        }
        if round < 1 {
            return Err(Error::Parameter("round must be >= 1".into()));
        }
        if let Some(last) = self.entries.last() {
            if round < last.round {
                return Err(Error::Parameter(format!(
                    "round {round} precedes last round {}",
                    last.round
                )));
            }
        }
        let id = self.entries.len();
        self.entries.push(KnowledgeEntry {
            id,
            round,
            statement: statement.into(),
            embedding,
            source,
        });
        Ok(id)
    }
}

pub fn save_store(store: &KnowledgeStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        dim: store.dim,
        created_with: store.created_with.clone(),
    };
    let mut write_line = |bytes: Vec<u8>| -> Result<()> {
        out.write_all(&bytes)
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write_line(serde_json::to_vec(&header)?)?;
    for entry in &store.entries {
        write_line(serde_json::to_vec(entry)?)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_store(path: impl AsRef<Path>) -> Result<KnowledgeStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: e.column(),
        message: e.to_string(),
    };
    let integrity = |line: usize, message: String| Error::Integrity {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut store: Option<KnowledgeStore> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(store) = store.as_mut() else {
            let header: Header = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e))?;
            store = Some(KnowledgeStore::new(header.dim, header.created_with));
            continue;
        };
        let entry: KnowledgeEntry =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e))?;
        let expected = store.entries.len();
        if entry.id != expected {
            let what = if entry.id < expected {
                "duplicate"
            } else {
                "non-dense"
            };
            return Err(integrity(
                lineno,
                format!("{what} id {} (expected {expected})", entry.id),
            ));
        }
        if entry.embedding.len() != store.dim {
            return Err(integrity(
                lineno,
                format!(
                    "embedding has {} components, store dim is {}",
                    entry.embedding.len(),
                    store.dim
                ),
            ));
        }
        let norm = l2_norm(&entry.embedding);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(integrity(lineno, format!("embedding norm {norm} is not 1")));
        }
        if entry.round < 1 {
            return Err(integrity(lineno, "round must be >= 1".into()));
        }
        if let Some(last) = store.entries.last() {
            if entry.round < last.round {
                return Err(integrity(
                    lineno,
                    format!("round {} decreases from {}", entry.round, last.round),
                ));
            }
        }
        store.entries.push(entry);
    }
    store.ok_or_else(|| integrity(1, "missing header".into()))
}

/// Loads a store and warns when it was built with a different embedding
/// backend than `expected_fingerprint`.
pub fn load_store_for(
    path: impl AsRef<Path>,
    expected_fingerprint: &str,
) -> Result<KnowledgeStore> {
    let store = load_store(path.as_ref())?;
    if store.created_with != expected_fingerprint {
        tracing::warn!(
            stored = %store.created_with,
            current = %expected_fingerprint,
            "store was built with a different embedding backend"
        );
    }
    Ok(store)
}
