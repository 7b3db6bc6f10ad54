//! Incremental exact nearest-neighbor index over unit-norm embeddings.
//!
//! Exact search rather than ANN: the corpora here are desk-scale and the
//! golden tests need deterministic rankings. Ties in score break by
//! insertion order (smaller `seq` first). The reader/writer contract is
//! enforced by the borrow checker: queries take `&self`, mutations
//! `&mut self`, so shared readers never observe a partial insert.

use std::collections::HashMap;

use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// One stored vector.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub id: String,
    pub vector: Embedding,
    /// Monotonically increasing insertion counter, used for tie-breaks.
    pub seq: u64,
}

/// One retrieval hit: cosine similarity of the query to a stored vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHit {
    pub id: String,
    pub score: f32,
}

/// Exact cosine top-k index.
#[derive(Debug, Default)]
pub struct VectorIndex {
    dim: Option<usize>,
    entries: Vec<IndexEntry>,
    by_id: HashMap<String, usize>,
    next_seq: u64,
}

impl VectorIndex {
    pub fn new() -> Self {
        VectorIndex::default()
    }

    /// Pin the dimension up front; otherwise it is fixed by the first insert.
    pub fn with_dim(dim: usize) -> Self {
        VectorIndex {
            dim: Some(dim),
            ..VectorIndex::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.by_id.get(id).map(|i| &self.entries[*i])
    }

    /// Insert a vector under a fresh id. Visible to queries immediately.
    pub fn insert(&mut self, id: impl Into<String>, vector: Embedding) -> Result<()> {
        let id = id.into();
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        match self.dim {
            Some(dim) if dim != vector.dim() => {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: vector.dim(),
                });
            }
            None => self.dim = Some(vector.dim()),
            _ => {}
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.by_id.insert(id.clone(), self.entries.len());
        self.entries.push(IndexEntry { id, vector, seq });
        Ok(())
    }

    /// Remove an entry; it is no longer retrievable afterwards.
    pub fn remove(&mut self, id: &str) -> Result<()> {
        let slot = self
            .by_id
            .remove(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))?;
        self.entries.swap_remove(slot);
        if slot < self.entries.len() {
            let moved = self.entries[slot].id.clone();
            self.by_id.insert(moved, slot);
        }
        Ok(())
    }

    /// Exact top-k by cosine similarity, score descending, ties broken by
    /// smaller seq. An empty index yields an empty list.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Vec<ScoredHit> {
        if k == 0 || self.entries.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(f32, u64, &IndexEntry)> = self
            .entries
            .iter()
            .map(|e| (query.cosine(&e.vector), e.seq, e))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(k)
            .map(|(score, _, e)| ScoredHit {
                id: e.id.clone(),
                score,
            })
            .collect()
    }

    /// Entries in insertion (seq) order, e.g. for snapshots.
    pub fn entries_in_order(&self) -> Vec<&IndexEntry> {
        let mut refs: Vec<&IndexEntry> = self.entries.iter().collect();
        refs.sort_by_key(|e| e.seq);
        refs
    }
}
