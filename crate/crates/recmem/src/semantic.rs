//! Semantic memory: atomic facts recovered after each consolidation.
//!
//! Refinement runs exactly once per episode created by consolidation
//! (never for merges). It recovers details the episodic abstraction
//! dropped and supersedes stale facts. Supersession is a soft delete: the
//! record stays for audit, but it leaves the vector index and is never
//! retrieved again.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::episodic::strip_fences;
use crate::error::{Error, Result};
use crate::index::VectorIndex;
use crate::turn::Timestamp;

/// One atomic fact with provenance and an optional supersession link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticFact {
    pub fact_id: String,
    /// A single self-contained statement; never contains a newline.
    pub text: String,
    pub vector: Embedding,
    pub source_episode_id: String,
    pub source_turn_ids: Vec<String>,
    pub created_at: Timestamp,
    /// Set when a later fact replaced this one; such facts are excluded
    /// from retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<String>,
}

impl SemanticFact {
    pub fn is_live(&self) -> bool {
        self.superseded_by.is_none()
    }
}

/// One fact as declared by the refinement LLM output.
#[derive(Debug, Clone, Deserialize)]
pub struct FactDraft {
    pub text: String,
    #[serde(default)]
    pub source_turn_ids: Vec<String>,
}

/// Parsed refinement output: new facts plus supersession directives.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RefinementDraft {
    #[serde(default)]
    pub facts: Vec<FactDraft>,
    #[serde(default)]
    pub supersedes: Vec<String>,
}

/// Parse the refinement output contract
/// `{"facts": [{"text", "source_turn_ids"}], "supersedes": [fact_id]}`.
pub fn parse_refinement_output(text: &str) -> Result<RefinementDraft> {
    serde_json::from_str(strip_fences(text))
        .map_err(|e| Error::MalformedLlmOutput(format!("refinement output: {e}")))
}

/// The semantic store. Only live facts are indexed.
#[derive(Debug, Default)]
pub struct SemanticStore {
    index: VectorIndex,
    facts: HashMap<String, SemanticFact>,
    live_texts: HashSet<String>,
    next_id: u64,
}

impl SemanticStore {
    pub fn new() -> Self {
        SemanticStore::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn live_len(&self) -> usize {
        self.live_texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn get(&self, fact_id: &str) -> Option<&SemanticFact> {
        self.facts.get(fact_id)
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("fact-{:06}", self.next_id)
    }

    /// Insert a new fact unless a live fact with byte-identical text
    /// already exists (returns `None` in that case). The text must be a
    /// sanitized single line.
    pub fn insert_fact(
        &mut self,
        text: String,
        vector: Embedding,
        source_episode_id: String,
        source_turn_ids: Vec<String>,
        created_at: Timestamp,
    ) -> Result<Option<String>> {
        debug_assert!(!text.contains('\n') && !text.trim().is_empty());
        if self.live_texts.contains(&text) {
            return Ok(None);
        }
        let fact_id = self.fresh_id();
        self.index.insert(fact_id.clone(), vector.clone())?;
        self.live_texts.insert(text.clone());
        self.facts.insert(
            fact_id.clone(),
            SemanticFact {
                fact_id: fact_id.clone(),
                text,
                vector,
                source_episode_id,
                source_turn_ids,
                created_at,
                superseded_by: None,
            },
        );
        Ok(Some(fact_id))
    }

    /// Mark `old_id` as superseded by `new_id`. Returns false (and applies
    /// nothing) when `old_id` does not exist, is already superseded, or
    /// equals `new_id`; the caller logs and moves on.
    pub fn supersede(&mut self, old_id: &str, new_id: &str) -> bool {
        if old_id == new_id || !self.facts.contains_key(new_id) {
            return false;
        }
        let Some(old) = self.facts.get_mut(old_id) else {
            return false;
        };
        if old.superseded_by.is_some() {
            return false;
        }
        old.superseded_by = Some(new_id.to_string());
        self.live_texts.remove(&old.text);
        self.index.remove(old_id).expect("live fact is indexed");
        true
    }

    /// Top-k live facts by cosine; superseded facts never appear.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Vec<(f32, &SemanticFact)> {
        self.index
            .top_k(query, k)
            .into_iter()
            .map(|hit| (hit.score, &self.facts[&hit.id]))
            .collect()
    }

    /// Re-insert a fact from a snapshot.
    pub(crate) fn restore(&mut self, fact: SemanticFact) -> Result<()> {
        if let Some(n) = fact
            .fact_id
            .strip_prefix("fact-")
            .and_then(|s| s.parse::<u64>().ok())
        {
            self.next_id = self.next_id.max(n);
        }
        if fact.is_live() {
            self.index.insert(fact.fact_id.clone(), fact.vector.clone())?;
            self.live_texts.insert(fact.text.clone());
        }
        self.facts.insert(fact.fact_id.clone(), fact);
        Ok(())
    }

    /// All facts (live and superseded) in creation order.
    pub fn facts_in_order(&self) -> Vec<&SemanticFact> {
        let mut all: Vec<&SemanticFact> = self.facts.values().collect();
        all.sort_by(|a, b| a.fact_id.cmp(&b.fact_id));
        all
    }
}

/// Collapse whitespace and newlines so the stored fact is one line.
pub fn sanitize_fact_text(raw: &str) -> Option<String> {
    let joined = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined.is_empty() {
        None
    } else {
        Some(joined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Encoder, HashedEncoder};

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    fn insert(store: &mut SemanticStore, enc: &HashedEncoder, text: &str) -> Option<String> {
        let v = enc.encode(text).unwrap();
        store
            .insert_fact(
                text.to_string(),
                v,
                "epi-000001".into(),
                vec!["t1".into()],
                ts("2023-05-01T10:00:00Z"),
            )
            .unwrap()
    }

    #[test]
    fn empty_store_retrieves_nothing() {
        let store = SemanticStore::new();
        let enc = HashedEncoder::new(64);
        assert!(store.top_k(&enc.encode("anything").unwrap(), 5).is_empty());
    }

    #[test]
    fn k_larger_than_store_returns_everything_ranked() {
        let enc = HashedEncoder::new(256);
        let mut store = SemanticStore::new();
        insert(&mut store, &enc, "Mia is allergic to peanuts").unwrap();
        insert(&mut store, &enc, "the user lives in Lisbon").unwrap();
        let q = enc.encode("what is Mia allergic to").unwrap();
        let hits = store.top_k(&q, 50);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].1.text, "Mia is allergic to peanuts");
        assert!(hits[0].0 >= hits[1].0);
    }

    #[test]
    fn verbatim_duplicates_are_dropped() {
        let enc = HashedEncoder::new(64);
        let mut store = SemanticStore::new();
        assert!(insert(&mut store, &enc, "water is wet").is_some());
        assert!(insert(&mut store, &enc, "water is wet").is_none());
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn supersession_soft_deletes_and_hides_from_retrieval() {
        let enc = HashedEncoder::new(64);
        let mut store = SemanticStore::new();
        let old = insert(&mut store, &enc, "the user lives in Lisbon").unwrap();
        let new = insert(&mut store, &enc, "the user lives in Porto now").unwrap();
        assert!(store.supersede(&old, &new));

        let q = enc.encode("where does the user live").unwrap();
        let hits = store.top_k(&q, 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].1.fact_id, new);
        // Record kept for audit, with the link set.
        let old_fact = store.get(&old).unwrap();
        assert_eq!(old_fact.superseded_by.as_deref(), Some(new.as_str()));
        // Its text may be re-asserted later without tripping the
        // duplicate guard.
        assert!(insert(&mut store, &enc, "the user lives in Lisbon").is_some());
    }

    #[test]
    fn supersession_guards() {
        let enc = HashedEncoder::new(64);
        let mut store = SemanticStore::new();
        let a = insert(&mut store, &enc, "fact a").unwrap();
        let b = insert(&mut store, &enc, "fact b").unwrap();
        assert!(!store.supersede("fact-999999", &b), "unknown old id");
        assert!(!store.supersede(&a, "fact-999999"), "unknown new id");
        assert!(!store.supersede(&a, &a), "self link");
        assert!(store.supersede(&a, &b));
        assert!(!store.supersede(&a, &b), "already superseded");
    }

    #[test]
    fn supersession_links_never_cycle() {
        let enc = HashedEncoder::new(64);
        let mut store = SemanticStore::new();
        let a = insert(&mut store, &enc, "state one").unwrap();
        let b = insert(&mut store, &enc, "state two").unwrap();
        let c = insert(&mut store, &enc, "state three").unwrap();
        assert!(store.supersede(&a, &b));
        assert!(store.supersede(&b, &c));
        // Walk the chain; it must terminate.
        let mut seen = std::collections::HashSet::new();
        let mut cur = a.clone();
        while let Some(next) = store.get(&cur).and_then(|f| f.superseded_by.clone()) {
            assert!(seen.insert(cur.clone()), "cycle through {cur}");
            cur = next;
        }
        assert_eq!(cur, c);
    }

    #[test]
    fn refinement_output_parses() {
        let draft = parse_refinement_output(
            r#"{"facts":[{"text":"x","source_turn_ids":["t1"]}],"supersedes":["fact-000001"]}"#,
        )
        .unwrap();
        assert_eq!(draft.facts.len(), 1);
        assert_eq!(draft.supersedes, vec!["fact-000001"]);
        // Both keys optional.
        let empty = parse_refinement_output("{}").unwrap();
        assert!(empty.facts.is_empty() && empty.supersedes.is_empty());
        assert!(parse_refinement_output("nope").is_err());
    }

    #[test]
    fn fact_text_sanitizer() {
        assert_eq!(
            sanitize_fact_text("  two\nlines\t here "),
            Some("two lines here".to_string())
        );
        assert_eq!(sanitize_fact_text("  \n \t"), None);
    }
}
