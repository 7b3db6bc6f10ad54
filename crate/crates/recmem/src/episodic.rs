//! Episodic memory: temporally anchored narratives with provenance.
//!
//! Two mutation paths, orchestrated by the engine: merge-first folds an
//! on-topic turn into its nearest existing episode in place, and
//! recurrence-triggered consolidation turns a cluster of raw turns into
//! one or more new episodes. This module owns the store and the parsing
//! of the structured LLM outputs; prompt construction and LLM calls live
//! with the engine.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::index::VectorIndex;
use crate::turn::{InteractionUnit, Timestamp};

/// Fixed template rendering one interaction unit for LLM prompts.
pub fn fmt_unit(unit: &InteractionUnit) -> String {
    format!(
        "[{}] USER: {}\nASSISTANT: {}",
        unit.timestamp, unit.user_message, unit.assistant_message
    )
}

/// Earliest and latest source-turn timestamps of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub earliest: Timestamp,
    pub latest: Timestamp,
}

impl TimeSpan {
    pub fn point(ts: Timestamp) -> Self {
        TimeSpan {
            earliest: ts,
            latest: ts,
        }
    }

    pub fn extend(&mut self, ts: Timestamp) {
        if ts < self.earliest {
            self.earliest = ts;
        }
        if ts > self.latest {
            self.latest = ts;
        }
    }
}

/// A temporally anchored narrative covering one evolving topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub title: String,
    pub narrative: String,
    pub vector: Embedding,
    /// Turns this episode was built from, in assignment order.
    pub source_turn_ids: Vec<String>,
    pub time_span: TimeSpan,
    /// 1 at creation, +1 per merge.
    pub revision: u32,
    pub created_at: Timestamp,
}

impl Episode {
    /// The text whose encoding is the episode's stored vector. Recomputed
    /// after every merge so retrieval tracks current content.
    pub fn embedding_text(title: &str, narrative: &str) -> String {
        format!("{title}\n{narrative}")
    }
}

/// One episode as declared by the consolidation LLM output.
#[derive(Debug, Clone, Deserialize)]
pub struct EpisodeDraft {
    pub title: String,
    pub narrative: String,
    #[serde(default)]
    pub source_turn_ids: Vec<String>,
}

/// Parse the merge output contract `{"narrative": string}`.
pub fn parse_merge_output(text: &str) -> Result<String> {
    #[derive(Deserialize)]
    struct MergeOut {
        narrative: String,
    }
    let out: MergeOut = serde_json::from_str(strip_fences(text))
        .map_err(|e| Error::MalformedLlmOutput(format!("merge output: {e}")))?;
    let narrative = out.narrative.trim().to_string();
    if narrative.is_empty() {
        return Err(Error::MalformedLlmOutput(
            "merge output narrative is empty".into(),
        ));
    }
    Ok(narrative)
}

/// Parse the consolidation output contract: a JSON array of episode
/// objects, at least one, each with a non-empty narrative.
pub fn parse_consolidation_output(text: &str) -> Result<Vec<EpisodeDraft>> {
    let drafts: Vec<EpisodeDraft> = serde_json::from_str(strip_fences(text))
        .map_err(|e| Error::MalformedLlmOutput(format!("consolidation output: {e}")))?;
    if drafts.is_empty() {
        return Err(Error::MalformedLlmOutput(
            "consolidation output declared no episodes".into(),
        ));
    }
    for d in &drafts {
        if d.narrative.trim().is_empty() {
            return Err(Error::MalformedLlmOutput(
                "consolidation output has an empty narrative".into(),
            ));
        }
    }
    Ok(drafts)
}

/// Remote models sometimes wrap JSON in markdown fences; tolerate that.
pub(crate) fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    let t = t.strip_suffix("```").unwrap_or(t);
    t.trim()
}

/// The episodic store: episodes plus their vector index.
#[derive(Debug, Default)]
pub struct EpisodicStore {
    index: VectorIndex,
    episodes: HashMap<String, Episode>,
    next_id: u64,
}

impl EpisodicStore {
    pub fn new() -> Self {
        EpisodicStore::default()
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, episode_id: &str) -> Option<&Episode> {
        self.episodes.get(episode_id)
    }

    /// The single nearest episode to a vector, with its cosine score.
    pub fn nearest(&self, query: &Embedding) -> Option<(&Episode, f32)> {
        let hit = self.index.top_k(query, 1).into_iter().next()?;
        Some((&self.episodes[&hit.id], hit.score))
    }

    pub fn top_k(&self, query: &Embedding, k: usize) -> Vec<(f32, &Episode)> {
        self.index
            .top_k(query, k)
            .into_iter()
            .map(|hit| (hit.score, &self.episodes[&hit.id]))
            .collect()
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("epi-{:06}", self.next_id)
    }

    /// Insert a newly consolidated episode; ids are sequential so runs are
    /// reproducible.
    pub fn insert_new(
        &mut self,
        title: String,
        narrative: String,
        vector: Embedding,
        source_turn_ids: Vec<String>,
        time_span: TimeSpan,
        created_at: Timestamp,
    ) -> Result<String> {
        debug_assert!(!narrative.trim().is_empty());
        let episode_id = self.fresh_id();
        self.index.insert(episode_id.clone(), vector.clone())?;
        self.episodes.insert(
            episode_id.clone(),
            Episode {
                episode_id: episode_id.clone(),
                title,
                narrative,
                vector,
                source_turn_ids,
                time_span,
                revision: 1,
                created_at,
            },
        );
        Ok(episode_id)
    }

    /// Apply a successful merge: replace the narrative, swap in the
    /// re-encoded vector, absorb the turn into provenance and time span,
    /// bump the revision.
    pub fn apply_merge(
        &mut self,
        episode_id: &str,
        new_narrative: String,
        new_vector: Embedding,
        unit: &InteractionUnit,
    ) -> Result<()> {
        let episode = self
            .episodes
            .get_mut(episode_id)
            .ok_or_else(|| Error::UnknownId(episode_id.to_string()))?;
        episode.narrative = new_narrative;
        episode.time_span.extend(unit.timestamp);
        if !episode.source_turn_ids.iter().any(|t| t == &unit.turn_id) {
            episode.source_turn_ids.push(unit.turn_id.clone());
        }
        episode.revision += 1;
        episode.vector = new_vector.clone();
        self.index.remove(episode_id)?;
        self.index.insert(episode_id.to_string(), new_vector)?;
        Ok(())
    }

    /// Re-insert an episode from a snapshot.
    pub(crate) fn restore(&mut self, episode: Episode) -> Result<()> {
        if let Some(n) = episode
            .episode_id
            .strip_prefix("epi-")
            .and_then(|s| s.parse::<u64>().ok())
        {
            self.next_id = self.next_id.max(n);
        }
        self.index
            .insert(episode.episode_id.clone(), episode.vector.clone())?;
        self.episodes.insert(episode.episode_id.clone(), episode);
        Ok(())
    }

    /// Episodes in creation (id) order.
    pub fn episodes_in_order(&self) -> Vec<&Episode> {
        let mut all: Vec<&Episode> = self.episodes.values().collect();
        all.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        all
    }
}
