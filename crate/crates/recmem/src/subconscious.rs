//! Subconscious memory: every raw turn, embedded and buffered forever.
//!
//! This is the always-on store that gates all LLM work. Units are indexed
//! immediately on arrival; the relevant set and recurrence trigger decide
//! when a cluster is worth consolidating. Consolidation never deletes:
//! promoted units stay retrievable verbatim, they are only excluded from
//! future relevant sets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::index::VectorIndex;
use crate::turn::InteractionUnit;

/// A stored turn with its embedding and consolidation bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubconsciousUnit {
    #[serde(flatten)]
    pub unit: InteractionUnit,
    pub vector: Embedding,
    /// True iff the unit has been folded into at least one episode.
    pub consolidated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub episode_refs: Vec<String>,
}

/// Thresholds governing the recurrence trigger.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConsolidationConfig {
    /// Minimum cosine similarity for a stored unit to count as relevant.
    pub theta_sim: f32,
    /// Relevant-set size at which consolidation fires.
    pub theta_count: usize,
    /// Top-k pool the relevant set is drawn from; must be >= theta_count
    /// or the trigger can never fire.
    pub neighbor_k: usize,
}

impl ConsolidationConfig {
    /// Defaults for casual open-ended conversation.
    pub fn casual() -> Self {
        ConsolidationConfig {
            theta_sim: 0.7,
            theta_count: 5,
            neighbor_k: 10,
        }
    }

    /// Defaults for longer task-oriented interactions.
    pub fn task_oriented() -> Self {
        ConsolidationConfig {
            theta_sim: 0.6,
            theta_count: 4,
            neighbor_k: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta_sim) {
            return Err(Error::InvalidConfig(format!(
                "theta_sim must be in [0,1], got {}",
                self.theta_sim
            )));
        }
        if self.theta_count < 1 {
            return Err(Error::InvalidConfig("theta_count must be >= 1".into()));
        }
        if self.neighbor_k < self.theta_count {
            return Err(Error::InvalidConfig(format!(
                "neighbor_k ({}) must be >= theta_count ({})",
                self.neighbor_k, self.theta_count
            )));
        }
        Ok(())
    }
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        ConsolidationConfig::casual()
    }
}

/// The subconscious store: verbatim units plus their vector index.
#[derive(Debug, Default)]
pub struct SubconsciousStore {
    index: VectorIndex,
    units: HashMap<String, SubconsciousUnit>,
}

impl SubconsciousStore {
    pub fn new() -> Self {
        SubconsciousStore::default()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn contains(&self, turn_id: &str) -> bool {
        self.units.contains_key(turn_id)
    }

    pub fn get(&self, turn_id: &str) -> Option<&SubconsciousUnit> {
        self.units.get(turn_id)
    }

    /// Buffer an already-encoded unit. The caller (engine) encodes via the
    /// configured backend first.
    pub fn store(&mut self, unit: InteractionUnit, vector: Embedding) -> Result<&SubconsciousUnit> {
        let turn_id = unit.turn_id.clone();
        if self.units.contains_key(&turn_id) {
            return Err(Error::DuplicateTurnId(turn_id));
        }
        self.index.insert(turn_id.clone(), vector.clone())?;
        self.units.insert(
            turn_id.clone(),
            SubconsciousUnit {
                unit,
                vector,
                consolidated: false,
                episode_refs: Vec::new(),
            },
        );
        Ok(&self.units[&turn_id])
    }

    /// Re-insert a unit from a snapshot, preserving its bookkeeping.
    pub(crate) fn restore(&mut self, stored: SubconsciousUnit) -> Result<()> {
        let turn_id = stored.unit.turn_id.clone();
        if self.units.contains_key(&turn_id) {
            return Err(Error::DuplicateTurnId(turn_id));
        }
        self.index.insert(turn_id.clone(), stored.vector.clone())?;
        self.units.insert(turn_id, stored);
        Ok(())
    }

    /// The relevant set for a stored unit: its unconsolidated neighbors
    /// within `theta_sim`, drawn from the top `neighbor_k` of the whole
    /// store, plus the unit itself. Returned as turn ids in ranked order
    /// (the unit itself first when tied).
    ///
    /// Already-consolidated units are excluded so a promoted cluster cannot
    /// re-trigger; merge-first handles its follow-ups instead.
    pub fn relevant_set(&self, turn_id: &str, cfg: &ConsolidationConfig) -> Vec<String> {
        let Some(me) = self.units.get(turn_id) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for hit in self.index.top_k(&me.vector, cfg.neighbor_k) {
            if hit.score < cfg.theta_sim {
                continue;
            }
            let candidate = &self.units[&hit.id];
            if candidate.consolidated && hit.id != turn_id {
                continue;
            }
            if !out.contains(&hit.id) {
                out.push(hit.id);
            }
        }
        // Self-inclusion is unconditional: with enough identical neighbors
        // the unit itself can be tie-broken out of the top-k pool.
        if !out.iter().any(|id| id == turn_id) {
            out.insert(0, turn_id.to_string());
        }
        out
    }

    /// Mark units as promoted into an episode. They remain indexed and
    /// retrievable; they just stop counting toward future relevant sets.
    pub fn mark_consolidated(&mut self, turn_ids: &[String], episode_id: &str) -> Result<()> {
        for id in turn_ids {
            if !self.units.contains_key(id) {
                return Err(Error::UnknownId(id.clone()));
            }
        }
        for id in turn_ids {
            let unit = self.units.get_mut(id).expect("checked above");
            unit.consolidated = true;
            if !unit.episode_refs.iter().any(|e| e == episode_id) {
                unit.episode_refs.push(episode_id.to_string());
            }
        }
        Ok(())
    }

    pub fn top_k(&self, query: &Embedding, k: usize) -> Vec<(f32, &SubconsciousUnit)> {
        self.index
            .top_k(query, k)
            .into_iter()
            .map(|hit| (hit.score, &self.units[&hit.id]))
            .collect()
    }

    /// Units in ingestion order (for snapshots and summaries).
    pub fn units_in_order(&self) -> Vec<&SubconsciousUnit> {
        self.index
            .entries_in_order()
            .into_iter()
            .map(|e| &self.units[&e.id])
            .collect()
    }
}

/// The recurrence trigger: fire iff the relevant set has reached
/// `theta_count` members.
pub fn should_consolidate(relevant_len: usize, cfg: &ConsolidationConfig) -> bool {
    relevant_len >= cfg.theta_count
}
