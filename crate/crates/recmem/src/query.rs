//! Budgeted retrieval types for question answering.

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::episodic::Episode;
use crate::llm::TokenUsage;
use crate::semantic::SemanticFact;
use crate::subconscious::SubconsciousUnit;

/// Per-store top-k caps at answer time.
///
/// The default construction couples the semantic budget to the episodic
/// one (`k_sem = 2 * k_epi`). Explicit overrides are allowed for ablations
/// but are flagged via [`RetrievalBudget::is_coupled`] in run output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalBudget {
    pub k_sub: usize,
    pub k_epi: usize,
    pub k_sem: usize,
}

impl RetrievalBudget {
    /// Coupled construction: `k_sem` is derived as `2 * k_epi`.
    pub fn coupled(k_sub: usize, k_epi: usize) -> Self {
        RetrievalBudget {
            k_sub,
            k_epi,
            k_sem: 2 * k_epi,
        }
    }

    /// Explicit semantic budget for ablations.
    pub fn with_k_sem(mut self, k_sem: usize) -> Self {
        self.k_sem = k_sem;
        self
    }

    pub fn is_coupled(&self) -> bool {
        self.k_sem == 2 * self.k_epi
    }
}

impl Default for RetrievalBudget {
    fn default() -> Self {
        RetrievalBudget::coupled(10, 5)
    }
}

/// A retrieved item with its cosine score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scored<T> {
    pub score: f32,
    pub item: T,
}

/// The three context sets retrieved for one question, each sorted by
/// score descending and capped by its budget. Semantic hits contain no
/// superseded facts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedContext {
    pub sub_hits: Vec<Scored<SubconsciousUnit>>,
    pub epi_hits: Vec<Scored<Episode>>,
    pub sem_hits: Vec<Scored<SemanticFact>>,
    pub query_vector: Embedding,
}

/// A generated answer with its evidence and query-phase token usage.
#[derive(Debug, Clone, Serialize)]
pub struct Answer {
    pub text: String,
    pub context: RetrievedContext,
    pub usage: TokenUsage,
}
