//! The per-conversation memory engine: ingestion pipeline and answering.
//!
//! Ingestion runs store -> merge-first -> recurrence trigger ->
//! consolidate -> refine, in that order. Ingestion takes `&mut self` and
//! queries take `&self`, so the borrow checker enforces the concurrency
//! contract: queries may run concurrently with each other but never with
//! ingestion on the same conversation.

use std::collections::HashSet;

use serde::Serialize;

use crate::embedding::Encoder;
use crate::episodic::{
    fmt_unit, parse_consolidation_output, parse_merge_output, Episode, EpisodicStore, TimeSpan,
};
use crate::error::{Error, Result};
use crate::ledger::TokenLedger;
use crate::llm::{LlmBackend, LlmRequest, LlmResponse, Purpose};
use crate::prompts::PromptTemplates;
use crate::query::{Answer, RetrievalBudget, RetrievedContext, Scored};
use crate::semantic::{parse_refinement_output, sanitize_fact_text, SemanticStore};
use crate::subconscious::{should_consolidate, ConsolidationConfig, SubconsciousStore};
use crate::turn::{InteractionUnit, Timestamp};

/// Consolidation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Recurrence-triggered consolidation with merge-first updates.
    #[default]
    Recurrence,
    /// Baseline policy: consolidate every turn as a singleton cluster
    /// (plus refinement), no merge step, trigger thresholds ignored.
    Eager,
    /// Recurrence pipeline, but refinement extracts facts without the
    /// episode narrative as a reference.
    DirectExtraction,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrence" => Ok(Mode::Recurrence),
            "eager" => Ok(Mode::Eager),
            "direct-extraction" => Ok(Mode::DirectExtraction),
            other => Err(Error::InvalidConfig(format!("unknown mode: {other}"))),
        }
    }
}

/// What happened to one ingested turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum TurnOutcome {
    /// Buffered into the subconscious store only.
    Stored,
    /// Folded in place into an existing episode.
    Merged { episode_id: String },
    /// The recurrence trigger fired and the cluster was consolidated.
    Consolidated {
        episode_ids: Vec<String>,
        cluster_size: usize,
        new_facts: usize,
    },
}

/// Running totals over one conversation's ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct IngestCounters {
    pub turns: u64,
    pub merges: u64,
    pub consolidations: u64,
    pub episodes_created: u64,
    pub refinements: u64,
    pub facts_created: u64,
    pub llm_failures: u64,
}

/// One conversation's memory engine.
pub struct MemoryEngine {
    conversation_id: String,
    encoder: Box<dyn Encoder>,
    llm: Box<dyn LlmBackend>,
    prompts: PromptTemplates,
    consolidation: ConsolidationConfig,
    mode: Mode,
    /// Context size for Eq-style fact retrieval during refinement.
    refine_context_k: usize,
    subconscious: SubconsciousStore,
    episodic: EpisodicStore,
    semantic: SemanticStore,
    ledger: TokenLedger,
    counters: IngestCounters,
    last_timestamp: Option<Timestamp>,
}

impl MemoryEngine {
    pub fn new(
        conversation_id: impl Into<String>,
        encoder: Box<dyn Encoder>,
        llm: Box<dyn LlmBackend>,
        prompts: PromptTemplates,
        consolidation: ConsolidationConfig,
        mode: Mode,
    ) -> Result<Self> {
        consolidation.validate()?;
        Ok(MemoryEngine {
            conversation_id: conversation_id.into(),
            encoder,
            llm,
            prompts,
            consolidation,
            mode,
            refine_context_k: 10,
            subconscious: SubconsciousStore::new(),
            episodic: EpisodicStore::new(),
            semantic: SemanticStore::new(),
            ledger: TokenLedger::new(),
            counters: IngestCounters::default(),
            last_timestamp: None,
        })
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation_id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn consolidation_config(&self) -> &ConsolidationConfig {
        &self.consolidation
    }

    pub fn subconscious(&self) -> &SubconsciousStore {
        &self.subconscious
    }

    pub fn episodic(&self) -> &EpisodicStore {
        &self.episodic
    }

    pub fn semantic(&self) -> &SemanticStore {
        &self.semantic
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    pub fn counters(&self) -> IngestCounters {
        self.counters
    }

    /// Process one turn through the full pipeline.
    ///
    /// Errors leave the stores consistent: on any LLM failure or malformed
    /// output the turn stays buffered and unconsolidated, episodes are
    /// untouched, and the trigger may fire again on a later turn. Failed
    /// refinements are logged and swallowed (the episode remains).
    pub fn ingest_turn(&mut self, unit: InteractionUnit) -> Result<TurnOutcome> {
        if unit.is_blank() {
            return Err(Error::EmptyText);
        }
        if self.subconscious.contains(&unit.turn_id) {
            return Err(Error::DuplicateTurnId(unit.turn_id));
        }
        if let Some(last) = self.last_timestamp {
            if unit.timestamp < last {
                return Err(Error::OutOfOrderTurn {
                    turn_id: unit.turn_id,
                });
            }
        }
        let vector = self.encoder.encode_unit(&unit)?;
        let turn_id = unit.turn_id.clone();
        self.subconscious.store(unit, vector)?;
        self.last_timestamp = Some(
            self.subconscious
                .get(&turn_id)
                .expect("just stored")
                .unit
                .timestamp,
        );
        self.counters.turns += 1;

        match self.mode {
            Mode::Eager => {
                let (episode_ids, facts) = self.consolidate_cluster(vec![turn_id])?;
                Ok(TurnOutcome::Consolidated {
                    cluster_size: 1,
                    episode_ids,
                    new_facts: facts,
                })
            }
            Mode::Recurrence | Mode::DirectExtraction => {
                if let Some(episode_id) = self.try_merge(&turn_id)? {
                    return Ok(TurnOutcome::Merged { episode_id });
                }
                let relevant = self.subconscious.relevant_set(&turn_id, &self.consolidation);
                if should_consolidate(relevant.len(), &self.consolidation) {
                    let cluster_size = relevant.len();
                    let (episode_ids, facts) = self.consolidate_cluster(relevant)?;
                    Ok(TurnOutcome::Consolidated {
                        episode_ids,
                        cluster_size,
                        new_facts: facts,
                    })
                } else {
                    Ok(TurnOutcome::Stored)
                }
            }
        }
    }

    /// Merge-first: fold the turn into its nearest episode when similarity
    /// permits. No episode or similarity below threshold costs zero tokens.
    fn try_merge(&mut self, turn_id: &str) -> Result<Option<String>> {
        let s = self.subconscious.get(turn_id).expect("stored above");
        let Some((episode, score)) = self.episodic.nearest(&s.vector) else {
            return Ok(None);
        };
        if score < self.consolidation.theta_sim {
            return Ok(None);
        }
        let episode_id = episode.episode_id.clone();
        let title = episode.title.clone();
        let unit = s.unit.clone();

        let prompt = self
            .prompts
            .render_merge(&title, &episode.narrative, &unit);
        let resp = self.construction_call(Purpose::Merge, prompt)?;
        let new_narrative = parse_merge_output(&resp.text)?;
        let new_vector = self
            .encoder
            .encode(&Episode::embedding_text(&title, &new_narrative))?;
        self.episodic
            .apply_merge(&episode_id, new_narrative, new_vector, &unit)?;
        self.subconscious
            .mark_consolidated(&[turn_id.to_string()], &episode_id)?;
        self.counters.merges += 1;
        Ok(Some(episode_id))
    }

    /// Consolidate a triggered cluster into one or more episodes, then
    /// refine each new episode. Returns (episode ids, facts inserted).
    fn consolidate_cluster(&mut self, cluster_ids: Vec<String>) -> Result<(Vec<String>, usize)> {
        let mut units: Vec<InteractionUnit> = cluster_ids
            .iter()
            .map(|id| self.subconscious.get(id).expect("cluster ids are stored").unit.clone())
            .collect();
        units.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.turn_id.cmp(&b.turn_id))
        });

        let prompt = self.prompts.render_consolidate(&units);
        let resp = self.construction_call(Purpose::Consolidate, prompt)?;
        let drafts = parse_consolidation_output(&resp.text)?;
        self.counters.consolidations += 1;

        // Assign each cluster turn to exactly one episode: the first draft
        // that declares it; turns no draft claims go to the first episode.
        let cluster_set: HashSet<&str> = units.iter().map(|u| u.turn_id.as_str()).collect();
        let mut assigned: HashSet<String> = HashSet::new();
        let mut per_draft_turns: Vec<Vec<String>> = Vec::with_capacity(drafts.len());
        for draft in &drafts {
            let mut mine = Vec::new();
            for id in &draft.source_turn_ids {
                if cluster_set.contains(id.as_str()) && assigned.insert(id.clone()) {
                    mine.push(id.clone());
                }
            }
            per_draft_turns.push(mine);
        }
        for unit in &units {
            if !assigned.contains(&unit.turn_id) {
                per_draft_turns[0].push(unit.turn_id.clone());
                assigned.insert(unit.turn_id.clone());
            }
        }

        // All episodes from one trigger share the trigger instant.
        let created_at = units.last().expect("cluster is non-empty").timestamp;
        let mut episode_ids = Vec::with_capacity(drafts.len());
        for (draft, turn_ids) in drafts.iter().zip(per_draft_turns) {
            let vector = self
                .encoder
                .encode(&Episode::embedding_text(&draft.title, &draft.narrative))?;
            let mut span: Option<TimeSpan> = None;
            for id in &turn_ids {
                let ts = self.subconscious.get(id).expect("assigned id").unit.timestamp;
                match span.as_mut() {
                    Some(s) => s.extend(ts),
                    None => span = Some(TimeSpan::point(ts)),
                }
            }
            let span = span.unwrap_or(TimeSpan::point(created_at));
            let episode_id = self.episodic.insert_new(
                draft.title.clone(),
                draft.narrative.clone(),
                vector,
                turn_ids.clone(),
                span,
                created_at,
            )?;
            self.counters.episodes_created += 1;
            if !turn_ids.is_empty() {
                self.subconscious.mark_consolidated(&turn_ids, &episode_id)?;
            }
            episode_ids.push(episode_id);
        }

        let mut facts = 0;
        for episode_id in &episode_ids {
            facts += self.refine_episode(episode_id, &units);
        }
        Ok((episode_ids, facts))
    }

    /// Refinement: one LLM pass per new episode. Failures and malformed
    /// outputs insert nothing and are never retried, only logged.
    fn refine_episode(&mut self, episode_id: &str, cluster: &[InteractionUnit]) -> usize {
        let episode = self.episodic.get(episode_id).expect("just created");
        let created_at = episode.created_at;
        let context: Vec<(String, String)> = self
            .semantic
            .top_k(&episode.vector, self.refine_context_k)
            .into_iter()
            .map(|(_, f)| (f.fact_id.clone(), f.text.clone()))
            .collect();
        let episode_ref = if self.mode == Mode::DirectExtraction {
            None
        } else {
            Some((episode.title.as_str(), episode.narrative.as_str()))
        };
        let prompt = self.prompts.render_refine(episode_ref, cluster, &context);

        let resp = match self.construction_call(Purpose::Refine, prompt) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("refinement for {episode_id} failed, not retried: {e}");
                return 0;
            }
        };
        self.counters.refinements += 1;
        let draft = match parse_refinement_output(&resp.text) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("refinement for {episode_id} produced unusable output: {e}");
                return 0;
            }
        };

        let cluster_ids: HashSet<&str> = cluster.iter().map(|u| u.turn_id.as_str()).collect();
        let mut inserted: Vec<String> = Vec::new();
        for fact in draft.facts {
            let Some(text) = sanitize_fact_text(&fact.text) else {
                continue;
            };
            let sources: Vec<String> = fact
                .source_turn_ids
                .into_iter()
                .filter(|id| cluster_ids.contains(id.as_str()))
                .collect();
            let vector = match self.encoder.encode(&text) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("skipping unencodable fact {text:?}: {e}");
                    continue;
                }
            };
            match self.semantic.insert_fact(
                text,
                vector,
                episode_id.to_string(),
                sources,
                created_at,
            ) {
                Ok(Some(id)) => inserted.push(id),
                Ok(None) => {} // verbatim duplicate of a live fact
                Err(e) => log::warn!("fact insert failed: {e}"),
            }
        }
        self.counters.facts_created += inserted.len() as u64;

        if !draft.supersedes.is_empty() {
            match inserted.first() {
                Some(new_id) => {
                    for old_id in &draft.supersedes {
                        if !self.semantic.supersede(old_id, new_id) {
                            log::warn!(
                                "ignoring supersession of {old_id}: unknown, already superseded, or self"
                            );
                        }
                    }
                }
                None => log::warn!(
                    "refinement for {episode_id} requested supersessions but produced no facts; ignored"
                ),
            }
        }
        inserted.len()
    }

    /// Issue a construction-phase LLM call and attribute its usage.
    /// Failures are tallied before the error propagates.
    fn construction_call(&mut self, purpose: Purpose, prompt: String) -> Result<LlmResponse> {
        match self.llm.complete(&LlmRequest::new(purpose, prompt)) {
            Ok(resp) => {
                self.ledger.record_construction(purpose, resp.usage);
                Ok(resp)
            }
            Err(e) => {
                self.counters.llm_failures += 1;
                self.ledger.record_failure(purpose);
                Err(e)
            }
        }
    }

    /// Budgeted retrieval across the three stores. Never mutates any store
    /// and spends zero LLM tokens.
    pub fn retrieve(&self, question: &str, budget: &RetrievalBudget) -> Result<RetrievedContext> {
        let query_vector = self.encoder.encode(question)?;
        let sub_hits = self
            .subconscious
            .top_k(&query_vector, budget.k_sub)
            .into_iter()
            .map(|(score, u)| Scored {
                score,
                item: u.clone(),
            })
            .collect();
        let epi_hits = self
            .episodic
            .top_k(&query_vector, budget.k_epi)
            .into_iter()
            .map(|(score, e)| Scored {
                score,
                item: e.clone(),
            })
            .collect();
        let sem_hits = self
            .semantic
            .top_k(&query_vector, budget.k_sem)
            .into_iter()
            .map(|(score, f)| Scored {
                score,
                item: f.clone(),
            })
            .collect();
        Ok(RetrievedContext {
            sub_hits,
            epi_hits,
            sem_hits,
            query_vector,
        })
    }

    /// Retrieve, build the answer prompt (most-distilled section first),
    /// and generate. Usage is attributed to the query phase under
    /// `question_id`.
    pub fn answer(
        &self,
        question_id: &str,
        question: &str,
        budget: &RetrievalBudget,
    ) -> Result<Answer> {
        let context = self.retrieve(question, budget)?;
        let semantic: Vec<String> = context
            .sem_hits
            .iter()
            .map(|h| h.item.text.clone())
            .collect();
        let episodic: Vec<String> = context
            .epi_hits
            .iter()
            .map(|h| {
                format!(
                    "({} to {}) {}: {}",
                    h.item.time_span.earliest,
                    h.item.time_span.latest,
                    h.item.title,
                    h.item.narrative
                )
            })
            .collect();
        let subconscious: Vec<String> = context
            .sub_hits
            .iter()
            .map(|h| fmt_unit(&h.item.unit))
            .collect();
        let prompt = self
            .prompts
            .render_answer(&semantic, &episodic, &subconscious, question);
        let resp = match self.llm.complete(&LlmRequest::new(Purpose::Answer, prompt)) {
            Ok(r) => r,
            Err(e) => {
                self.ledger.record_failure(Purpose::Answer);
                return Err(e);
            }
        };
        self.ledger.record_query(question_id, resp.usage);
        Ok(Answer {
            text: resp.text,
            context,
            usage: resp.usage,
        })
    }

    // Snapshot plumbing: the stores are rebuilt entity by entity with
    // their persisted vectors, bypassing the encoder.

    pub(crate) fn restore_subconscious(
        &mut self,
        stored: crate::subconscious::SubconsciousUnit,
    ) -> Result<()> {
        if self.last_timestamp.is_none_or(|last| stored.unit.timestamp > last) {
            self.last_timestamp = Some(stored.unit.timestamp);
        }
        self.subconscious.restore(stored)
    }

    pub(crate) fn restore_episode(&mut self, episode: Episode) -> Result<()> {
        self.episodic.restore(episode)
    }

    pub(crate) fn restore_fact(&mut self, fact: crate::semantic::SemanticFact) -> Result<()> {
        self.semantic.restore(fact)
    }

    pub(crate) fn restore_ledger(&mut self, state: crate::ledger::LedgerState) {
        self.ledger = TokenLedger::from_state(state);
    }

    pub(crate) fn restore_counters(&mut self, counters: IngestCounters) {
        self.counters = counters;
    }
}
