//! Benchmark harness: stream conversations through the engine per the
//! incremental protocol (all turns first, then the question session),
//! compare consolidation policies, and aggregate ledgers.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::EngineConfig;
use crate::dataset::ConversationRecord;
use crate::engine::MemoryEngine;
use crate::error::{Error, Result};
use crate::ledger::LedgerReport;
use crate::llm::TokenUsage;
use crate::query::RetrievalBudget;

/// Counters from one conversation's ingestion.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IngestSummary {
    pub conversation_id: String,
    pub turns: u64,
    pub merges: u64,
    pub consolidations: u64,
    pub episodes: u64,
    pub facts: u64,
    pub construction_usage: TokenUsage,
    pub construction_calls: usize,
    pub llm_failures: u64,
    pub skipped_blank_turns: u64,
}

/// Stream every turn of a record through a fresh engine.
///
/// Blank turns are skipped (logged), LLM failures are counted and the
/// stream continues; a duplicate turn id aborts the run.
pub fn run_ingest(
    record: &ConversationRecord,
    config: &EngineConfig,
) -> Result<(MemoryEngine, IngestSummary)> {
    let mut engine = config.build_engine(&record.conversation_id)?;
    let mut skipped_blank = 0u64;
    for unit in &record.turns {
        match engine.ingest_turn(unit.clone()) {
            Ok(_) => {}
            Err(Error::EmptyText) => {
                skipped_blank += 1;
                log::info!(
                    "skipping blank turn {} in {}",
                    unit.turn_id,
                    record.conversation_id
                );
            }
            Err(e @ (Error::LlmFailure(_) | Error::MalformedLlmOutput(_))) => {
                log::warn!(
                    "turn {} in {}: consolidation skipped: {e}",
                    unit.turn_id,
                    record.conversation_id
                );
            }
            Err(e) => return Err(e),
        }
    }
    let summary = summarize(&engine, skipped_blank);
    Ok((engine, summary))
}

fn summarize(engine: &MemoryEngine, skipped_blank: u64) -> IngestSummary {
    let c = engine.counters();
    let report = engine.ledger().report();
    IngestSummary {
        conversation_id: engine.conversation_id().to_string(),
        turns: c.turns,
        merges: c.merges,
        consolidations: c.consolidations,
        episodes: c.episodes_created,
        facts: c.facts_created,
        construction_usage: report.construction_total,
        construction_calls: report.construction_calls,
        llm_failures: c.llm_failures,
        skipped_blank_turns: skipped_blank,
    }
}

/// One answered (or failed) question.
#[derive(Debug, Clone, Serialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: TokenUsage,
}

/// The question session over one ingested conversation.
#[derive(Debug, Clone, Serialize)]
pub struct QuestionRun {
    pub conversation_id: String,
    /// True when the budget's semantic coupling was overridden.
    pub budget_override: bool,
    pub results: Vec<QuestionResult>,
    pub ledger: LedgerReport,
}

/// Answer every question of a record against an ingested engine.
/// Per-question LLM failures are recorded and the run continues.
pub fn run_questions(
    engine: &MemoryEngine,
    record: &ConversationRecord,
    budget: &RetrievalBudget,
) -> QuestionRun {
    let mut results = Vec::with_capacity(record.questions.len());
    for q in &record.questions {
        match engine.answer(&q.question_id, &q.text, budget) {
            Ok(answer) => results.push(QuestionResult {
                question_id: q.question_id.clone(),
                question: q.text.clone(),
                answer: Some(answer.text),
                error: None,
                usage: answer.usage,
            }),
            Err(e) => {
                log::warn!("question {} failed: {e}", q.question_id);
                results.push(QuestionResult {
                    question_id: q.question_id.clone(),
                    question: q.text.clone(),
                    answer: None,
                    error: Some(e.to_string()),
                    usage: TokenUsage::default(),
                });
            }
        }
    }
    QuestionRun {
        conversation_id: record.conversation_id.clone(),
        budget_override: !budget.is_coupled(),
        results,
        ledger: engine.ledger().report(),
    }
}

/// Ingested engines keyed by conversation, for ledger lookups.
#[derive(Default)]
pub struct EngineSet {
    engines: BTreeMap<String, MemoryEngine>,
}

impl EngineSet {
    pub fn new() -> Self {
        EngineSet::default()
    }

    pub fn insert(&mut self, engine: MemoryEngine) {
        self.engines
            .insert(engine.conversation_id().to_string(), engine);
    }

    pub fn get(&self, conversation_id: &str) -> Option<&MemoryEngine> {
        self.engines.get(conversation_id)
    }

    pub fn ledger_report(&self, conversation_id: &str) -> Result<LedgerReport> {
        self.engines
            .get(conversation_id)
            .map(|e| e.ledger().report())
            .ok_or_else(|| Error::UnknownConversation(conversation_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &MemoryEngine)> {
        self.engines.iter()
    }
}

/// Construction cost of one policy on one conversation.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyCost {
    pub construction_calls: usize,
    pub construction_tokens: u64,
    pub merges: u64,
    pub consolidations: u64,
    pub episodes: u64,
}

impl PolicyCost {
    fn from_summary(s: &IngestSummary) -> Self {
        PolicyCost {
            construction_calls: s.construction_calls,
            construction_tokens: s.construction_usage.total(),
            merges: s.merges,
            consolidations: s.consolidations,
            episodes: s.episodes,
        }
    }
}

/// Recurrence-vs-eager comparison for one conversation.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyComparison {
    pub conversation_id: String,
    pub recurrence: PolicyCost,
    pub eager: PolicyCost,
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trigger_count: u64,
    pub construction_tokens: u64,
}

/// Full bench output: per-conversation policy comparison plus threshold
/// sweeps (aggregated over all conversations).
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub comparisons: Vec<PolicyComparison>,
    pub theta_count_sweep: Vec<SweepPoint>,
    pub theta_sim_sweep: Vec<SweepPoint>,
}

/// Compare consolidation policies and sweep the trigger thresholds.
pub fn run_bench(records: &[ConversationRecord], config: &EngineConfig) -> Result<BenchReport> {
    let mut comparisons = Vec::with_capacity(records.len());
    for record in records {
        let mut rec_cfg = config.clone();
        rec_cfg.mode = crate::engine::Mode::Recurrence;
        let (_, rec) = run_ingest(record, &rec_cfg)?;

        let mut eager_cfg = config.clone();
        eager_cfg.mode = crate::engine::Mode::Eager;
        let (_, eag) = run_ingest(record, &eager_cfg)?;

        comparisons.push(PolicyComparison {
            conversation_id: record.conversation_id.clone(),
            recurrence: PolicyCost::from_summary(&rec),
            eager: PolicyCost::from_summary(&eag),
        });
    }

    let mut theta_count_sweep = Vec::new();
    for theta_count in 2..=8usize {
        let mut cfg = config.clone();
        cfg.mode = crate::engine::Mode::Recurrence;
        cfg.consolidation.theta_count = theta_count;
        cfg.consolidation.neighbor_k = cfg.consolidation.neighbor_k.max(theta_count + 2);
        theta_count_sweep.push(sweep_point(records, &cfg, theta_count as f64)?);
    }

    let mut theta_sim_sweep = Vec::new();
    for theta_sim in [0.5f32, 0.6, 0.7, 0.8, 0.9] {
        let mut cfg = config.clone();
        cfg.mode = crate::engine::Mode::Recurrence;
        cfg.consolidation.theta_sim = theta_sim;
        theta_sim_sweep.push(sweep_point(records, &cfg, theta_sim as f64)?);
    }

    Ok(BenchReport {
        comparisons,
        theta_count_sweep,
        theta_sim_sweep,
    })
}

fn sweep_point(
    records: &[ConversationRecord],
    config: &EngineConfig,
    value: f64,
) -> Result<SweepPoint> {
    let mut trigger_count = 0u64;
    let mut construction_tokens = 0u64;
    for record in records {
        let (_, summary) = run_ingest(record, config)?;
        trigger_count += summary.consolidations;
        construction_tokens += summary.construction_usage.total();
    }
    Ok(SweepPoint {
        value,
        trigger_count,
        construction_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Question;
    use crate::turn::{InteractionUnit, Timestamp};

    fn ts(i: usize) -> Timestamp {
        Timestamp::parse(&format!("2023-05-01T{:02}:{:02}:00Z", 10 + i / 60, i % 60)).unwrap()
    }

    fn record(turn_texts: &[&str]) -> ConversationRecord {
        let turns = turn_texts
            .iter()
            .enumerate()
            .map(|(i, text)| InteractionUnit::new(format!("t{i}"), *text, "noted", ts(i)))
            .collect();
        ConversationRecord {
            conversation_id: "c1".into(),
            turns,
            questions: vec![],
        }
    }

    #[test]
    fn zero_trigger_stream_spends_zero_construction_tokens() {
        let rec = record(&[
            "tell me about volcanoes",
            "how do jellyfish move",
            "what year was the telegraph invented",
        ]);
        let (_, summary) = run_ingest(&rec, &EngineConfig::default()).unwrap();
        assert_eq!(summary.turns, 3);
        assert_eq!(summary.consolidations, 0);
        assert_eq!(summary.construction_usage, TokenUsage::default());
        assert_eq!(summary.construction_calls, 0);
    }

    #[test]
    fn eager_mode_consolidates_every_turn() {
        let rec = record(&["one thing", "another thing", "a third thing"]);
        let mut cfg = EngineConfig::default();
        cfg.mode = crate::engine::Mode::Eager;
        let (engine, summary) = run_ingest(&rec, &cfg).unwrap();
        assert_eq!(summary.consolidations, 3);
        assert_eq!(summary.episodes, 3);
        // N consolidate calls plus N refine calls.
        let report = engine.ledger().report();
        assert_eq!(report.construction_by_purpose["consolidate"].calls, 3);
        assert_eq!(report.construction_by_purpose["refine"].calls, 3);
    }

    #[test]
    fn questions_run_even_when_there_are_none() {
        let rec = record(&["hello there"]);
        let (engine, _) = run_ingest(&rec, &EngineConfig::default()).unwrap();
        let run = run_questions(&engine, &rec, &RetrievalBudget::default());
        assert!(run.results.is_empty());
        assert_eq!(run.ledger.per_question.len(), 0);
        assert!(!run.budget_override);
    }

    #[test]
    fn two_questions_get_two_attributed_answers() {
        let mut rec = record(&["the sky is blue today", "the sea looks green"]);
        rec.questions = vec![
            Question {
                question_id: "q1".into(),
                text: "what color is the sky".into(),
                expected: None,
                category: None,
            },
            Question {
                question_id: "q2".into(),
                text: "what color is the sea".into(),
                expected: None,
                category: None,
            },
        ];
        let (engine, _) = run_ingest(&rec, &EngineConfig::default()).unwrap();
        let run = run_questions(&engine, &rec, &RetrievalBudget::default());
        assert_eq!(run.results.len(), 2);
        assert!(run.results.iter().all(|r| r.answer.is_some()));
        assert_eq!(run.ledger.per_question.len(), 2);
    }

    #[test]
    fn engine_set_reports_or_errors() {
        let rec = record(&["hi"]);
        let (engine, _) = run_ingest(&rec, &EngineConfig::default()).unwrap();
        let mut set = EngineSet::new();
        set.insert(engine);
        assert!(set.ledger_report("c1").is_ok());
        assert!(matches!(
            set.ledger_report("nope"),
            Err(Error::UnknownConversation(_))
        ));
    }
}
