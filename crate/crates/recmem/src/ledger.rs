//! Construction-vs-query token accounting.
//!
//! Every LLM call is attributed to exactly one phase: construction (merge,
//! consolidate, refine during ingestion) or query (answering), and query
//! calls are additionally keyed by question. The ledger is internally
//! synchronized so concurrent query-phase calls attribute correctly.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llm::{Purpose, TokenUsage};

/// One recorded LLM call.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CallRecord {
    pub purpose: Purpose,
    pub usage: TokenUsage,
}

/// Serializable ledger contents; also the snapshot representation.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct LedgerState {
    pub construction: Vec<CallRecord>,
    /// (question_id, call) in recording order.
    pub query: Vec<(String, CallRecord)>,
    /// Failed calls per purpose (retries exhausted); no usage is known.
    #[serde(default)]
    pub failures: BTreeMap<String, u64>,
}

/// Aggregated view of one conversation's ledger.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LedgerReport {
    pub construction_total: TokenUsage,
    pub construction_calls: usize,
    pub construction_by_purpose: BTreeMap<String, PurposeTotals>,
    pub per_question: Vec<QuestionUsage>,
    pub query_total: TokenUsage,
    /// Arithmetic mean of per-question totals (prompt+completion); 0 when
    /// no questions were asked.
    pub avg_query_tokens_per_question: f64,
    pub llm_failures: u64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct PurposeTotals {
    pub calls: usize,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct QuestionUsage {
    pub question_id: String,
    pub usage: TokenUsage,
}

/// Token ledger for one conversation.
#[derive(Debug, Default)]
pub struct TokenLedger {
    inner: Mutex<LedgerState>,
}

impl TokenLedger {
    pub fn new() -> Self {
        TokenLedger::default()
    }

    pub fn from_state(state: LedgerState) -> Self {
        TokenLedger {
            inner: Mutex::new(state),
        }
    }

    pub fn record_construction(&self, purpose: Purpose, usage: TokenUsage) {
        debug_assert!(purpose != Purpose::Answer);
        self.inner
            .lock()
            .expect("ledger lock")
            .construction
            .push(CallRecord { purpose, usage });
    }

    pub fn record_query(&self, question_id: &str, usage: TokenUsage) {
        self.inner.lock().expect("ledger lock").query.push((
            question_id.to_string(),
            CallRecord {
                purpose: Purpose::Answer,
                usage,
            },
        ));
    }

    pub fn record_failure(&self, purpose: Purpose) {
        *self
            .inner
            .lock()
            .expect("ledger lock")
            .failures
            .entry(purpose.as_str().to_string())
            .or_insert(0) += 1;
    }

    pub fn state(&self) -> LedgerState {
        self.inner.lock().expect("ledger lock").clone()
    }

    pub fn construction_call_count(&self) -> usize {
        self.inner.lock().expect("ledger lock").construction.len()
    }

    pub fn report(&self) -> LedgerReport {
        let state = self.inner.lock().expect("ledger lock");

        let mut construction_total = TokenUsage::default();
        let mut by_purpose: BTreeMap<String, PurposeTotals> = BTreeMap::new();
        for call in &state.construction {
            construction_total.add(call.usage);
            let entry = by_purpose
                .entry(call.purpose.as_str().to_string())
                .or_insert(PurposeTotals {
                    calls: 0,
                    usage: TokenUsage::default(),
                });
            entry.calls += 1;
            entry.usage.add(call.usage);
        }

        // Per-question totals keep first-seen question order.
        let mut per_question: Vec<QuestionUsage> = Vec::new();
        let mut query_total = TokenUsage::default();
        for (qid, call) in &state.query {
            query_total.add(call.usage);
            match per_question.iter_mut().find(|q| &q.question_id == qid) {
                Some(q) => q.usage.add(call.usage),
                None => per_question.push(QuestionUsage {
                    question_id: qid.clone(),
                    usage: call.usage,
                }),
            }
        }
        let avg = if per_question.is_empty() {
            0.0
        } else {
            per_question.iter().map(|q| q.usage.total() as f64).sum::<f64>()
                / per_question.len() as f64
        };

        LedgerReport {
            construction_total,
            construction_calls: state.construction.len(),
            construction_by_purpose: by_purpose,
            per_question,
            query_total,
            avg_query_tokens_per_question: avg,
            llm_failures: state.failures.values().sum(),
        }
    }
}
