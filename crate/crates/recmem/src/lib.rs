//! recmem: a streaming conversational-memory engine.
//!
//! Every user–assistant turn is embedded and buffered in a cheap
//! "subconscious" store; an LLM is invoked for episodic/semantic
//! consolidation only when semantically similar turns recur. Three stores
//! serve budgeted retrieval at question time, and a token ledger separates
//! construction cost from query cost.
//!
//! Offline by default: the hashed test encoder and the deterministic stub
//! LLM make every pipeline path reproducible without network access.
//! Remote OpenAI-compatible backends slot in via configuration.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod engine;
pub mod episodic;
pub mod error;
pub mod harness;
pub mod index;
pub mod ledger;
pub mod llm;
pub mod prompts;
pub mod query;
pub mod semantic;
pub mod snapshot;
pub mod subconscious;
pub mod turn;

pub use config::{EngineConfig, LlmBackendKind, LlmConfig};
pub use embedding::{Embedding, Encoder, EncoderBackend, EncoderConfig, HashedEncoder, RemoteEncoder};
pub use engine::{IngestCounters, MemoryEngine, Mode, TurnOutcome};
pub use episodic::{fmt_unit, Episode, EpisodicStore, TimeSpan};
pub use error::{Error, Result};
pub use harness::{run_bench, run_ingest, run_questions, EngineSet, IngestSummary};
pub use index::{IndexEntry, ScoredHit, VectorIndex};
pub use ledger::{LedgerReport, TokenLedger};
pub use llm::{heuristic_usage, LlmBackend, LlmRequest, LlmResponse, Purpose, RemoteLlm, RetryConfig, StubLlm, TokenUsage};
pub use prompts::PromptTemplates;
pub use query::{Answer, RetrievalBudget, RetrievedContext, Scored};
pub use semantic::{SemanticFact, SemanticStore};
pub use subconscious::{should_consolidate, ConsolidationConfig, SubconsciousStore, SubconsciousUnit};
pub use turn::{InteractionUnit, Timestamp};
