//! Snapshot persistence: JSONL store dumps plus config and ledger.
//!
//! Layout of a snapshot directory:
//!   config.json          format version, conversation id, engine config,
//!                        ingest counters
//!   subconscious.jsonl   one unit per line, ingestion order
//!   episodes.jsonl       one episode per line, creation order
//!   facts.jsonl          one fact per line (superseded ones included)
//!   ledger.json          token ledger state
//!
//! Vectors are persisted verbatim, so restoring never touches the encoder
//! and retrieval is reproduced exactly. With stub backends the files are
//! byte-identical across runs of the same dataset and config.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::engine::{IngestCounters, MemoryEngine};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotMeta {
    format_version: u32,
    conversation_id: String,
    config: EngineConfig,
    counters: IngestCounters,
}

/// Write the engine's full state into `dir` (created if absent).
pub fn snapshot(engine: &MemoryEngine, config: &EngineConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let meta = SnapshotMeta {
        format_version: FORMAT_VERSION,
        conversation_id: engine.conversation_id().to_string(),
        config: config.clone(),
        counters: engine.counters(),
    };
    let mut f = BufWriter::new(File::create(dir.join("config.json"))?);
    serde_json::to_writer_pretty(&mut f, &meta).map_err(io_from_json)?;
    f.write_all(b"\n")?;
    f.flush()?;

    write_jsonl(
        &dir.join("subconscious.jsonl"),
        engine.subconscious().units_in_order(),
    )?;
    write_jsonl(
        &dir.join("episodes.jsonl"),
        engine.episodic().episodes_in_order(),
    )?;
    write_jsonl(&dir.join("facts.jsonl"), engine.semantic().facts_in_order())?;

    let mut f = BufWriter::new(File::create(dir.join("ledger.json"))?);
    serde_json::to_writer_pretty(&mut f, &engine.ledger().state()).map_err(io_from_json)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Rebuild an engine from a snapshot directory. Subsequent retrieval
/// output equals the pre-snapshot engine's exactly.
pub fn restore(dir: &Path) -> Result<MemoryEngine> {
    let meta_text = fs::read_to_string(dir.join("config.json"))?;
    let meta: SnapshotMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::parse(dir.join("config.json").display().to_string(), e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: meta.format_version,
        });
    }

    let mut engine = meta.config.build_engine(&meta.conversation_id)?;
    for unit in read_jsonl::<crate::subconscious::SubconsciousUnit>(&dir.join("subconscious.jsonl"))? {
        engine.restore_subconscious(unit)?;
    }
    for episode in read_jsonl::<crate::episodic::Episode>(&dir.join("episodes.jsonl"))? {
        engine.restore_episode(episode)?;
    }
    for fact in read_jsonl::<crate::semantic::SemanticFact>(&dir.join("facts.jsonl"))? {
        engine.restore_fact(fact)?;
    }
    let ledger_text = fs::read_to_string(dir.join("ledger.json"))?;
    let state = serde_json::from_str(&ledger_text)
        .map_err(|e| Error::parse(dir.join("ledger.json").display().to_string(), e.to_string()))?;
    engine.restore_ledger(state);
    engine.restore_counters(meta.counters);
    Ok(engine)
}

fn write_jsonl<T: Serialize>(path: &Path, items: Vec<&T>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, item).map_err(io_from_json)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), lineno + 1), e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

fn io_from_json(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
