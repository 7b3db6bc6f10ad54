//! recmem CLI: ingest conversations, answer question sessions, compare
//! consolidation policies, and persist/restore memory state.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use recmem::config::EngineConfig;
use recmem::dataset::{load_dataset, ConversationRecord, DatasetFormat};
use recmem::harness::{run_bench, run_ingest, run_questions, EngineSet};
use recmem::query::RetrievalBudget;
use recmem::snapshot;

#[derive(Parser)]
#[command(name = "recmem", version, about = "Streaming conversational memory engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON config file with engine settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dataset format: native-jsonl | locomo | longmemeval.
    #[arg(long, default_value = "native-jsonl")]
    format: String,
    /// Consolidation policy: recurrence | eager | direct-extraction.
    #[arg(long)]
    mode: Option<String>,
    /// Similarity threshold for the relevant set.
    #[arg(long)]
    theta_sim: Option<f32>,
    /// Recurrence count that triggers consolidation.
    #[arg(long)]
    theta_count: Option<usize>,
    /// Subconscious retrieval budget.
    #[arg(long)]
    k_sub: Option<usize>,
    /// Episodic retrieval budget (semantic budget follows as 2x).
    #[arg(long)]
    k_epi: Option<usize>,
    /// Output directory (snapshots, reports).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a dataset through the engine; snapshot per conversation
    /// when --out is given.
    Ingest(CommonOpts),
    /// Restore snapshots from --out and answer each conversation's
    /// questions.
    Query(CommonOpts),
    /// Compare recurrence vs eager consolidation and sweep thresholds.
    Bench(CommonOpts),
    /// Ingest a dataset and persist state to --out (required).
    Snapshot(CommonOpts),
    /// Load state from --out and print a summary.
    Restore(CommonOpts),
}

fn resolve_config(opts: &CommonOpts) -> anyhow::Result<EngineConfig> {
    let mut cfg = match &opts.config {
        Some(path) => EngineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => EngineConfig::default(),
    };
    if let Some(mode) = &opts.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(theta_sim) = opts.theta_sim {
        cfg.consolidation.theta_sim = theta_sim;
    }
    if let Some(theta_count) = opts.theta_count {
        cfg.consolidation.theta_count = theta_count;
        if cfg.consolidation.neighbor_k < theta_count {
            cfg.consolidation.neighbor_k = theta_count + 2;
        }
    }
    if let Some(k_sub) = opts.k_sub {
        cfg.budget.k_sub = k_sub;
    }
    if let Some(k_epi) = opts.k_epi {
        // CLI override uses the coupled construction.
        cfg.budget = RetrievalBudget::coupled(cfg.budget.k_sub, k_epi);
    }
    if let Some(out) = &opts.out {
        cfg.snapshot_dir = Some(out.clone());
    }
    cfg.consolidation.validate()?;
    Ok(cfg)
}

fn load_records(opts: &CommonOpts) -> anyhow::Result<Vec<ConversationRecord>> {
    let Some(dataset) = &opts.dataset else {
        bail!("--dataset is required for this subcommand");
    };
    let format: DatasetFormat = opts.format.parse()?;
    let records = load_dataset(dataset, format)
        .with_context(|| format!("loading dataset {}", dataset.display()))?;
    Ok(records)
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn cmd_ingest(opts: &CommonOpts, persist_required: bool) -> anyhow::Result<()> {
    let cfg = resolve_config(opts)?;
    if persist_required && cfg.snapshot_dir.is_none() {
        bail!("--out is required for the snapshot subcommand");
    }
    let records = load_records(opts)?;
    for record in &records {
        let (engine, summary) = run_ingest(record, &cfg)?;
        if let Some(dir) = &cfg.snapshot_dir {
            let conv_dir = dir.join(&record.conversation_id);
            snapshot::snapshot(&engine, &cfg, &conv_dir)
                .with_context(|| format!("writing snapshot {}", conv_dir.display()))?;
        }
        print_json(&summary)?;
    }
    Ok(())
}

fn cmd_query(opts: &CommonOpts) -> anyhow::Result<()> {
    let cfg = resolve_config(opts)?;
    let Some(state_dir) = &cfg.snapshot_dir else {
        bail!("--out must point at a directory produced by `recmem ingest --out`");
    };
    let records = load_records(opts)?;
    let mut set = EngineSet::new();
    for record in &records {
        let conv_dir = state_dir.join(&record.conversation_id);
        let engine = snapshot::restore(&conv_dir)
            .with_context(|| format!("restoring {}", conv_dir.display()))?;
        set.insert(engine);
    }
    for record in &records {
        let engine = set
            .get(&record.conversation_id)
            .expect("restored just above");
        let run = run_questions(engine, record, &cfg.budget);
        print_json(&run)?;
    }
    Ok(())
}

fn cmd_bench(opts: &CommonOpts) -> anyhow::Result<()> {
    let cfg = resolve_config(opts)?;
    let records = load_records(opts)?;
    let report = run_bench(&records, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_restore(opts: &CommonOpts) -> anyhow::Result<()> {
    let Some(dir) = &opts.out else {
        bail!("--out must point at a snapshot directory tree");
    };
    // Each immediate subdirectory is one conversation's snapshot.
    let mut summaries = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let engine = snapshot::restore(&entry.path())
            .with_context(|| format!("restoring {}", entry.path().display()))?;
        summaries.push(serde_json::json!({
            "conversation_id": engine.conversation_id(),
            "units": engine.subconscious().len(),
            "episodes": engine.episodic().len(),
            "facts": engine.semantic().len(),
            "live_facts": engine.semantic().live_len(),
        }));
    }
    if summaries.is_empty() {
        bail!("no snapshots found under {}", dir.display());
    }
    for s in summaries {
        print_json(&s)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Ingest(opts) => cmd_ingest(opts, false),
        Command::Snapshot(opts) => cmd_ingest(opts, true),
        Command::Query(opts) => cmd_query(opts),
        Command::Bench(opts) => cmd_bench(opts),
        Command::Restore(opts) => cmd_restore(opts),
    }
}
