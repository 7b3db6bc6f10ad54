//! Temporary calibration probe; removed before finalizing.

mod common;

use common::*;
use recmem::config::EngineConfig;
use recmem::harness::run_ingest;

#[test]
#[ignore]
fn probe_sweeps() {
    let record = record_from("probe", sweep_stream());

    println!("theta_count sweep (theta_sim=0.7):");
    for theta_count in 2..=8usize {
        let mut cfg = EngineConfig::default();
        cfg.consolidation.theta_sim = 0.7;
        cfg.consolidation.theta_count = theta_count;
        cfg.consolidation.neighbor_k = 16;
        let (_, s) = run_ingest(&record, &cfg).unwrap();
        println!(
            "  tc={theta_count}: triggers={} merges={} episodes={} tokens={}",
            s.consolidations,
            s.merges,
            s.episodes,
            s.construction_usage.total()
        );
    }

    println!("theta_sim sweep (theta_count=5):");
    for theta_sim in [0.5f32, 0.6, 0.7, 0.8, 0.9] {
        let mut cfg = EngineConfig::default();
        cfg.consolidation.theta_sim = theta_sim;
        cfg.consolidation.theta_count = 5;
        cfg.consolidation.neighbor_k = 16;
        let (_, s) = run_ingest(&record, &cfg).unwrap();
        println!(
            "  ts={theta_sim}: triggers={} merges={} episodes={} tokens={}",
            s.consolidations,
            s.merges,
            s.episodes,
            s.construction_usage.total()
        );
    }

    println!("eager-vs-recurrence on 30%-recurring stream:");
    let spec = StreamSpec {
        seed: 7,
        n_turns: 100,
        n_topics: 3,
        recurring_fraction: 0.3,
        with_fact_markers: false,
        with_supersede_markers: false,
    };
    let record = record_from("er", synthetic_stream(&spec));
    let mut cfg = EngineConfig::default();
    cfg.consolidation.theta_count = 5;
    let (_, rec) = run_ingest(&record, &cfg).unwrap();
    cfg.mode = recmem::engine::Mode::Eager;
    let (_, eag) = run_ingest(&record, &cfg).unwrap();
    println!(
        "  recurrence: calls={} tokens={}",
        rec.construction_calls,
        rec.construction_usage.total()
    );
    println!(
        "  eager:      calls={} tokens={}",
        eag.construction_calls,
        eag.construction_usage.total()
    );
}
