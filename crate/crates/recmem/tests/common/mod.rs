//! Shared fixtures for the integration and acceptance suites.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use recmem::config::EngineConfig;
use recmem::dataset::{load_dataset, ConversationRecord, DatasetFormat, Question};
use recmem::subconscious::ConsolidationConfig;
use recmem::turn::{InteractionUnit, Timestamp};

pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// The three-turn cake/jeans/cake fixture with its two questions.
pub fn golden_record() -> ConversationRecord {
    let records = load_dataset(&data_path("golden.jsonl"), DatasetFormat::NativeJsonl)
        .expect("golden fixture loads");
    assert_eq!(records.len(), 1);
    records.into_iter().next().unwrap()
}

/// Engine config for the golden trace: hashed encoder, stub LLM,
/// theta_count=2 and a theta_sim that separates the cake turns
/// (cosine 0.54 under the hashed encoder) from the jeans turn (<=0.14).
pub fn golden_config() -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.consolidation = ConsolidationConfig {
        theta_sim: 0.35,
        theta_count: 2,
        neighbor_k: 10,
    };
    cfg
}

fn minute_ts(i: usize) -> Timestamp {
    let h = 8 + i / 60;
    let m = i % 60;
    Timestamp::parse(&format!("2023-06-01T{h:02}:{m:02}:00Z")).unwrap()
}

/// A synthetic stream mixing recurring topics with one-off noise turns.
///
/// Topic `k` shares six keywords across its turns and adds `k % 4` unique
/// filler words per turn, so intra-topic cosine under the hashed encoder
/// spans roughly 0.55..1.0 depending on the topic, while unrelated turns
/// stay far below 0.5. Deterministic for a given seed.
pub struct StreamSpec {
    pub seed: u64,
    pub n_turns: usize,
    pub n_topics: usize,
    /// Probability that a turn belongs to some recurring topic.
    pub recurring_fraction: f64,
    /// Attach FACT{...} markers to some topic turns.
    pub with_fact_markers: bool,
    /// Attach SUPERSEDE{fact-00000x} markers to a few late topic turns.
    pub with_supersede_markers: bool,
}

impl StreamSpec {
    pub fn new(seed: u64, n_turns: usize) -> Self {
        StreamSpec {
            seed,
            n_turns,
            n_topics: 4,
            recurring_fraction: 0.5,
            with_fact_markers: false,
            with_supersede_markers: false,
        }
    }
}

pub fn synthetic_stream(spec: &StreamSpec) -> Vec<InteractionUnit> {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let mut turns = Vec::with_capacity(spec.n_turns);
    for i in 0..spec.n_turns {
        let is_topic = rng.gen_bool(spec.recurring_fraction) && spec.n_topics > 0;
        let (user, assistant) = if is_topic {
            let k = rng.gen_range(0..spec.n_topics);
            topic_turn(&mut rng, spec, k, i)
        } else {
            noise_turn(&mut rng, spec.seed, i)
        };
        turns.push(InteractionUnit::new(
            format!("t{i:04}"),
            user,
            assistant,
            minute_ts(i),
        ));
    }
    turns
}

fn topic_words(k: usize) -> String {
    // Six stable pseudo-words per topic, disjoint across topics.
    (0..6)
        .map(|j| format!("tok{k}x{j}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn topic_turn(
    rng: &mut StdRng,
    spec: &StreamSpec,
    k: usize,
    i: usize,
) -> (String, String) {
    let filler_count = k % 4;
    let filler: String = (0..filler_count)
        .map(|_| format!("w{}", rng.gen_range(0..1_000_000)))
        .collect::<Vec<_>>()
        .join(" ");
    let mut user = format!("{} {}", topic_words(k), filler);
    let mut assistant = format!("noted {}", topic_words(k));
    if spec.with_fact_markers && i % 3 == 0 {
        // The same text recurs within a topic, exercising dedupe.
        user.push_str(&format!(" FACT{{topic {k} has a stable detail}}"));
    }
    if spec.with_supersede_markers && i % 11 == 7 {
        assistant.push_str(&format!(" SUPERSEDE{{fact-{:06}}}", 1 + i % 3));
    }
    (user, assistant)
}

fn noise_turn(rng: &mut StdRng, seed: u64, _i: usize) -> (String, String) {
    let words: Vec<String> = (0..8)
        .map(|_| format!("n{seed}q{}", rng.gen_range(0..10_000_000)))
        .collect();
    (words[..4].join(" "), words[4..].join(" "))
}

/// One recurring topic in a structured stream: how many turns it gets and
/// how many unique filler words dilute each of its turns.
///
/// With six topic keywords repeated in both messages, the intra-topic
/// cosine under the hashed encoder is (24+3)/(24+3+filler), so filler
/// picks the similarity level: 0 -> 1.0, 9 -> 0.75, 14 -> 0.66, 22 -> 0.55.
#[derive(Debug, Clone, Copy)]
pub struct TopicSpec {
    pub size: usize,
    pub filler: usize,
}

impl TopicSpec {
    pub fn new(size: usize, filler: usize) -> Self {
        TopicSpec { size, filler }
    }
}

/// A stream with explicit per-topic turn counts, noise padding elsewhere,
/// in a deterministic interleaving.
pub fn structured_stream(seed: u64, n_turns: usize, topics: &[TopicSpec]) -> Vec<InteractionUnit> {
    let mut rng = StdRng::seed_from_u64(seed);
    let total_topic: usize = topics.iter().map(|t| t.size).sum();
    assert!(total_topic <= n_turns);
    // Topic turns spread evenly over the stream, noise fills the gaps.
    let mut slots: Vec<Option<usize>> = vec![None; n_turns];
    for (k, spec) in topics.iter().enumerate() {
        let stride = n_turns.max(1) / spec.size.max(1);
        for j in 0..spec.size {
            let mut pos = (j * stride + k) % n_turns;
            while slots[pos].is_some() {
                pos = (pos + 1) % n_turns;
            }
            slots[pos] = Some(k);
        }
    }

    let mut turns = Vec::with_capacity(n_turns);
    for (i, slot) in slots.iter().enumerate() {
        let (user, assistant) = match slot {
            Some(k) => {
                let spec = &topics[*k];
                let filler: String = (0..spec.filler)
                    .map(|_| format!("w{}", rng.gen_range(0..100_000_000u64)))
                    .collect::<Vec<_>>()
                    .join(" ");
                (
                    format!("{} {filler}", topic_words(*k)),
                    format!("noted {}", topic_words(*k)),
                )
            }
            None => noise_turn(&mut rng, seed, i),
        };
        turns.push(InteractionUnit::new(
            format!("t{i:04}"),
            user,
            assistant,
            minute_ts(i),
        ));
    }
    turns
}

/// The fixed 200-turn stream used by the threshold-sweep acceptance
/// checks: eight fully coherent topics sized 2..9 drive the theta_count
/// trend, two diluted five-turn topics (cosine ~0.66 and ~0.55) drive the
/// theta_sim trend, and the rest is one-off noise.
pub fn sweep_stream() -> Vec<InteractionUnit> {
    let mut topics: Vec<TopicSpec> = (2..=9).map(|size| TopicSpec::new(size, 0)).collect();
    topics.push(TopicSpec::new(5, 14));
    topics.push(TopicSpec::new(5, 22));
    structured_stream(42, 200, &topics)
}

pub fn record_from(conversation_id: &str, turns: Vec<InteractionUnit>) -> ConversationRecord {
    ConversationRecord {
        conversation_id: conversation_id.to_string(),
        turns,
        questions: Vec::new(),
    }
}

pub fn question(id: &str, text: &str) -> Question {
    Question {
        question_id: id.to_string(),
        text: text.to_string(),
        expected: None,
        category: None,
    }
}
