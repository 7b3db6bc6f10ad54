//! Dataset loaders: native JSONL plus the two benchmark dump shapes.
//!
//! Every loader normalizes into [`ConversationRecord`]s whose turns are
//! user–assistant pairs in stream order. Human–human dialogues (LoCoMo
//! style) map the two speakers onto the user/assistant slots by order of
//! first appearance, with each message prefixed by its speaker's name so
//! the true identities stay visible to the LLM.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::turn::{InteractionUnit, Timestamp};

/// Supported input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    NativeJsonl,
    Locomo,
    LongMemEval,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native-jsonl" => Ok(DatasetFormat::NativeJsonl),
            "locomo" => Ok(DatasetFormat::Locomo),
            "longmemeval" => Ok(DatasetFormat::LongMemEval),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// A question attached to a conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// One conversation: timestamp-ordered turns plus its question session.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationRecord {
    pub conversation_id: String,
    pub turns: Vec<InteractionUnit>,
    pub questions: Vec<Question>,
}

/// Load and normalize a dataset file.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<ConversationRecord>> {
    match format {
        DatasetFormat::NativeJsonl => load_native(path),
        DatasetFormat::Locomo => load_locomo(path),
        DatasetFormat::LongMemEval => load_longmemeval(path),
    }
}

// --- native JSONL -----------------------------------------------------

#[derive(Deserialize)]
struct NativeTurnLine {
    conversation_id: String,
    #[serde(flatten)]
    unit: InteractionUnit,
}

#[derive(Deserialize)]
struct NativeQuestionLine {
    conversation_id: String,
    #[serde(flatten)]
    question: Question,
}

fn load_native(path: &Path) -> Result<Vec<ConversationRecord>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut order: Vec<String> = Vec::new();
    let mut by_conv: HashMap<String, Vec<InteractionUnit>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: NativeTurnLine = serde_json::from_str(&line).map_err(|e| {
            Error::parse(format!("{}:{}", path.display(), lineno + 1), e.to_string())
        })?;
        if !by_conv.contains_key(&parsed.conversation_id) {
            order.push(parsed.conversation_id.clone());
        }
        by_conv
            .entry(parsed.conversation_id)
            .or_default()
            .push(parsed.unit);
    }

    // Questions live in a sibling file: <stem>.questions.jsonl.
    let mut questions: HashMap<String, Vec<Question>> = HashMap::new();
    let qpath = questions_path(path);
    if qpath.exists() {
        let file = File::open(&qpath)?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: NativeQuestionLine = serde_json::from_str(&line).map_err(|e| {
                Error::parse(format!("{}:{}", qpath.display(), lineno + 1), e.to_string())
            })?;
            questions
                .entry(parsed.conversation_id)
                .or_default()
                .push(parsed.question);
        }
    }

    Ok(order
        .into_iter()
        .map(|conversation_id| {
            let turns = by_conv.remove(&conversation_id).unwrap_or_default();
            let questions = questions.remove(&conversation_id).unwrap_or_default();
            ConversationRecord {
                conversation_id,
                turns,
                questions,
            }
        })
        .collect())
}

/// `data/convs.jsonl` -> `data/convs.questions.jsonl`.
pub fn questions_path(dataset: &Path) -> std::path::PathBuf {
    let stem = dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset.with_file_name(format!("{stem}.questions.jsonl"))
}

// --- LoCoMo-shaped dumps ----------------------------------------------

fn load_locomo(path: &Path) -> Result<Vec<ConversationRecord>> {
    let text = std::fs::read_to_string(path)?;
    let samples: Vec<Value> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;

    let mut records = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let loc = format!("{}: record {}", path.display(), i);
        let conversation_id = sample
            .get("sample_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("locomo-{i}"));
        let conv = sample
            .get("conversation")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::parse(&loc, "missing conversation object"))?;
        let speaker_a = conv
            .get("speaker_a")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(&loc, "missing speaker_a"))?;
        let speaker_b = conv
            .get("speaker_b")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(&loc, "missing speaker_b"))?;

        let mut turns = Vec::new();
        for si in 1.. {
            let Some(messages) = conv.get(&format!("session_{si}")).and_then(Value::as_array)
            else {
                break;
            };
            let ts_raw = conv
                .get(&format!("session_{si}_date_time"))
                .and_then(Value::as_str)
                .ok_or_else(|| Error::parse(&loc, format!("missing session_{si}_date_time")))?;
            let timestamp = Timestamp::parse(ts_raw)
                .map_err(|e| Error::parse(&loc, format!("session_{si}: {e}")))?;
            pair_speakers(
                &mut turns,
                messages,
                speaker_a,
                speaker_b,
                timestamp,
                si,
                &loc,
            )?;
        }

        let mut questions = Vec::new();
        if let Some(qa) = sample.get("qa").and_then(Value::as_array) {
            for (qi, q) in qa.iter().enumerate() {
                let text = q
                    .get("question")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::parse(&loc, format!("qa {qi}: missing question")))?;
                questions.push(Question {
                    question_id: format!("{conversation_id}-q{qi}"),
                    text: text.to_string(),
                    expected: q.get("answer").map(value_to_text),
                    category: q.get("category").map(value_to_text),
                });
            }
        }

        records.push(ConversationRecord {
            conversation_id,
            turns,
            questions,
        });
    }
    Ok(records)
}

fn value_to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Pair a two-speaker message list into user/assistant units. The first
/// speaker to appear takes the user slot; messages keep their speaker name
/// as a prefix. Consecutive messages from one speaker become units with
/// the other slot empty.
fn pair_speakers(
    turns: &mut Vec<InteractionUnit>,
    messages: &[Value],
    speaker_a: &str,
    speaker_b: &str,
    timestamp: Timestamp,
    session_index: usize,
    loc: &str,
) -> Result<()> {
    let mut user_slot: Option<String> = None;
    let mut pending_user: Option<String> = None;
    let mut unit_index = 0usize;

    let flush =
        |turns: &mut Vec<InteractionUnit>, user: String, assistant: String, idx: &mut usize| {
            let unit = InteractionUnit::new(
                format!("s{session_index}-t{idx}", idx = *idx),
                user,
                assistant,
                timestamp,
            )
            .with_session(format!("session_{session_index}"));
            *idx += 1;
            turns.push(unit);
        };

    for (mi, msg) in messages.iter().enumerate() {
        let speaker = msg
            .get("speaker")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(loc, format!("session {session_index} message {mi}: missing speaker")))?;
        let text = msg
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(loc, format!("session {session_index} message {mi}: missing text")))?;
        if speaker != speaker_a && speaker != speaker_b {
            return Err(Error::parse(
                loc,
                format!("session {session_index} message {mi}: unknown speaker {speaker:?}"),
            ));
        }
        let prefixed = format!("{speaker}: {text}");
        let is_user_side = match &user_slot {
            Some(name) => speaker == name,
            None => {
                user_slot = Some(speaker.to_string());
                true
            }
        };
        if is_user_side {
            if let Some(prev) = pending_user.take() {
                flush(turns, prev, String::new(), &mut unit_index);
            }
            pending_user = Some(prefixed);
        } else {
            let user = pending_user.take().unwrap_or_default();
            flush(turns, user, prefixed, &mut unit_index);
        }
    }
    if let Some(prev) = pending_user.take() {
        flush(turns, prev, String::new(), &mut unit_index);
    }
    Ok(())
}

// --- LongMemEval-shaped dumps -------------------------------------------

#[derive(Deserialize)]
struct LongMemEvalEntry {
    question_id: String,
    #[serde(default)]
    question_type: Option<String>,
    question: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    haystack_dates: Vec<String>,
    haystack_sessions: Vec<Vec<LongMemEvalTurn>>,
}

#[derive(Deserialize)]
struct LongMemEvalTurn {
    role: String,
    content: String,
}

fn load_longmemeval(path: &Path) -> Result<Vec<ConversationRecord>> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<LongMemEvalEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;

    let mut records = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let loc = format!("{}: record {}", path.display(), i);
        let mut turns = Vec::new();
        for (si, session) in entry.haystack_sessions.iter().enumerate() {
            let timestamp = match entry.haystack_dates.get(si) {
                Some(raw) => Timestamp::parse(raw)
                    .map_err(|e| Error::parse(&loc, format!("session {si}: {e}")))?,
                None => {
                    return Err(Error::parse(
                        &loc,
                        format!("session {si} has no matching haystack date"),
                    ))
                }
            };
            let mut pending_user: Option<String> = None;
            let mut ti = 0usize;
            let flush = |turns: &mut Vec<InteractionUnit>, user: String, assistant: String, ti: &mut usize| {
                let unit = InteractionUnit::new(
                    format!("s{si}-t{ti}"),
                    user,
                    assistant,
                    timestamp,
                )
                .with_session(format!("session_{si}"));
                *ti += 1;
                turns.push(unit);
            };
            for msg in session {
                match msg.role.as_str() {
                    "user" => {
                        if let Some(prev) = pending_user.take() {
                            flush(&mut turns, prev, String::new(), &mut ti);
                        }
                        pending_user = Some(msg.content.clone());
                    }
                    "assistant" => {
                        let user = pending_user.take().unwrap_or_default();
                        flush(&mut turns, user, msg.content.clone(), &mut ti);
                    }
                    other => {
                        return Err(Error::parse(
                            &loc,
                            format!("session {si}: unknown role {other:?}"),
                        ))
                    }
                }
            }
            if let Some(prev) = pending_user.take() {
                flush(&mut turns, prev, String::new(), &mut ti);
            }
        }
        // Haystack sessions are not guaranteed date-sorted in the dumps.
        turns.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.turn_id.cmp(&b.turn_id)));

        records.push(ConversationRecord {
            conversation_id: entry.question_id.clone(),
            turns,
            questions: vec![Question {
                question_id: entry.question_id,
                text: entry.question,
                expected: entry.answer,
                category: entry.question_type,
            }],
        });
    }
    Ok(records)
}
