//! Uniform completion interface with token accounting.
//!
//! One remote chat-completions client and a deterministic stub. The stub
//! powers every offline test and cost experiment: it parses the structured
//! blocks that the prompt renderer emits and produces byte-stable outputs,
//! so golden traces and snapshots are reproducible.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::{
    extract_block, extract_markers, extract_section_items, extract_turn_blocks,
};

/// Prompt plus completion token counts for one or more LLM calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        TokenUsage {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

/// What a construction- or query-phase call is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    Merge,
    Consolidate,
    Refine,
    Answer,
}

impl Purpose {
    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::Merge => "merge",
            Purpose::Consolidate => "consolidate",
            Purpose::Refine => "refine",
            Purpose::Answer => "answer",
        }
    }
}

/// A single completion request. Temperature is pinned to 0.0 at
/// construction, so sampling never introduces nondeterminism.
#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub purpose: Purpose,
    pub prompt: String,
    temperature: f32,
}

impl LlmRequest {
    pub fn new(purpose: Purpose, prompt: String) -> Self {
        LlmRequest {
            purpose,
            prompt,
            temperature: 0.0,
        }
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }
}

#[derive(Debug, Clone)]
pub struct LlmResponse {
    pub text: String,
    pub usage: TokenUsage,
}

/// Completion backend. Implementations are reentrant.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse>;
}

/// 4-chars-per-token heuristic used by the stub: a consistent monotone
/// proxy is all the cost comparisons need.
pub fn heuristic_usage(prompt: &str, output: &str) -> TokenUsage {
    TokenUsage {
        prompt_tokens: (prompt.chars().count() as u64).div_ceil(4),
        completion_tokens: (output.chars().count() as u64).div_ceil(4),
    }
}

/// Deterministic offline backend.
///
/// Outputs are pure functions of the prompt:
/// - merge: echoes the existing narrative with `MERGED[turn_id]` appended;
/// - consolidate: one episode whose narrative is the `EPISODE:`-prefixed
///   concatenation of the formatted units;
/// - refine: one fact per `FACT{...}` span found in the unit blocks, plus
///   one supersession directive per `SUPERSEDE{...}` span;
/// - answer: the first item of the semantic context section, or a fixed
///   fallback when that section is empty.
#[derive(Debug, Clone, Default)]
pub struct StubLlm;

impl StubLlm {
    pub fn new() -> Self {
        StubLlm
    }

    fn merge_output(prompt: &str) -> Result<String> {
        let narrative = extract_block(prompt, "narrative").ok_or_else(|| {
            Error::MalformedLlmOutput("stub merge prompt is missing the narrative block".into())
        })?;
        let turns = extract_turn_blocks(prompt);
        let turn_id = turns
            .last()
            .map(|(id, _)| id.clone())
            .ok_or_else(|| {
                Error::MalformedLlmOutput("stub merge prompt is missing the turn block".into())
            })?;
        let merged = format!("{narrative}\nMERGED[{turn_id}]");
        Ok(serde_json::json!({ "narrative": merged }).to_string())
    }

    fn consolidate_output(prompt: &str) -> Result<String> {
        let turns = extract_turn_blocks(prompt);
        if turns.is_empty() {
            return Err(Error::MalformedLlmOutput(
                "stub consolidation prompt has no turn blocks".into(),
            ));
        }
        let ids: Vec<&str> = turns.iter().map(|(id, _)| id.as_str()).collect();
        let body: Vec<&str> = turns.iter().map(|(_, text)| text.as_str()).collect();
        let narrative = format!("EPISODE:\n{}", body.join("\n"));
        let title = format!("Recurring topic ({} turns from {})", ids.len(), ids[0]);
        let episodes = serde_json::json!([{
            "title": title,
            "narrative": narrative,
            "source_turn_ids": ids,
        }]);
        Ok(episodes.to_string())
    }

    fn refine_output(prompt: &str) -> String {
        let mut facts = Vec::new();
        let mut supersedes = Vec::new();
        for (turn_id, body) in extract_turn_blocks(prompt) {
            for span in extract_markers(&body, "FACT") {
                facts.push(serde_json::json!({
                    "text": span,
                    "source_turn_ids": [turn_id],
                }));
            }
            for span in extract_markers(&body, "SUPERSEDE") {
                supersedes.push(span);
            }
        }
        serde_json::json!({ "facts": facts, "supersedes": supersedes }).to_string()
    }

    fn answer_output(prompt: &str) -> String {
        let items = extract_section_items(prompt, "semantic");
        match items.into_iter().next() {
            Some(top) => top,
            None => "no relevant memory".to_string(),
        }
    }
}

impl LlmBackend for StubLlm {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse> {
        if req.prompt.is_empty() {
            return Err(Error::LlmFailure("empty prompt".into()));
        }
        let text = match req.purpose {
            Purpose::Merge => Self::merge_output(&req.prompt)?,
            Purpose::Consolidate => Self::consolidate_output(&req.prompt)?,
            Purpose::Refine => Self::refine_output(&req.prompt),
            Purpose::Answer => Self::answer_output(&req.prompt),
        };
        let usage = heuristic_usage(&req.prompt, &text);
        Ok(LlmResponse { text, usage })
    }
}

/// Retry policy for the remote backend: `max_attempts` tries with
/// exponential backoff starting at `base_backoff_ms` (1s/2s/4s by default).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 3,
            base_backoff_ms: 1000,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f32,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct RemoteLlm {
    model_name: String,
    endpoint_url: String,
    api_key: Option<String>,
    retry: RetryConfig,
    client: reqwest::blocking::Client,
}

impl RemoteLlm {
    pub fn new(model_name: String, endpoint_url: String, retry: RetryConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::RemoteUnavailable(e.to_string()))?;
        Ok(RemoteLlm {
            model_name,
            endpoint_url: endpoint_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(crate::embedding::API_KEY_ENV).ok(),
            retry,
            client,
        })
    }

    fn attempt(&self, req: &LlmRequest) -> Result<LlmResponse> {
        let url = format!("{}/chat/completions", self.endpoint_url);
        let body = ChatRequest {
            model: &self.model_name,
            temperature: req.temperature(),
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
        };
        let mut http = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout(Duration::from_secs(120))
            } else {
                Error::RemoteUnavailable(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(Error::RemoteUnavailable(format!(
                "{url} returned {}",
                resp.status()
            )));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| Error::RemoteUnavailable(format!("bad chat payload: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::RemoteUnavailable("chat response had no content".into()))?;
        let usage = parsed
            .usage
            .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
            .unwrap_or_else(|| heuristic_usage(&req.prompt, &text));
        Ok(LlmResponse { text, usage })
    }
}

impl LlmBackend for RemoteLlm {
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse> {
        if req.prompt.is_empty() {
            return Err(Error::LlmFailure("empty prompt".into()));
        }
        let mut last_err = None;
        for attempt in 0..self.retry.max_attempts {
            match self.attempt(req) {
                Ok(resp) => return Ok(resp),
                Err(e @ (Error::RemoteUnavailable(_) | Error::Timeout(_))) => {
                    log::warn!(
                        "{} call attempt {}/{} failed: {e}",
                        req.purpose.as_str(),
                        attempt + 1,
                        self.retry.max_attempts
                    );
                    last_err = Some(e);
                    if attempt + 1 < self.retry.max_attempts {
                        let delay = self.retry.base_backoff_ms << attempt;
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::LlmFailure(format!(
            "{} call failed after {} attempts: {}",
            req.purpose.as_str(),
            self.retry.max_attempts,
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heuristic_usage_is_ceil_division() {
        // Independent check: 400/4 = 100, 80/4 = 20.
        let prompt = "x".repeat(400);
        let output = "y".repeat(80);
        assert_eq!(heuristic_usage(&prompt, &output), TokenUsage::new(100, 20));
        // Non-multiples round up.
        assert_eq!(heuristic_usage("abcde", "z"), TokenUsage::new(2, 1));
    }

    #[test]
    fn stub_is_deterministic() {
        let stub = StubLlm::new();
        let req = LlmRequest::new(
            Purpose::Refine,
            "<<turn id=t1>>\nhello FACT{water is wet} world\n<</turn>>".into(),
        );
        let a = stub.complete(&req).unwrap();
        let b = stub.complete(&req).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.usage, b.usage);
    }

    #[test]
    fn stub_merge_appends_marker() {
        let stub = StubLlm::new();
        let prompt = "<<narrative>>\nThe user is planning a trip.\n<</narrative>>\n\
                      <<turn id=t7>>\n[ts] USER: more\nASSISTANT: ok\n<</turn>>";
        let resp = stub
            .complete(&LlmRequest::new(Purpose::Merge, prompt.into()))
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&resp.text).unwrap();
        assert_eq!(
            v["narrative"].as_str().unwrap(),
            "The user is planning a trip.\nMERGED[t7]"
        );
    }

    #[test]
    fn stub_consolidate_emits_one_episode_over_all_turns() {
        let stub = StubLlm::new();
        let prompt = "<<turn id=a>>\nline a\n<</turn>>\n<<turn id=b>>\nline b\n<</turn>>";
        let resp = stub
            .complete(&LlmRequest::new(Purpose::Consolidate, prompt.into()))
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&resp.text).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 1);
        assert_eq!(arr[0]["narrative"].as_str().unwrap(), "EPISODE:\nline a\nline b");
        assert_eq!(
            arr[0]["source_turn_ids"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_str().unwrap())
                .collect::<Vec<_>>(),
            vec!["a", "b"]
        );
    }

    #[test]
    fn stub_refine_extracts_fact_markers_in_order() {
        let stub = StubLlm::new();
        let prompt = "<<turn id=t1>>\nFACT{first} and FACT{second}\n<</turn>>\n\
                      <<turn id=t2>>\nSUPERSEDE{fact-000001} FACT{third}\n<</turn>>";
        let resp = stub
            .complete(&LlmRequest::new(Purpose::Refine, prompt.into()))
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&resp.text).unwrap();
        let facts: Vec<&str> = v["facts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["text"].as_str().unwrap())
            .collect();
        assert_eq!(facts, vec!["first", "second", "third"]);
        assert_eq!(v["supersedes"][0].as_str().unwrap(), "fact-000001");
    }

    #[test]
    fn stub_answer_echoes_top_semantic_item_or_fallback() {
        let stub = StubLlm::new();
        let prompt = "<<section semantic>>\n<<item>>Mia is allergic to peanuts<</item>>\n\
                      <<item>>other<</item>>\n<</section>>\nQ: what?";
        let resp = stub
            .complete(&LlmRequest::new(Purpose::Answer, prompt.into()))
            .unwrap();
        assert_eq!(resp.text, "Mia is allergic to peanuts");

        let empty = "<<section semantic>>\n(none)\n<</section>>\nQ: what?";
        let resp = stub
            .complete(&LlmRequest::new(Purpose::Answer, empty.into()))
            .unwrap();
        assert_eq!(resp.text, "no relevant memory");
    }

    #[test]
    fn temperature_is_pinned_to_zero() {
        let req = LlmRequest::new(Purpose::Answer, "q".into());
        assert_eq!(req.temperature(), 0.0);
    }
}
