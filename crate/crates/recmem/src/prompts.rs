//! Prompt templates and rendering.
//!
//! Templates are plain-text files (see `templates/`) with `{{name}}`
//! placeholders, loadable from a directory at runtime so deployments can
//! swap wording without rebuilding. Dynamic content (turns, narratives,
//! facts, context sections) is rendered inside `<<...>>` delimiter blocks;
//! the deterministic stub backend parses those same blocks, so offline
//! runs stay reproducible as long as custom templates keep the block
//! placeholders.

use std::fs;
use std::path::Path;

use crate::episodic::fmt_unit;
use crate::turn::InteractionUnit;

const DEFAULT_MERGE: &str = include_str!("../templates/merge.txt");
const DEFAULT_CONSOLIDATE: &str = include_str!("../templates/consolidate.txt");
const DEFAULT_REFINE: &str = include_str!("../templates/refine.txt");
const DEFAULT_REFINE_DIRECT: &str = include_str!("../templates/refine_direct.txt");
const DEFAULT_ANSWER: &str = include_str!("../templates/answer.txt");

/// The five prompt templates used by the engine.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    merge: String,
    consolidate: String,
    refine: String,
    refine_direct: String,
    answer: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            merge: DEFAULT_MERGE.to_string(),
            consolidate: DEFAULT_CONSOLIDATE.to_string(),
            refine: DEFAULT_REFINE.to_string(),
            refine_direct: DEFAULT_REFINE_DIRECT.to_string(),
            answer: DEFAULT_ANSWER.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Load templates from a directory, falling back to the built-in text
    /// for any file that is absent.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let read = |name: &str, fallback: &str| -> std::io::Result<String> {
            let path = dir.join(name);
            if path.exists() {
                fs::read_to_string(path)
            } else {
                Ok(fallback.to_string())
            }
        };
        Ok(PromptTemplates {
            merge: read("merge.txt", DEFAULT_MERGE)?,
            consolidate: read("consolidate.txt", DEFAULT_CONSOLIDATE)?,
            refine: read("refine.txt", DEFAULT_REFINE)?,
            refine_direct: read("refine_direct.txt", DEFAULT_REFINE_DIRECT)?,
            answer: read("answer.txt", DEFAULT_ANSWER)?,
        })
    }

    pub fn render_merge(&self, title: &str, narrative: &str, unit: &InteractionUnit) -> String {
        self.merge
            .replace("{{title}}", title)
            .replace("{{narrative}}", &narrative_block(narrative))
            .replace("{{turn}}", &turn_block(unit))
    }

    /// Units must already be sorted by (timestamp, turn_id).
    pub fn render_consolidate(&self, units: &[InteractionUnit]) -> String {
        self.consolidate.replace("{{turns}}", &turn_blocks(units))
    }

    /// `episode` is `(title, narrative)`; pass `None` for the
    /// direct-extraction ablation, which drops the episode reference and
    /// the refinement-specific guidance from the prompt.
    pub fn render_refine(
        &self,
        episode: Option<(&str, &str)>,
        units: &[InteractionUnit],
        context_facts: &[(String, String)],
    ) -> String {
        let facts = if context_facts.is_empty() {
            "(none)".to_string()
        } else {
            context_facts
                .iter()
                .map(|(id, text)| format!("<<fact id={id}>>{text}<</fact>>"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        match episode {
            Some((title, narrative)) => self
                .refine
                .replace("{{title}}", title)
                .replace("{{narrative}}", &narrative_block(narrative))
                .replace("{{turns}}", &turn_blocks(units))
                .replace("{{facts}}", &facts),
            None => self
                .refine_direct
                .replace("{{turns}}", &turn_blocks(units))
                .replace("{{facts}}", &facts),
        }
    }

    /// Sections are already capped and sorted by score descending; each
    /// entry is the display text for one retrieved item.
    pub fn render_answer(
        &self,
        semantic: &[String],
        episodic: &[String],
        subconscious: &[String],
        question: &str,
    ) -> String {
        self.answer
            .replace("{{semantic_items}}", &items_or_none(semantic))
            .replace("{{episodic_items}}", &items_or_none(episodic))
            .replace("{{subconscious_items}}", &items_or_none(subconscious))
            .replace("{{question}}", question)
    }
}

fn items_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items
            .iter()
            .map(|t| format!("<<item>>{t}<</item>>"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn narrative_block(narrative: &str) -> String {
    format!("<<narrative>>\n{narrative}\n<</narrative>>")
}

fn turn_block(unit: &InteractionUnit) -> String {
    format!(
        "<<turn id={}>>\n{}\n<</turn>>",
        unit.turn_id,
        fmt_unit(unit)
    )
}

fn turn_blocks(units: &[InteractionUnit]) -> String {
    units.iter().map(turn_block).collect::<Vec<_>>().join("\n")
}

/// Extract `(id, body)` for each `<<turn id=...>> ... <</turn>>` block, in
/// prompt order.
pub(crate) fn extract_turn_blocks(prompt: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(start) = rest.find("<<turn id=") {
        let after = &rest[start + "<<turn id=".len()..];
        let Some(id_end) = after.find(">>") else { break };
        let id = after[..id_end].trim().to_string();
        let body_start = &after[id_end + 2..];
        let Some(close) = body_start.find("<</turn>>") else { break };
        let body = body_start[..close].trim_matches('\n').to_string();
        out.push((id, body));
        rest = &body_start[close + "<</turn>>".len()..];
    }
    out
}

/// Extract the body of a `<<name>> ... <</name>>` block.
pub(crate) fn extract_block(prompt: &str, name: &str) -> Option<String> {
    let open = format!("<<{name}>>");
    let close = format!("<</{name}>>");
    let start = prompt.find(&open)? + open.len();
    let end = prompt[start..].find(&close)? + start;
    Some(prompt[start..end].trim_matches('\n').to_string())
}

/// Extract `<<item>>...<</item>>` texts inside `<<section name>>`.
pub(crate) fn extract_section_items(prompt: &str, name: &str) -> Vec<String> {
    let open = format!("<<section {name}>>");
    let Some(start) = prompt.find(&open) else {
        return Vec::new();
    };
    let body_start = start + open.len();
    let Some(end) = prompt[body_start..].find("<</section>>") else {
        return Vec::new();
    };
    let body = &prompt[body_start..body_start + end];
    let mut items = Vec::new();
    let mut rest = body;
    while let Some(i) = rest.find("<<item>>") {
        let after = &rest[i + "<<item>>".len()..];
        let Some(j) = after.find("<</item>>") else { break };
        items.push(after[..j].to_string());
        rest = &after[j + "<</item>>".len()..];
    }
    items
}

/// Extract the contents of `NAME{...}` spans, in order of appearance.
pub(crate) fn extract_markers(text: &str, name: &str) -> Vec<String> {
    let tag = format!("{name}{{");
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find(&tag) {
        let after = &rest[i + tag.len()..];
        let Some(j) = after.find('}') else { break };
        let span = after[..j].trim();
        if !span.is_empty() {
            out.push(span.to_string());
        }
        rest = &after[j + 1..];
    }
    out
}
