//! Textual prompt enhancement: combine the query, the resolved answer and
//! retrieved background knowledge into the prompt the segmenter receives.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{TextGenerator, WebSearcher};
use crate::error::{Error, Result};
use crate::irag::ResolvedAnswer;
use crate::text;

/// The two-stage baseline's prompt. Every enhanced prompt ends with exactly
/// this sentence, so prompt ablations differ only in the added context.
pub const BASELINE_TEMPLATE: &str = "Please segment {answer} in this image.";

/// Default enhanced-prompt template. The bracketed group is emitted only when
/// every placeholder inside it is non-empty.
pub const DEFAULT_TEMPLATE: &str =
    "The answer to '{query}' is {answer}. [Background: {background}. ]Please segment {answer} in this image.";

/// Background summarization prompt.
pub const SUMMARY_TEMPLATE: &str = "Summarize the introduction of the entity below in at most {max_chars} characters.
Entity: {answer}
Text: {text}";

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]*)\}").expect("valid regex"));

/// The baseline prompt for `answer`.
pub fn baseline_prompt(answer: &str) -> String {
    BASELINE_TEMPLATE.replace("{answer}", answer)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundKnowledge {
    pub text: String,
    pub source_url: Option<String>,
}

impl BackgroundKnowledge {
    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancedPrompt {
    pub text: String,
    pub answer: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Literal(String),
    Slot(String),
    Optional(Vec<Part>),
}

/// A prompt template with `{query}`, `{answer}` and `{background}`
/// placeholders and optional `[...]` groups.
///
/// Substitution is single-pass: values are inserted verbatim and never
/// re-expanded, so answers containing braces or quotes are safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    source: String,
    parts: Vec<Part>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

fn parse_flat(segment: &str) -> Result<Vec<Part>> {
    let mut parts = Vec::new();
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(segment) {
        let whole = caps.get(0).expect("match");
        let name = &caps[1];
        if !matches!(name, "query" | "answer" | "background") {
            return Err(Error::config(format!("unknown template placeholder `{{{name}}}`")));
        }
        if whole.start() > last {
            parts.push(Part::Literal(segment[last..whole.start()].to_string()));
        }
        parts.push(Part::Slot(name.to_string()));
        last = whole.end();
    }
    if last < segment.len() {
        parts.push(Part::Literal(segment[last..].to_string()));
    }
    Ok(parts)
}

impl PromptTemplate {
    /// Parse and validate a template. It must end its outer text with the
    /// baseline directive sentence.
    pub fn parse(source: &str) -> Result<Self> {
        let mut parts = Vec::new();
        let mut outer = String::new();
        let mut rest = source;
        while let Some(open) = rest.find(['[', ']']) {
            if rest.as_bytes()[open] == b']' {
                return Err(Error::config("template has an unmatched `]`"));
            }
            let close = rest[open + 1..]
                .find(['[', ']'])
                .map(|i| i + open + 1)
                .filter(|&i| rest.as_bytes()[i] == b']')
                .ok_or_else(|| Error::config("template optional groups must be closed and not nested"))?;
            outer.push_str(&rest[..open]);
            parts.extend(parse_flat(&rest[..open])?);
            parts.push(Part::Optional(parse_flat(&rest[open + 1..close])?));
            rest = &rest[close + 1..];
        }
        outer.push_str(rest);
        parts.extend(parse_flat(rest)?);
        if !outer.trim_end().ends_with(BASELINE_TEMPLATE) {
            return Err(Error::config(format!(
                "template must end with the directive `{BASELINE_TEMPLATE}`"
            )));
        }
        Ok(Self {
            source: source.to_string(),
            parts,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn render(&self, query: &str, answer: &str, background: &str) -> String {
        let value = |name: &str| match name {
            "query" => query,
            "answer" => answer,
            _ => background,
        };
        let mut out = String::new();
        for part in &self.parts {
            match part {
                Part::Literal(s) => out.push_str(s),
                Part::Slot(name) => out.push_str(value(name)),
                Part::Optional(inner) => {
                    let filled = inner.iter().all(|p| match p {
                        Part::Slot(name) => !value(name).is_empty(),
                        _ => true,
                    });
                    if filled {
                        for p in inner {
                            match p {
                                Part::Literal(s) => out.push_str(s),
                                Part::Slot(name) => out.push_str(value(name)),
                                Part::Optional(_) => unreachable!("groups do not nest"),
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Search for the answer's introduction and summarize the top result within
/// `max_chars`, cut at a sentence boundary.
///
/// No document yields empty background. If summarization fails, the document
/// text itself is truncated instead.
pub fn fetch_background(
    answer: &ResolvedAnswer,
    searcher: &dyn WebSearcher,
    llm: &dyn TextGenerator,
    max_chars: usize,
) -> BackgroundKnowledge {
    let query = format!("{} introduction", answer.text);
    let doc = match searcher.search(&query, 1) {
        Ok(docs) => docs.into_iter().next(),
        Err(e) => {
            log::warn!("background search for `{}` failed: {e}", answer.text);
            None
        }
    };
    let Some(doc) = doc else {
        return BackgroundKnowledge::default();
    };
    let body = text::strip_html(&doc.body);
    let source = if body.is_empty() { doc.snippet.trim() } else { body.as_str() };
    if source.is_empty() {
        return BackgroundKnowledge::default();
    }
    let prompt = SUMMARY_TEMPLATE
        .replace("{max_chars}", &max_chars.to_string())
        .replace("{answer}", &answer.text)
        .replace("{text}", source);
    let summary = llm.generate(&prompt, max_chars.max(1) * 2).unwrap_or_else(|e| {
        log::warn!("background summary for `{}` failed: {e}", answer.text);
        source.to_string()
    });
    let text = text::truncate_at_sentence(&summary.split_whitespace().collect::<Vec<_>>().join(" "), max_chars);
    BackgroundKnowledge {
        source_url: (!text.is_empty()).then_some(doc.url),
        text,
    }
}

/// Instantiate `template` for this query, answer and background.
pub fn build_prompt_with(
    template: &PromptTemplate,
    query: &str,
    answer: &ResolvedAnswer,
    background: &BackgroundKnowledge,
) -> Result<EnhancedPrompt> {
    if answer.text.trim().is_empty() {
        return Err(Error::contract("cannot build a prompt for an empty answer"));
    }
    let background = background.text.trim().trim_end_matches('.').trim_end();
    Ok(EnhancedPrompt {
        text: template.render(query, &answer.text, background),
        answer: answer.text.clone(),
        query: query.to_string(),
    })
}

/// Instantiate the default template.
pub fn build_prompt(query: &str, answer: &ResolvedAnswer, background: &BackgroundKnowledge) -> Result<EnhancedPrompt> {
    build_prompt_with(&PromptTemplate::default(), query, answer, background)
}
