//! The retrieval gate: decide per query whether internet retrieval is needed.
//!
//! A cheap ordered rule tier runs first; only queries it leaves ambiguous reach
//! the language model. Every failure path answers "retrieve": a wrong skip
//! cannot be recovered downstream, a wrong retrieval only costs latency.

use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use chrono::{Datelike, NaiveDate};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::backends::TextGenerator;
use crate::error::{Error, Result};

/// Binary classification prompt for the semantic tier.
pub const SEMANTIC_TEMPLATE: &str = "Decide whether answering the query needs information published after the knowledge cutoff.
Knowledge cutoff: {cutoff}
Query: {query}
Answer with exactly one word: RETRIEVE or SKIP.";

/// The ruleset shipped with the crate, in the `verdict<TAB>pattern` file format.
pub const DEFAULT_RULES: &str = "\
# temporal cues
retrieve\t\\b(current|latest|newest|today|recent|this\\s+(week|month|year))\\b
# explicit year later than the knowledge cutoff
retrieve\t@year_after_cutoff
# purely visual references with no proper noun
skip\t@spatial_without_proper_noun
";

/// Knowledge cutoff of the default backbone (December 2023).
pub fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date")
}

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(1[89]\d\d|2\d\d\d)\b").expect("valid regex"));

const SPATIAL_WORDS: [&str; 30] = [
    "left", "right", "top", "bottom", "above", "below", "behind", "beside", "near", "next", "under", "over",
    "front", "middle", "center", "corner", "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown",
    "black", "white", "gray", "grey", "between", "beneath",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Retrieve,
    Skip,
}

/// Outcome of the rule tier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Screen {
    /// A rule fired; carries its verdict and identifier.
    Matched(Verdict, String),
    Ambiguous,
}

#[derive(Debug, Clone)]
enum Pattern {
    Regex(Regex),
    YearAfterCutoff,
    SpatialWithoutProperNoun,
}

#[derive(Debug, Clone)]
pub struct Rule {
    id: String,
    verdict: Verdict,
    pattern: Pattern,
}

impl Rule {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    fn matches(&self, query: &str, cutoff: NaiveDate) -> bool {
        match &self.pattern {
            Pattern::Regex(re) => re.is_match(query),
            Pattern::YearAfterCutoff => YEAR
                .find_iter(query)
                .filter_map(|m| m.as_str().parse::<i32>().ok())
                .any(|year| year > cutoff.year()),
            Pattern::SpatialWithoutProperNoun => {
                let words: Vec<&str> = query
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|w| !w.is_empty())
                    .collect();
                let spatial = words
                    .iter()
                    .any(|w| SPATIAL_WORDS.contains(&w.to_lowercase().as_str()));
                // any capitalized word counts as a potential proper noun,
                // including the first word of a sentence
                let proper = words.iter().any(|w| w.chars().next().is_some_and(char::is_uppercase));
                spatial && !proper
            }
        }
    }
}

/// Ordered, case-insensitive rules; the first match wins.
#[derive(Debug, Clone)]
pub struct Ruleset {
    rules: Vec<Rule>,
}

impl Default for Ruleset {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("default ruleset is valid")
    }
}

impl Ruleset {
    /// Parse the `verdict<TAB>pattern` format. Blank lines and `#` comments are
    /// ignored; `@year_after_cutoff` and `@spatial_without_proper_noun` name the
    /// built-in predicates. Every pattern is compiled here, never at query time.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let (verdict, pattern) = trimmed
                .split_once('\t')
                .ok_or_else(|| Error::config(format!("rule line {line_no}: expected `verdict<TAB>pattern`")))?;
            let verdict = match verdict.trim().to_ascii_lowercase().as_str() {
                "retrieve" => Verdict::Retrieve,
                "skip" => Verdict::Skip,
                other => return Err(Error::config(format!("rule line {line_no}: unknown verdict `{other}`"))),
            };
            let pattern_text = pattern.trim();
            let pattern = match pattern_text {
                "" => return Err(Error::config(format!("rule line {line_no}: empty pattern"))),
                "@year_after_cutoff" => Pattern::YearAfterCutoff,
                "@spatial_without_proper_noun" => Pattern::SpatialWithoutProperNoun,
                p if p.starts_with('@') => {
                    return Err(Error::config(format!("rule line {line_no}: unknown built-in `{p}`")))
                }
                p => Pattern::Regex(
                    RegexBuilder::new(p)
                        .case_insensitive(true)
                        .build()
                        .map_err(|e| Error::config(format!("rule line {line_no}: {e}")))?,
                ),
            };
            rules.push(Rule {
                id: format!("{line_no}:{pattern_text}"),
                verdict,
                pattern,
            });
        }
        if rules.is_empty() {
            return Err(Error::config("ruleset has no rules"));
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
}

/// Tier that produced a decision. `Config` covers runs where the gate is
/// disabled and retrieval is forced on or off by configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Rule,
    Semantic,
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalDecision {
    pub retrieve: bool,
    pub tier: Tier,
    /// Present exactly when `tier` is `Rule`.
    pub matched_rule: Option<String>,
}

impl RetrievalDecision {
    pub fn forced(retrieve: bool) -> Self {
        Self {
            retrieve,
            tier: Tier::Config,
            matched_rule: None,
        }
    }
}

impl fmt::Display for RetrievalDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.retrieve { "retrieve" } else { "skip" };
        match &self.matched_rule {
            Some(rule) => write!(f, "{verdict} (rule `{rule}`)"),
            None => write!(f, "{verdict} ({:?} tier)", self.tier),
        }
    }
}

/// Run the rule tier: the first matching rule decides, otherwise ambiguous.
pub fn rule_screen(query: &str, ruleset: &Ruleset, cutoff: NaiveDate) -> Screen {
    ruleset
        .rules
        .iter()
        .find(|r| r.matches(query, cutoff))
        .map_or(Screen::Ambiguous, |r| Screen::Matched(r.verdict, r.id.clone()))
}

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(RETRIEVE|SKIP)\b").expect("valid regex"));

/// Ask the language model; the first RETRIEVE/SKIP token wins. Unparseable
/// output and port failures both answer retrieve.
pub fn semantic_classify(query: &str, llm: &dyn TextGenerator, cutoff: NaiveDate) -> Verdict {
    let prompt = SEMANTIC_TEMPLATE
        .replace("{cutoff}", &cutoff.format("%Y-%m-%d").to_string())
        .replace("{query}", query);
    match llm.generate(&prompt, 64) {
        Ok(reply) => match TOKEN.find(&reply).map(|m| m.as_str()) {
            Some("SKIP") => Verdict::Skip,
            _ => Verdict::Retrieve,
        },
        Err(e) => {
            log::warn!("retrieval gate falling back to retrieve: {e}");
            Verdict::Retrieve
        }
    }
}

/// Two-tier decision; the language model is consulted only when the rule tier
/// is inconclusive.
pub fn decide(query: &str, ruleset: &Ruleset, llm: &dyn TextGenerator, cutoff: NaiveDate) -> RetrievalDecision {
    match rule_screen(query, ruleset, cutoff) {
        Screen::Matched(verdict, id) => RetrievalDecision {
            retrieve: verdict == Verdict::Retrieve,
            tier: Tier::Rule,
            matched_rule: Some(id),
        },
        Screen::Ambiguous => RetrievalDecision {
            retrieve: semantic_classify(query, llm, cutoff) == Verdict::Retrieve,
            tier: Tier::Semantic,
            matched_rule: None,
        },
    }
}
