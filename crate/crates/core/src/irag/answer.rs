use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::store::Chunk;
use crate::backends::TextGenerator;
use crate::error::{Error, Result};
use crate::primitives::DetectedEntity;
use crate::text;

/// Map-phase prompt, sent once per chunk.
pub const MAP_TEMPLATE: &str = "Extract the entities that answer the question from the passage.
Question: {query}
Passage: {chunk}
List one candidate per line as <name><TAB><confidence between 0 and 1>. Reply NONE if the passage does not answer the question.";

const MAP_MAX_LEN: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub confidence: f64,
    pub supporting_urls: Vec<String>,
}

/// Candidates in descending confidence; empty when nothing was found.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerSummary {
    pub candidates: Vec<AnswerCandidate>,
}

impl AnswerSummary {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn top(&self) -> Option<&AnswerCandidate> {
        self.candidates.first()
    }
}

/// Parse one map reply. `NONE` is a valid empty answer; any malformed line
/// invalidates the whole reply. Lines are `name<TAB>confidence`; a trailing
/// `,confidence` is accepted as well.
pub fn parse_map_reply(reply: &str) -> Option<Vec<(String, f64)>> {
    let lines: Vec<&str> = reply.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() == 1 && lines[0].eq_ignore_ascii_case("none") {
        return Some(Vec::new());
    }
    if lines.is_empty() {
        return None;
    }
    lines
        .into_iter()
        .map(|line| {
            let (name, conf) = line.rsplit_once('\t').or_else(|| line.rsplit_once(','))?;
            let name = name.trim();
            let conf: f64 = conf.trim().parse().ok()?;
            (!text::normalize(name).is_empty() && (0.0..=1.0).contains(&conf)).then(|| (name.to_string(), conf))
        })
        .collect()
}

#[derive(Default)]
struct Evidence {
    confidences: Vec<f64>,
    urls: BTreeSet<String>,
    surfaces: BTreeSet<String>,
}

/// Map each chunk to candidate answers, then merge candidates by normalized
/// text with noisy-OR confidence `1 - Π(1 - c)` over supporting chunks.
///
/// The result does not depend on chunk order.
pub fn map_reduce_answer(chunks: &[Chunk], user_query: &str, llm: &dyn TextGenerator) -> AnswerSummary {
    use rayon::prelude::*;

    let mapped: Vec<Option<Vec<(String, f64)>>> = chunks
        .par_iter()
        .map(|chunk| {
            let prompt = MAP_TEMPLATE.replace("{query}", user_query).replace("{chunk}", &chunk.text);
            match llm.generate(&prompt, MAP_MAX_LEN) {
                Ok(reply) => parse_map_reply(&reply),
                Err(e) => {
                    log::warn!("map step failed for {}: {e}", chunk.source_url);
                    None
                }
            }
        })
        .collect();

    let mut merged: BTreeMap<String, Evidence> = BTreeMap::new();
    for (chunk, candidates) in chunks.iter().zip(mapped) {
        let Some(candidates) = candidates else { continue };
        // within a chunk a candidate counts once, at its highest confidence
        let mut per_chunk: BTreeMap<String, (f64, BTreeSet<String>)> = BTreeMap::new();
        for (name, conf) in candidates {
            let entry = per_chunk.entry(text::normalize(&name)).or_default();
            entry.0 = entry.0.max(conf);
            entry.1.insert(name);
        }
        for (key, (conf, surfaces)) in per_chunk {
            let evidence = merged.entry(key).or_default();
            evidence.confidences.push(conf);
            evidence.urls.insert(chunk.source_url.clone());
            evidence.surfaces.extend(surfaces);
        }
    }

    let mut candidates: Vec<(String, AnswerCandidate)> = merged
        .into_iter()
        .map(|(key, mut ev)| {
            ev.confidences.sort_by(f64::total_cmp);
            let miss: f64 = ev.confidences.iter().map(|c| 1.0 - c).product();
            let candidate = AnswerCandidate {
                text: ev.surfaces.into_iter().next().expect("at least one surface form"),
                confidence: 1.0 - miss,
                supporting_urls: ev.urls.into_iter().collect(),
            };
            (key, candidate)
        })
        .collect();
    candidates.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence).then_with(|| a.0.cmp(&b.0)));
    AnswerSummary {
        candidates: candidates.into_iter().map(|(_, c)| c).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    EntityMatch,
    ConfidenceFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAnswer {
    pub text: String,
    /// Present exactly when `resolution` is `EntityMatch`.
    pub matched_entity: Option<DetectedEntity>,
    pub resolution: Resolution,
}

impl ResolvedAnswer {
    /// An answer taken as given, without entity resolution.
    pub fn given(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            matched_entity: None,
            resolution: Resolution::ConfidenceFallback,
        }
    }
}

/// Pick the first candidate, in confidence order, that names an entity seen
/// in the image; fall back to the most confident candidate.
///
/// With `threshold` 1.0 a match means one token set contains the other.
pub fn resolve_answer(summary: &AnswerSummary, entities: &[DetectedEntity], threshold: f64) -> Result<ResolvedAnswer> {
    let top = summary
        .top()
        .ok_or_else(|| Error::Retrieval("no answer candidates to resolve".into()))?;
    for candidate in &summary.candidates {
        let hit = entities.iter().find(|e| {
            e.label
                .as_deref()
                .is_some_and(|label| text::token_match(&candidate.text, label, threshold))
        });
        if let Some(entity) = hit {
            return Ok(ResolvedAnswer {
                text: candidate.text.clone(),
                matched_entity: Some(entity.clone()),
                resolution: Resolution::EntityMatch,
            });
        }
    }
    Ok(ResolvedAnswer::given(top.text.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::FnTextGenerator;
    use crate::primitives::BoundingBox;

    fn chunk(text: &str, url: &str) -> Chunk {
        Chunk {
            text: text.into(),
            source_url: url.into(),
            index_in_doc: 0,
        }
    }

    /// Replies with the passage itself, so each chunk scripts its own map output.
    fn echo() -> FnTextGenerator<impl Fn(&str) -> crate::backends::PortResult<String> + Send + Sync> {
        FnTextGenerator(|prompt: &str| {
            let start = prompt.find("Passage: ").unwrap() + "Passage: ".len();
            let end = prompt.rfind("\nList one candidate").unwrap();
            Ok(prompt[start..end].replace("\\t", "\t").replace("\\n", "\n"))
        })
    }

    #[test]
    fn noisy_or_merge() {
        let chunks = [chunk("Entity A\\t0.6", "u1"), chunk("entity a,0.6", "u2")];
        let s = map_reduce_answer(&chunks, "q", &echo());
        assert_eq!(s.candidates.len(), 1);
        assert!((s.candidates[0].confidence - 0.84).abs() < 1e-12);
        assert_eq!(s.candidates[0].text, "Entity A");
        assert_eq!(s.candidates[0].supporting_urls, ["u1", "u2"]);
    }

    #[test]
    fn order_and_empty_cases() {
        assert!(map_reduce_answer(&[], "q", &echo()).is_empty());
        let s = map_reduce_answer(&[chunk("B\\t0.5\\nA\\t0.9", "u")], "q", &echo());
        let names: Vec<_> = s.candidates.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
        let s = map_reduce_answer(&[chunk("NONE", "u"), chunk("garbage", "v")], "q", &echo());
        assert!(s.is_empty());
    }

    #[test]
    fn malformed_line_discards_the_chunk() {
        assert_eq!(parse_map_reply("A\t0.9\nnot a line"), None);
        assert_eq!(parse_map_reply("A\t1.5"), None);
        assert_eq!(parse_map_reply(""), None);
        assert_eq!(parse_map_reply(" none "), Some(vec![]));
        assert_eq!(parse_map_reply("A\t0.9\n\nB, 0.1"), Some(vec![("A".into(), 0.9), ("B".into(), 0.1)]));
    }

    #[test]
    fn merge_is_order_independent() {
        let chunks = vec![
            chunk("A\\t0.3\\nB\\t0.7", "u1"),
            chunk("A\\t0.9", "u2"),
            chunk("B\\t0.1\\nC\\t0.2", "u3"),
            chunk("the A\\t0.45", "u4"),
        ];
        let forward = map_reduce_answer(&chunks, "q", &echo());
        let mut reversed = chunks.clone();
        reversed.reverse();
        assert_eq!(forward, map_reduce_answer(&reversed, "q", &echo()));
    }

    fn entity(label: &str) -> DetectedEntity {
        DetectedEntity {
            label: Some(label.into()),
            bbox: BoundingBox::new(0, 0, 1, 1).unwrap(),
            confidence: 0.9,
        }
    }

    fn summary(items: &[(&str, f64)]) -> AnswerSummary {
        AnswerSummary {
            candidates: items
                .iter()
                .map(|(t, c)| AnswerCandidate {
                    text: t.to_string(),
                    confidence: *c,
                    supporting_urls: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn resolution_rules() {
        let r = resolve_answer(&summary(&[("Xiaomi SU7", 0.8)]), &[entity("xiaomi su7")], 1.0).unwrap();
        assert_eq!(r.resolution, Resolution::EntityMatch);
        assert_eq!(r.text, "Xiaomi SU7");

        let r = resolve_answer(&summary(&[("Messi", 0.9), ("Neymar", 0.7)]), &[entity("Neymar")], 1.0).unwrap();
        assert_eq!((r.text.as_str(), r.resolution), ("Neymar", Resolution::EntityMatch));

        let r = resolve_answer(&summary(&[("A", 0.9)]), &[], 1.0).unwrap();
        assert_eq!((r.text.as_str(), r.resolution), ("A", Resolution::ConfidenceFallback));
        assert!(r.matched_entity.is_none());

        let r = resolve_answer(&summary(&[("Messi", 0.9)]), &[entity("Lionel Messi")], 1.0).unwrap();
        assert_eq!(r.resolution, Resolution::EntityMatch);

        assert!(resolve_answer(&AnswerSummary::default(), &[], 1.0).is_err());
    }
}
