use chrono::Duration;

use crate::primitives::WebDocument;
use crate::text;

/// Reduce news to one representative per time window, then drop
/// representatives whose snippet is a near-duplicate of an earlier one.
///
/// Items are ordered by timestamp; the earliest unconsumed item anchors a
/// window of `window_days` and represents every item inside it. Items without
/// a timestamp sort last and each stand alone. Similarity is token Jaccard
/// between snippets; `sim_threshold` or above counts as duplicate.
pub fn dedup_news(items: &[WebDocument], window_days: u32, sim_threshold: f64) -> Vec<WebDocument> {
    let mut sorted: Vec<&WebDocument> = items.iter().collect();
    sorted.sort_by_key(|d| (d.published_at.is_none(), d.published_at));

    let window = Duration::days(i64::from(window_days));
    let mut representatives: Vec<&WebDocument> = Vec::new();
    let mut window_end = None;
    for doc in sorted {
        match (doc.published_at, window_end) {
            (Some(t), Some(end)) if t < end => continue,
            (Some(t), _) => window_end = Some(t + window),
            (None, _) => {}
        }
        representatives.push(doc);
    }

    let mut kept: Vec<WebDocument> = Vec::new();
    for doc in representatives {
        if kept.iter().all(|k| text::jaccard(&k.snippet, &doc.snippet) < sim_threshold) {
            kept.push(doc.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn item(day: u32, snippet: &str) -> WebDocument {
        WebDocument::new(format!("https://news.example/{day}"), snippet, "")
            .published(Utc.with_ymd_and_hms(2025, 3, 1 + day, 9, 0, 0).unwrap())
    }

    fn days(docs: &[WebDocument]) -> Vec<String> {
        docs.iter().map(|d| d.url.rsplit('/').next().unwrap().to_string()).collect()
    }

    #[test]
    fn windows_and_similarity() {
        let one_window = [item(2, "c"), item(0, "a"), item(1, "b")];
        assert_eq!(days(&dedup_news(&one_window, 3, 0.8)), ["0"]);
        let apart = [item(0, "launch event"), item(5, "price cut announced")];
        assert_eq!(days(&dedup_news(&apart, 3, 0.8)), ["0", "5"]);
        let same = [item(5, "same words here"), item(0, "same words here")];
        assert_eq!(days(&dedup_news(&same, 3, 0.8)), ["0"]);
    }

    #[test]
    fn untimestamped_items_come_last() {
        let undated = WebDocument::new("https://news.example/x", "undated story", "");
        let docs = [undated.clone(), item(0, "dated story about launch")];
        assert_eq!(days(&dedup_news(&docs, 3, 0.8)), ["0", "x"]);
    }
}
