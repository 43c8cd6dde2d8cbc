//! Text normalization shared by answer matching, leak checks and deduplication.

use std::collections::BTreeSet;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Case-folded whitespace-separated words with punctuation removed.
///
/// Punctuation is deleted rather than turned into a separator, so
/// `"SU-7"` and `"su7"` produce the same word.
pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// [`words`] with articles dropped, unless the text consists only of
/// articles (so an entity literally named "A" keeps its token).
pub fn tokens(s: &str) -> Vec<String> {
    let all = words(s);
    if all.iter().all(|w| ARTICLES.contains(&w.as_str())) {
        return all;
    }
    all.into_iter().filter(|w| !ARTICLES.contains(&w.as_str())).collect()
}

/// Tokens joined by single spaces.
pub fn normalize(s: &str) -> String {
    tokens(s).join(" ")
}

/// Normalized form with all separators removed, used for substring leak checks.
pub fn compact(s: &str) -> String {
    tokens(s).concat()
}

pub fn token_set(s: &str) -> BTreeSet<String> {
    tokens(s).into_iter().collect()
}

/// Token-overlap match: `|A ∩ B| / min(|A|, |B|) >= threshold`.
///
/// With threshold 1.0 this is "one token set contains the other". Empty token
/// sets never match.
pub fn token_match(a: &str, b: &str, threshold: f64) -> bool {
    let (sa, sb) = (token_set(a), token_set(b));
    if sa.is_empty() || sb.is_empty() {
        return false;
    }
    let shared = sa.intersection(&sb).count() as f64;
    shared / sa.len().min(sb.len()) as f64 >= threshold
}

/// Jaccard similarity of the two token sets; two empty texts count as identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (sa, sb) = (token_set(a), token_set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Token index of the last occurrence of `phrase` inside `text`.
pub fn last_phrase_position(text: &[String], phrase: &[String]) -> Option<usize> {
    if phrase.is_empty() || phrase.len() > text.len() {
        return None;
    }
    (0..=text.len() - phrase.len())
        .rev()
        .find(|&i| text[i..i + phrase.len()] == *phrase)
}

/// Remove markup tags, decode the common entities and collapse whitespace.
pub fn strip_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_tag = false;
    for c in s.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    let decoded = out
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Truncate to at most `max_chars`, preferring the last sentence end inside the
/// limit, then the last word boundary.
pub fn truncate_at_sentence(s: &str, max_chars: usize) -> String {
    let s = s.trim();
    if s.chars().count() <= max_chars {
        return s.to_string();
    }
    let head: String = s.chars().take(max_chars).collect();
    let sentence_end = head
        .char_indices()
        .filter(|&(i, c)| {
            matches!(c, '.' | '!' | '?')
                && head[i + c.len_utf8()..].chars().next().is_none_or(char::is_whitespace)
        })
        .map(|(i, c)| i + c.len_utf8())
        .next_back();
    if let Some(end) = sentence_end {
        return head[..end].to_string();
    }
    match head.rfind(char::is_whitespace) {
        Some(i) if i > 0 => head[..i].trim_end().to_string(),
        _ => head,
    }
}
