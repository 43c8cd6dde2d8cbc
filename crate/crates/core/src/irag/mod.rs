//! Internet retrieval-augmented answering: rewrite the query, search the web,
//! chunk and index the results, synthesize candidate answers with a
//! map-reduce over the best chunks, and resolve the answer against the
//! entities visible in the image.

mod answer;
mod store;

use std::collections::BTreeSet;

pub use answer::{
    map_reduce_answer, parse_map_reply, resolve_answer, AnswerCandidate, AnswerSummary, ResolvedAnswer, Resolution,
    MAP_TEMPLATE,
};
pub use store::{build_vector_store, retrieve_top_k, split_chunks, Chunk, VectorStore};

use crate::backends::{ImageSearcher, TextGenerator, WebSearcher};
use crate::primitives::{RasterImage, WebDocument};
use crate::text;

/// Query-rewrite prompt.
pub const REWRITE_TEMPLATE: &str = "Rewrite the question into short web search queries.
Question: {query}
Write up to {count} queries, one per line, without numbering.";

/// Up to `n` distinct search queries, the verbatim user query first.
///
/// The language model proposes rewrites; duplicates (case-insensitive) and
/// blank lines are dropped. A failing model yields just the user query.
pub fn generate_search_queries(user_query: &str, llm: &dyn TextGenerator, n: usize) -> Vec<String> {
    let mut queries = vec![user_query.to_string()];
    if n <= 1 {
        return queries;
    }
    let prompt = REWRITE_TEMPLATE
        .replace("{query}", user_query)
        .replace("{count}", &(n - 1).to_string());
    let reply = match llm.generate(&prompt, 1024) {
        Ok(reply) => reply,
        Err(e) => {
            log::warn!("query rewriting failed, searching with the user query only: {e}");
            return queries;
        }
    };
    let mut seen: BTreeSet<String> = BTreeSet::from([user_query.trim().to_lowercase()]);
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        if queries.len() >= n {
            break;
        }
        if !line.is_empty() && seen.insert(line.to_lowercase()) {
            queries.push(line.to_string());
        }
    }
    queries
}

/// Documents gathered by [`fetch_documents`], plus any per-query failures.
#[derive(Debug, Clone, Default)]
pub struct Fetched {
    pub documents: Vec<WebDocument>,
    pub failures: Vec<String>,
}

/// Search every query, keep the first document per url in query order, and
/// reduce HTML bodies to plain text.
pub fn fetch_documents(queries: &[String], searcher: &dyn WebSearcher, fanout: usize) -> Fetched {
    let mut fetched = Fetched::default();
    let mut seen = BTreeSet::new();
    for query in queries {
        match searcher.search(query, fanout) {
            Ok(docs) => {
                for mut doc in docs {
                    if doc.url.is_empty() || !seen.insert(doc.url.clone()) {
                        continue;
                    }
                    doc.body = text::strip_html(&doc.body);
                    fetched.documents.push(doc);
                }
            }
            Err(e) => fetched.failures.push(format!("{query}: {e}")),
        }
    }
    fetched
}

/// At most `k` images for the resolved answer; a failing searcher yields none.
pub fn fetch_reference_images(answer: &ResolvedAnswer, searcher: &dyn ImageSearcher, k: usize) -> Vec<RasterImage> {
    match searcher.search(&answer.text, k) {
        Ok(mut images) => {
            images.truncate(k);
            images
        }
        Err(e) => {
            log::warn!("reference image search for `{}` failed: {e}", answer.text);
            Vec::new()
        }
    }
}
