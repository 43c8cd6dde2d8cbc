use serde::{Deserialize, Serialize};

use crate::backends::TextEmbedder;
use crate::error::{Error, Result};
use crate::primitives::{normalize, FeatureVector, WebDocument};

/// A contiguous slice of one document's text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    pub source_url: String,
    pub index_in_doc: usize,
}

/// Split a document body into character windows of at most `chunk_size`
/// characters, consecutive windows sharing exactly `overlap` characters.
///
/// An empty body falls back to the snippet; when both are empty there is
/// nothing to chunk.
pub fn split_chunks(doc: &WebDocument, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(Error::contract(format!(
            "chunk size {chunk_size} must exceed overlap {overlap}"
        )));
    }
    let source = if doc.body.is_empty() { &doc.snippet } else { &doc.body };
    if source.is_empty() {
        return Ok(Vec::new());
    }
    let offsets: Vec<usize> = source
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(source.len()))
        .collect();
    let len = offsets.len() - 1;
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + chunk_size).min(len);
        chunks.push(Chunk {
            text: source[offsets[start]..offsets[end]].to_string(),
            source_url: doc.url.clone(),
            index_in_doc: chunks.len(),
        });
        if end == len {
            break;
        }
        start = end - overlap;
    }
    Ok(chunks)
}

/// Embedded chunks searchable by cosine similarity. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    entries: Vec<(FeatureVector, Chunk)>,
    skipped: Vec<String>,
}

impl VectorStore {
    /// Build a store from pre-computed vectors; every vector must have dimension `dim`.
    pub fn from_entries(dim: usize, entries: Vec<(FeatureVector, Chunk)>) -> Result<Self> {
        let entries = entries
            .into_iter()
            .map(|(v, c)| {
                if v.dim() != dim {
                    return Err(Error::contract(format!("vector of dimension {} in a {dim}-d store", v.dim())));
                }
                Ok((normalize(&v)?, c))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dim,
            entries,
            skipped: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(FeatureVector, Chunk)] {
        &self.entries
    }

    /// Warnings for chunks that could not be embedded.
    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    /// Indices and similarities of the `k` best entries, best first; ties keep
    /// insertion order.
    pub fn search(&self, query: &FeatureVector, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::contract("top-k needs k >= 1"));
        }
        if query.dim() != self.dim {
            return Err(Error::contract(format!(
                "query of dimension {} against a {}-d store",
                query.dim(),
                self.dim
            )));
        }
        let q = normalize(query)?;
        let mut scored: Vec<(usize, f64)> = self.entries.iter().map(|(v, _)| v.dot(&q)).enumerate().collect();
        // stable sort: equal scores keep insertion order
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Embed every chunk. Chunks the embedder rejects are skipped with a warning;
/// if none survive the build fails as a retrieval failure.
pub fn build_vector_store(chunks: &[Chunk], embedder: &dyn TextEmbedder) -> Result<VectorStore> {
    use rayon::prelude::*;

    if chunks.is_empty() {
        return Err(Error::Retrieval("no chunks to index".into()));
    }
    let dim = embedder.dim();
    let embedded: Vec<std::result::Result<FeatureVector, String>> = chunks
        .par_iter()
        .map(|c| {
            let v = embedder.embed(&c.text).map_err(|e| e.to_string())?;
            if v.dim() != dim {
                return Err(format!("embedder returned dimension {} instead of {dim}", v.dim()));
            }
            normalize(&v).map_err(|e| e.to_string())
        })
        .collect();
    let mut entries = Vec::with_capacity(chunks.len());
    let mut skipped = Vec::new();
    for (chunk, result) in chunks.iter().zip(embedded) {
        match result {
            Ok(v) => entries.push((v, chunk.clone())),
            Err(e) => {
                let warning = format!("skipped chunk {} of {}: {e}", chunk.index_in_doc, chunk.source_url);
                log::warn!("{warning}");
                skipped.push(warning);
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Retrieval(format!("every chunk failed to embed ({})", skipped.join("; "))));
    }
    Ok(VectorStore { dim, entries, skipped })
}

/// The `k` chunks most similar to `query_vec`, best first.
pub fn retrieve_top_k(store: &VectorStore, query_vec: &FeatureVector, k: usize) -> Result<Vec<Chunk>> {
    if store.is_empty() {
        return Ok(Vec::new());
    }
    Ok(store
        .search(query_vec, k)?
        .into_iter()
        .map(|(i, _)| store.entries[i].1.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::PortResult;
    use crate::error::PortError;

    fn doc(body: &str) -> WebDocument {
        WebDocument::new("https://x.example/doc", "snip", body)
    }

    fn texts(chunks: &[Chunk]) -> Vec<&str> {
        chunks.iter().map(|c| c.text.as_str()).collect()
    }

    #[test]
    fn chunk_examples() {
        let c = split_chunks(&doc("0123456789"), 10, 0).unwrap();
        assert_eq!(texts(&c), ["0123456789"]);
        let c = split_chunks(&doc("0123456789"), 6, 2).unwrap();
        assert_eq!(texts(&c), ["012345", "456789"]);
        assert_eq!(c[1].index_in_doc, 1);
        let mut d = doc("");
        d.snippet = "abc".into();
        assert_eq!(texts(&split_chunks(&d, 6, 2).unwrap()), ["abc"]);
        d.snippet.clear();
        assert!(split_chunks(&d, 6, 2).unwrap().is_empty());
        assert!(split_chunks(&doc("x"), 2, 2).is_err());
    }

    #[test]
    fn chunks_respect_char_boundaries() {
        let c = split_chunks(&doc("héllo wörld"), 4, 1).unwrap();
        assert_eq!(texts(&c), ["héll", "lo w", "wörl", "ld"]);
    }

    struct Axis;

    impl TextEmbedder for Axis {
        fn dim(&self) -> usize {
            3
        }

        fn embed(&self, text: &str) -> PortResult<FeatureVector> {
            match text {
                "poison" => Err(PortError::new("text_embedder", "poisoned")),
                t => Ok(FeatureVector::basis(3, t.len() % 3).scaled(2.0)),
            }
        }
    }

    fn chunk(text: &str, i: usize) -> Chunk {
        Chunk {
            text: text.into(),
            source_url: "u".into(),
            index_in_doc: i,
        }
    }

    #[test]
    fn store_build_and_search() {
        let chunks = vec![chunk("a", 0), chunk("bb", 1), chunk("ccc", 2)];
        let store = build_vector_store(&chunks, &Axis).unwrap();
        assert_eq!((store.len(), store.dim()), (3, 3));
        assert_eq!(store, build_vector_store(&chunks, &Axis).unwrap());
        let top = retrieve_top_k(&store, &FeatureVector::basis(3, 2), 1).unwrap();
        assert_eq!(top[0].text, "bb");
        let all = retrieve_top_k(&store, &FeatureVector::basis(3, 0), 10).unwrap();
        assert_eq!(texts(&all), ["ccc", "a", "bb"]);
    }

    #[test]
    fn poisoned_chunk_is_skipped() {
        let chunks = vec![chunk("a", 0), chunk("poison", 1), chunk("ccc", 2)];
        let store = build_vector_store(&chunks, &Axis).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.skipped().len(), 1);
        let err = build_vector_store(&[chunk("poison", 0)], &Axis).unwrap_err();
        assert!(matches!(err, Error::Retrieval(_)));
    }

    #[test]
    fn ties_keep_insertion_order() {
        let v = FeatureVector::new(vec![1.0, 1.0]).unwrap();
        let store = VectorStore::from_entries(
            2,
            vec![(v.clone(), chunk("first", 0)), (v.clone(), chunk("second", 1))],
        )
        .unwrap();
        let top = retrieve_top_k(&store, &v, 2).unwrap();
        assert_eq!(texts(&top), ["first", "second"]);
        assert!(store.search(&FeatureVector::basis(3, 0), 1).is_err());
    }
}
