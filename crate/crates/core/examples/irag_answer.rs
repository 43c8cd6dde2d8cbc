//! Retrieve an answer from the web: rewrite the question into search
//! queries, chunk and index the documents, map-reduce candidates, and
//! resolve the answer against the entities visible in the image.
//!
//! Run with `cargo run --example irag_answer`.

use rose::backends::mock::make_mock_suite;
use rose::fixtures::{demo_dataset, demo_world};
use rose::irag;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let sample = &demo_dataset()[10];
    println!("question: {}", sample.question);

    let queries = irag::generate_search_queries(&sample.question, ports.llm.as_ref(), 3);
    println!("queries: {queries:?}");
    let fetched = irag::fetch_documents(&queries, ports.web.as_ref(), 5);
    println!("{} documents, {} failed searches", fetched.documents.len(), fetched.failures.len());

    let mut chunks = Vec::new();
    for doc in &fetched.documents {
        chunks.extend(irag::split_chunks(doc, 1200, 200)?);
    }
    let store = irag::build_vector_store(&chunks, ports.text_embedder.as_ref())?;
    let query_vec = ports.text_embedder.embed(&sample.question)?;
    let top = irag::retrieve_top_k(&store, &query_vec, 8)?;

    let summary = irag::map_reduce_answer(&top, &sample.question, ports.llm.as_ref());
    for c in &summary.candidates {
        println!("candidate {:<12} confidence {:.3} from {:?}", c.text, c.confidence, c.supporting_urls);
    }
    let entities = ports.entity_extractor.extract(&sample.image)?;
    let answer = irag::resolve_answer(&summary, &entities, 1.0)?;
    println!("answer: {} ({:?})", answer.text, answer.resolution);

    let references = irag::fetch_reference_images(&answer, ports.image_search.as_ref(), 8);
    println!("{} reference images", references.len());
    Ok(())
}
