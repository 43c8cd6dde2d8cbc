//! Build the enhanced text prompt: fetch and condense background knowledge,
//! then instantiate the template. The directive sentence always equals the
//! plain baseline prompt for the same answer.
//!
//! Run with `cargo run --example textual_prompt`.

use rose::backends::mock::make_mock_suite;
use rose::fixtures::demo_world;
use rose::irag::ResolvedAnswer;
use rose::tpe::{self, BackgroundKnowledge, PromptTemplate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let query = "Which model did Vela unveil at the Shanghai show in 2025?";
    let answer = ResolvedAnswer::given("Vela V7");

    let background = tpe::fetch_background(&answer, ports.web.as_ref(), ports.llm.as_ref(), 600);
    println!("background ({:?}): {}", background.source_url, background.text);

    let prompt = tpe::build_prompt(query, &answer, &background)?;
    println!("enhanced: {}", prompt.text);
    println!("baseline: {}", tpe::baseline_prompt(&answer.text));
    assert!(prompt.text.ends_with(&tpe::baseline_prompt(&answer.text)));

    // the bracketed group disappears when there is no background
    let bare = tpe::build_prompt(query, &answer, &BackgroundKnowledge::default())?;
    println!("no background: {}", bare.text);

    let custom = PromptTemplate::parse("Context: {query}[ Known facts: {background}.] Please segment {answer} in this image.")?;
    println!("custom: {}", tpe::build_prompt_with(&custom, query, &answer, &background)?.text);

    let rejected = PromptTemplate::parse("Segment {answer} please.");
    println!("template without the directive: {}", rejected.unwrap_err());
    Ok(())
}
