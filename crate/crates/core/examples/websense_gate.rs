//! Decide which queries need web retrieval: cheap rules first, the language
//! model only for queries no rule settles.
//!
//! Run with `cargo run --example websense_gate`.

use std::sync::atomic::{AtomicUsize, Ordering};

use rose::backends::mock::FnTextGenerator;
use rose::websense::{decide, default_cutoff, rule_screen, Ruleset, Screen};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let calls = AtomicUsize::new(0);
    let llm = FnTextGenerator(|prompt: &str| {
        calls.fetch_add(1, Ordering::SeqCst);
        Ok(if prompt.contains("Query: Who designed") { "RETRIEVE" } else { "SKIP" }.to_string())
    });
    let rules = Ruleset::default();
    let cutoff = default_cutoff();

    let queries = [
        "Who won the latest Golden Boot?",
        "Which phone launched in 2025?",
        "the dog on the left",
        "Who designed the Halden Tower?",
        "What is a kettle?",
    ];
    for q in queries {
        let screen = match rule_screen(q, &rules, cutoff) {
            Screen::Matched(v, id) => format!("{v:?} by rule {id}"),
            Screen::Ambiguous => "ambiguous".to_string(),
        };
        let decision = decide(q, &rules, &llm, cutoff);
        println!("{q:<36} {screen:<40} -> {decision}");
    }
    println!("language model consulted {} times", calls.load(Ordering::SeqCst));

    let custom = Ruleset::parse("retrieve\t(?i)\\bstock price\\b\nskip\t(?i)^segment\\b\n")?;
    println!("custom rules: {:?}", custom.rules().iter().map(|r| r.id()).collect::<Vec<_>>());
    Ok(())
}
