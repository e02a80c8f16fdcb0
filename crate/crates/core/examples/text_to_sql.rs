//! Answer analyst questions and show the constraint checks on a bad query.

use std::sync::Arc;

use finkpi::extraction::{MetricTaxonomy, MockBackend};
use finkpi::fixtures;
use finkpi::pipeline::{Pipeline, ReviewLog};
use finkpi::store::{KpiStore, SCHEMA_VERSION};
use finkpi::text_to_sql::{parse_intent, validate_sql, TextToSql};

fn main() {
    let store = KpiStore::in_memory(SCHEMA_VERSION);
    let review = ReviewLog::in_memory();
    for doc in [fixtures::guidance_release(), fixtures::consensus_sentence()] {
        Pipeline::mock().ingest_document(&doc, &store, &review).unwrap();
    }
    let taxonomy = MetricTaxonomy::default();
    let agent = TextToSql::new(taxonomy.clone(), Arc::new(MockBackend::new(0)));
    for q in [
        "What was the Q4 2024 operating margin?",
        "What is FY 2025 operating margin guidance?",
        "How many revenue figures do we have?",
        "What color is the logo?",
    ] {
        println!("Q: {q}");
        match agent.answer(&store, q) {
            Ok(b) => {
                println!("   {}\n   {}\n   checks passed: {}", b.candidate.sql, b.explanation, b.validation.passed())
            }
            Err(e) => println!("   {e}"),
        }
    }

    let intent = parse_intent("What is FY 2025 operating margin guidance?", &taxonomy).unwrap();
    let card = store.export_schema_card(&taxonomy);
    let bad = "SELECT value FROM kpi WHERE metric = 'operating_margin' AND period_granularity = 'FY' AND period_year = 2025 AND status = 'Actual'";
    let v = validate_sql(bad, &intent, &card);
    println!("bad SQL: {}", v.feedback());
}
