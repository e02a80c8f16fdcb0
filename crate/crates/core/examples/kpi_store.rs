//! Persist records to a JSON store, reopen it and query it with SQL.

use std::sync::Arc;

use finkpi::extraction::MetricTaxonomy;
use finkpi::fixtures;
use finkpi::pipeline::{Pipeline, ReviewLog};
use finkpi::store::{AuditLog, FixedClock, KpiStore, SCHEMA_VERSION};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    let audit = Arc::new(AuditLog::open(dir.path().join("audit.jsonl"), Arc::new(FixedClock::epoch())).unwrap());
    {
        let store = KpiStore::open(&path, SCHEMA_VERSION).unwrap().with_audit(audit.clone());
        let pipeline = Pipeline::mock();
        let review = ReviewLog::in_memory();
        for doc in [fixtures::guidance_release(), fixtures::consensus_sentence()] {
            let r = pipeline.ingest_document(&doc, &store, &review).unwrap();
            println!("{}: inserted {} replaced {}", doc.doc_id, r.inserted, r.replaced);
        }
        let again = pipeline.ingest_document(&fixtures::guidance_release(), &store, &review).unwrap();
        println!("re-ingest: inserted {} replaced {}", again.inserted, again.replaced);
    }
    let store = KpiStore::open(&path, SCHEMA_VERSION).unwrap();
    println!("{} records after reopen", store.len());
    let result = store
        .execute_sql("SELECT metric, period_granularity, period_year, value, unit FROM kpi WHERE unit = 'USD' ORDER BY value DESC")
        .unwrap();
    for row in &result.rows {
        println!("  {}", row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" | "));
    }
    println!("{}", store.export_schema_card(&MetricTaxonomy::default()).to_prompt_text());
    println!("{} audit entries", audit.entries().unwrap().len());
}
