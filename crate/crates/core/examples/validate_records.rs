//! Run the QA checks on normalized records, including one with a wrong midpoint.

use finkpi::extraction::{extract_document, ExtractOptions, MetricTaxonomy, MockBackend};
use finkpi::fixtures;
use finkpi::rules::{apply_rules, RuleSet};
use finkpi::validation::validate_record;
use rust_decimal::Decimal;

fn main() {
    let doc = fixtures::guidance_release();
    let raw = extract_document(&doc, &MockBackend::new(0), &MetricTaxonomy::default(), &ExtractOptions::default());
    let mut records: Vec<_> =
        raw.records.iter().filter_map(|r| apply_rules(r, &RuleSet::all_on(), &doc.meta()).ok()).collect();
    if let Some(range) = records.iter().find(|r| r.is_range()).cloned() {
        let mut off = range;
        off.value += Decimal::ONE;
        records.push(off);
    }
    for record in records {
        let v = validate_record(record, &doc);
        println!(
            "{} {} {:?} confidence={}",
            v.record.metric, v.record.value, v.outcome.disposition, v.record.confidence
        );
        for c in &v.outcome.checks {
            println!("    {:?} {:?} {}", c.outcome, c.kind, c.detail.as_deref().unwrap_or(""));
        }
        for c in &v.outcome.corrections {
            println!("    corrected {}: {} -> {}", c.field, c.from, c.to);
        }
    }
}
