//! Run the extraction agent with the deterministic backend.

use finkpi::extraction::{extract_document, ExtractOptions, MetricTaxonomy, MockBackend};
use finkpi::fixtures;

fn main() {
    let doc = fixtures::guidance_release();
    let report = extract_document(&doc, &MockBackend::new(0), &MetricTaxonomy::default(), &ExtractOptions::default());
    for r in &report.records {
        let span = &doc.section(&r.provenance.section_id).unwrap().body
            [r.provenance.char_range.start..r.provenance.char_range.end];
        println!(
            "{:<18} {:>6}..{:<6} unit={:<8} period={:?} anchor={:?} cues={:?}  <- {:?}",
            r.metric, r.value_low, r.value_high, r.unit_token, r.period_phrase, r.period_anchor, r.qualifier_cues, span
        );
    }
    println!("{} records, {} failed sections", report.records.len(), report.failures.len());
}
