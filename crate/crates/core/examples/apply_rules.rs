//! Normalize raw extractions with every rule on, then with every rule off.

use finkpi::extraction::{extract_document, ExtractOptions, MetricTaxonomy, MockBackend};
use finkpi::fixtures;
use finkpi::rules::{apply_rules, RuleSet};

fn main() {
    let doc = fixtures::guidance_release();
    let raw = extract_document(&doc, &MockBackend::new(0), &MetricTaxonomy::default(), &ExtractOptions::default());
    for rules in [RuleSet::all_on(), RuleSet::all_off()] {
        println!("rules: {}", rules.label());
        for r in &raw.records {
            match apply_rules(r, &rules, &doc.meta()) {
                Ok(k) => println!(
                    "  {:<18} value={} [{}, {}] {} {} {}/{}",
                    k.metric,
                    k.value,
                    k.value_low,
                    k.value_high,
                    k.unit,
                    k.period,
                    k.qualifier.status,
                    k.qualifier.basis
                ),
                Err(e) => println!("  {e}"),
            }
        }
    }
}
