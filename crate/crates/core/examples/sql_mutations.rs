//! Generate corrupted queries and show which constraint catches each one.

use finkpi::eval::generate_mutations;
use finkpi::extraction::MetricTaxonomy;
use finkpi::store::{KpiStore, SCHEMA_VERSION};
use finkpi::text_to_sql::validate_sql;

fn main() {
    let card = KpiStore::in_memory(SCHEMA_VERSION).export_schema_card(&MetricTaxonomy::default());
    for m in generate_mutations(7, 3) {
        let v = validate_sql(&m.mutated_sql, &m.intent, &card);
        println!("{:?}/{}: passed={}", m.class, m.operator, v.passed());
        println!("    {}", m.mutated_sql);
        for violation in &v.violations {
            println!("    {:?} {}: {}", violation.check, violation.rule, violation.detail);
        }
    }
}
