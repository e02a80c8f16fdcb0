//! Score the full pipeline on a seeded synthetic corpus.

use finkpi::eval::{evaluate, EvalOptions};
use finkpi::rules::RuleSet;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let run = evaluate(seed, 100, RuleSet::all_on(), EvalOptions::default());
    print!("{}", run.report.to_markdown());
    println!("\n{} records stored, {} sent to review", run.store.len(), run.review.len());
}
