//! Compare all rules on, all rules off and each rule disabled alone.

use finkpi::eval::{generate_synthetic_corpus, run_ablation, EvalOptions, Harness};
use finkpi::rules::{RuleName, RuleSet};

fn main() {
    let harness = Harness::new(
        generate_synthetic_corpus(42, 100),
        EvalOptions { question_limit: Some(100), ..Default::default() },
    );
    let mut configs = vec![RuleSet::all_on(), RuleSet::all_off()];
    configs.extend(RuleName::ALL.iter().map(|r| RuleSet::all_on().without(*r)));
    print!("{}", run_ablation(&harness, &configs).to_markdown());
}
