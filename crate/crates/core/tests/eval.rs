use finkpi::eval::{evaluate, generate_synthetic_corpus, run_ablation, EvalOptions, Harness, ABLATION_ROWS};
use finkpi::rules::{RuleName, RuleSet};

fn harness(seed: u64, n: usize) -> Harness {
    Harness::new(generate_synthetic_corpus(seed, n), EvalOptions { question_limit: Some(60), ..Default::default() })
}

#[test]
fn identical_configurations_have_zero_deltas() {
    let h = harness(11, 40);
    let report = run_ablation(&h, &[RuleSet::all_on(), RuleSet::all_on()]);
    for row in &report.rows {
        assert_eq!(row.deltas[1], Some(0.0), "{}", row.metric);
    }
    assert_eq!(report.rows.iter().map(|r| r.metric.as_str()).collect::<Vec<_>>(), ABLATION_ROWS);
}

#[test]
fn unit_rule_off_targets_unit_errors_only() {
    let h = harness(42, 200);
    let report = run_ablation(&h, &[RuleSet::all_on(), RuleSet::all_on().without(RuleName::UnitResolution)]);
    assert!(report.delta("unit error rate", 1).unwrap() > 0.0);
    assert_eq!(report.delta("period misalignment rate", 1), Some(0.0));
    let on = &report.reports[0].extraction;
    let off = &report.reports[1].extraction;
    assert_eq!(on.period_misalignments, off.period_misalignments);
}

#[test]
fn ablation_direction_holds_across_seeds() {
    for seed in [1, 7, 42, 1234] {
        let h = harness(seed, 100);
        let report = run_ablation(&h, &[RuleSet::all_on(), RuleSet::all_off()]);
        assert!(report.delta("unit error rate", 1).unwrap() > 0.0, "seed {seed}");
        assert!(report.delta("period misalignment rate", 1).unwrap() > 0.0, "seed {seed}");
        assert!(report.delta("extraction precision", 1).unwrap() < 0.0, "seed {seed}");
    }
}

#[test]
fn reports_are_byte_identical_per_seed() {
    let a = evaluate(5, 30, RuleSet::all_off(), EvalOptions::default());
    let b = evaluate(5, 30, RuleSet::all_off(), EvalOptions::default());
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.to_markdown(), b.report.to_markdown());
    let c = evaluate(6, 30, RuleSet::all_off(), EvalOptions::default());
    assert_ne!(a.report.to_json(), c.report.to_json());
}

#[test]
fn empty_question_set_is_not_applicable() {
    let run = evaluate(3, 5, RuleSet::all_on(), EvalOptions { question_limit: Some(0), ..Default::default() });
    assert_eq!(run.report.query.questions, 0);
    assert_eq!(run.report.query.top1_oracle_accuracy, None);
    assert!(run.report.to_markdown().contains("| Top-1 oracle accuracy | n/a |"));
}

#[test]
fn ablation_report_formats() {
    let h = harness(2, 20);
    let report = run_ablation(&h, &[RuleSet::all_on(), RuleSet::all_off()]);
    let md = report.to_markdown();
    assert!(md.contains("| Metric | all-on | all-off | delta |"), "{md}");
    for name in ABLATION_ROWS {
        assert!(md.contains(&format!("| {name} |")), "{name}");
    }
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["configurations"], serde_json::json!(["all-on", "all-off"]));
    assert_eq!(json["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn corpus_shape() {
    let c = generate_synthetic_corpus(42, 200);
    assert_eq!(c.documents.len(), 200);
    assert!(c.documents_with_ranges() >= 50);
    assert!(c.questions.len() >= c.gold_records().count());
    let one = generate_synthetic_corpus(7, 1);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&generate_synthetic_corpus(7, 1)).unwrap());
}
