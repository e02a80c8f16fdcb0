use std::collections::{BTreeMap, BTreeSet};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::ingest::CharRange;
use crate::rules::{Granularity, KpiRecord, Status};
use crate::validation::{validate_schema, Disposition, ValidatedRecord};

/// Extraction quality against gold labels. Ratios are in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionMetrics {
    pub predicted: usize,
    pub gold: usize,
    pub true_positives: usize,
    pub unit_errors: usize,
    pub period_misalignments: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unit_error_rate: f64,
    pub period_misalignment_rate: f64,
    pub structuring_accuracy: f64,
    pub schema_compliance: f64,
    pub qa_match_rate: f64,
}

pub fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

type Key = (String, String, Granularity, i32, Status);
type SourceKey = (String, String, String, CharRange);

fn key(r: &KpiRecord) -> Key {
    (r.provenance.doc_id.clone(), r.metric.clone(), r.period.granularity, r.period.year, r.qualifier.status)
}

fn source_key(r: &KpiRecord) -> SourceKey {
    (r.provenance.doc_id.clone(), r.metric.clone(), r.provenance.section_id.clone(), r.provenance.char_range)
}

/// Equal within a relative tolerance of 1e-9.
pub fn values_match(a: Decimal, b: Decimal) -> bool {
    let tol = Decimal::new(1, 9) * a.abs().max(b.abs());
    (a - b).abs() <= tol
}

fn fully_equal(p: &KpiRecord, g: &KpiRecord) -> bool {
    p.metric == g.metric
        && p.value == g.value
        && p.value_low == g.value_low
        && p.value_high == g.value_high
        && p.unit == g.unit
        && p.scale_applied == g.scale_applied
        && p.period == g.period
        && p.qualifier == g.qualifier
        && p.company == g.company
        && p.provenance == g.provenance
}

/// Score predicted records against gold.
///
/// Matching key is (doc, metric, period, status); a true positive also
/// needs the value and unit to agree. Unit errors are counted over key
/// matches. Period misalignment is counted over records that come from the
/// same source span as a gold record.
pub fn score_extraction(predicted: &[ValidatedRecord], gold: &[KpiRecord]) -> ExtractionMetrics {
    let gold_by_key: BTreeMap<Key, &KpiRecord> = gold.iter().map(|g| (key(g), g)).collect();
    let gold_by_source: BTreeMap<SourceKey, &KpiRecord> = gold.iter().map(|g| (source_key(g), g)).collect();

    let mut used: BTreeSet<Key> = BTreeSet::new();
    let (mut tp, mut key_matches, mut unit_errors) = (0, 0, 0);
    let (mut source_matches, mut misaligned) = (0, 0);
    for v in predicted {
        let p = &v.record;
        let k = key(p);
        if let Some(g) = gold_by_key.get(&k) {
            if used.insert(k) {
                key_matches += 1;
                if p.unit != g.unit || p.scale_applied != g.scale_applied {
                    unit_errors += 1;
                }
                if p.unit == g.unit && values_match(p.value, g.value) {
                    tp += 1;
                }
            }
        }
        if let Some(g) = gold_by_source.get(&source_key(p)) {
            source_matches += 1;
            if p.period.key() != g.period.key() {
                misaligned += 1;
            }
        }
    }
    let structured = gold.iter().filter(|g| predicted.iter().any(|p| fully_equal(&p.record, g))).count();
    let precision = ratio(tp, predicted.len());
    let recall = ratio(tp, gold.len());
    ExtractionMetrics {
        predicted: predicted.len(),
        gold: gold.len(),
        true_positives: tp,
        unit_errors,
        period_misalignments: misaligned,
        precision,
        recall,
        f1: f1_score(precision, recall),
        unit_error_rate: ratio(unit_errors, key_matches),
        period_misalignment_rate: ratio(misaligned, source_matches),
        structuring_accuracy: ratio(structured, gold.len()),
        schema_compliance: ratio(
            predicted.iter().filter(|p| validate_schema(&p.record).is_empty()).count(),
            predicted.len(),
        ),
        qa_match_rate: ratio(
            predicted.iter().filter(|p| p.outcome.disposition == Disposition::Accepted).count(),
            predicted.len(),
        ),
    }
}

/// Query-answering quality. `None` means no questions were scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub questions: usize,
    pub intent_accuracy: Option<f64>,
    pub sql_syntax_validity: Option<f64>,
    pub constraint_pass_rate: Option<f64>,
    pub execution_success_rate: Option<f64>,
    pub top1_oracle_accuracy: Option<f64>,
}

/// Per-question outcome fed to [`score_queries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub intent_correct: bool,
    pub syntax_ok: bool,
    pub constraints_passed: bool,
    pub executed: bool,
    pub matches_oracle: bool,
}

pub fn score_queries(outcomes: &[QueryOutcome]) -> QueryMetrics {
    let n = outcomes.len();
    if n == 0 {
        return QueryMetrics::default();
    }
    let rate = |f: fn(&QueryOutcome) -> bool| Some(ratio(outcomes.iter().filter(|o| f(o)).count(), n));
    QueryMetrics {
        questions: n,
        intent_accuracy: rate(|o| o.intent_correct),
        sql_syntax_validity: rate(|o| o.syntax_ok),
        constraint_pass_rate: rate(|o| o.constraints_passed),
        execution_success_rate: rate(|o| o.executed),
        top1_oracle_accuracy: rate(|o| o.matches_oracle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Provenance;
    use crate::rules::{FiscalPeriod, Qualifier, Unit};
    use crate::validation::ValidationOutcome;

    fn rec(metric: &str, value: i64, start: usize) -> KpiRecord {
        KpiRecord {
            metric: metric.into(),
            value: Decimal::from(value),
            value_low: Decimal::from(value),
            value_high: Decimal::from(value),
            unit: Unit::USD,
            scale_applied: Decimal::from(1_000_000),
            period: FiscalPeriod::explicit(Granularity::Q1, 2024),
            qualifier: Qualifier::default(),
            confidence: Decimal::ONE,
            provenance: Provenance {
                doc_id: "d".into(),
                section_id: "s0".into(),
                char_range: CharRange::new(start, start + 4),
            },
            rules_applied: Vec::new(),
            qualifier_cues: Vec::new(),
            company: "ACME".into(),
            published_on: "2024-04-20".parse().unwrap(),
        }
    }

    fn accepted(r: KpiRecord) -> ValidatedRecord {
        ValidatedRecord {
            record: r,
            outcome: ValidationOutcome {
                checks: Vec::new(),
                disposition: Disposition::Accepted,
                corrections: Vec::new(),
            },
        }
    }

    #[test]
    fn identity_scores_one() {
        let gold = vec![rec("revenue", 5, 0), rec("operating_income", 2, 10)];
        let m = score_extraction(&gold.iter().cloned().map(accepted).collect::<Vec<_>>(), &gold);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!((m.unit_error_rate, m.period_misalignment_rate, m.structuring_accuracy), (0.0, 0.0, 1.0));
    }

    #[test]
    fn three_of_four_plus_spurious() {
        let gold =
            vec![rec("revenue", 5, 0), rec("operating_income", 2, 10), rec("free_cash_flow", 1, 20), rec("eps", 3, 30)];
        let mut pred: Vec<_> = gold[..3].iter().cloned().map(accepted).collect();
        pred.push(accepted(rec("gross_margin", 9, 40)));
        let m = score_extraction(&pred, &gold);
        assert_eq!((m.precision, m.recall, m.f1), (0.75, 0.75, 0.75));
    }

    #[test]
    fn scale_fault_is_unit_error() {
        let gold = vec![rec("revenue", 5, 0), rec("operating_income", 2, 10)];
        let mut bad = gold[0].clone();
        bad.scale_applied = Decimal::from(1000);
        let m = score_extraction(&[accepted(bad), accepted(gold[1].clone())], &gold);
        assert_eq!(m.unit_error_rate, 0.5);
    }

    #[test]
    fn empty_questions_are_not_applicable() {
        assert_eq!(score_queries(&[]).top1_oracle_accuracy, None);
        let one_bad = [QueryOutcome { syntax_ok: false, ..Default::default() }]
            .into_iter()
            .chain(std::iter::repeat_n(QueryOutcome { syntax_ok: true, ..Default::default() }, 9))
            .collect::<Vec<_>>();
        assert_eq!(score_queries(&one_bad).sql_syntax_validity, Some(0.9));
    }
}
