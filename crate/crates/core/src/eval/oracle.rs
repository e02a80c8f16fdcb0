//! Reference answers computed by filtering records directly, plus random
//! stores and intents for equivalence testing.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rust_decimal::Decimal;

use crate::extraction::{MetricTaxonomy, Provenance};
use crate::ingest::CharRange;
use crate::rules::{Basis, FiscalPeriod, Granularity, KpiRecord, Qualifier, RuleName, Status, Unit};
use crate::text_to_sql::{Aggregation, BasisFilter, Comparison, PeriodFilter, QueryIntent, StatusFilter};

fn status_ok(f: StatusFilter, s: Status) -> bool {
    match f {
        StatusFilter::ActualOnly => s == Status::Actual,
        StatusFilter::GuidanceOnly => s == Status::Guidance,
        StatusFilter::Both => true,
    }
}

fn basis_ok(f: Option<BasisFilter>, b: Basis) -> bool {
    match f {
        None => true,
        Some(BasisFilter::GAAP) => b != Basis::NonGAAP,
        Some(BasisFilter::NonGAAP) => b == Basis::NonGAAP,
    }
}

fn quarter_before(g: Granularity, y: i32) -> Option<(Granularity, i32)> {
    Some(match g {
        Granularity::Q1 => (Granularity::Q4, y - 1),
        Granularity::Q2 => (Granularity::Q1, y),
        Granularity::Q3 => (Granularity::Q2, y),
        Granularity::Q4 => (Granularity::Q3, y),
        _ => return None,
    })
}

fn period_ok(intent: &QueryIntent, g: Granularity, y: i32) -> bool {
    match (intent.period_filter, intent.comparison) {
        (None, _) => true,
        (Some(PeriodFilter::Period { granularity, year: None }), _) => g == granularity,
        (Some(PeriodFilter::Period { granularity, year: Some(yy) }), None) => g == granularity && y == yy,
        (Some(PeriodFilter::Period { granularity, year: Some(yy) }), Some(Comparison::YoY)) => {
            g == granularity && (y == yy || y == yy - 1)
        }
        (Some(PeriodFilter::Period { granularity, year: Some(yy) }), Some(Comparison::QoQ)) => {
            (g, y) == (granularity, yy) || quarter_before(granularity, yy) == Some((g, y))
        }
        (Some(PeriodFilter::YearRange { granularity, from, to }), _) => {
            granularity.is_none_or(|gg| gg == g) && from <= y && y <= to
        }
    }
}

fn base_ok(intent: &QueryIntent, r: &KpiRecord) -> bool {
    intent.metrics.contains(&r.metric)
        && status_ok(intent.status_filter, r.qualifier.status)
        && basis_ok(intent.basis_filter, r.qualifier.basis)
        && intent.company_filter.as_ref().is_none_or(|c| *c == r.company)
}

/// The intent with an open year bound to the newest matching year.
pub fn oracle_bind_year(records: &[KpiRecord], intent: &QueryIntent) -> QueryIntent {
    let mut out = intent.clone();
    if let Some(PeriodFilter::Period { granularity, year: None }) = intent.period_filter {
        let newest = records
            .iter()
            .filter(|r| base_ok(intent, r) && r.period.granularity == granularity)
            .map(|r| r.period.year)
            .max();
        if newest.is_some() {
            out.period_filter = Some(PeriodFilter::Period { granularity, year: newest });
        }
    }
    out
}

/// `(metric, value)` pairs the intent should produce, sorted.
pub fn oracle_answer(records: &[KpiRecord], intent: &QueryIntent) -> Vec<(String, Option<Decimal>)> {
    let intent = oracle_bind_year(records, intent);
    let hits: Vec<&KpiRecord> = records
        .iter()
        .filter(|r| base_ok(&intent, r) && period_ok(&intent, r.period.granularity, r.period.year))
        .collect();

    let mut out: Vec<(String, Option<Decimal>)> = match intent.aggregation {
        Aggregation::None => hits.iter().map(|r| (r.metric.clone(), Some(r.value))).collect(),
        Aggregation::Latest => hits
            .iter()
            .max_by(|a, b| {
                let k = |r: &KpiRecord| {
                    (
                        r.period.year,
                        r.period.granularity.as_str().to_string(),
                        r.published_on,
                        r.provenance.doc_id.clone(),
                        r.provenance.section_id.clone(),
                        r.qualifier.status.as_str().to_string(),
                    )
                };
                k(a).cmp(&k(b))
            })
            .map(|r| vec![(r.metric.clone(), Some(r.value))])
            .unwrap_or_default(),
        agg => {
            let mut groups: BTreeMap<&str, Vec<Decimal>> = BTreeMap::new();
            if intent.metrics.len() == 1 {
                groups.insert(&intent.metrics[0], Vec::new());
            }
            for r in &hits {
                groups.entry(&r.metric).or_default().push(r.value);
            }
            groups
                .into_iter()
                .map(|(m, vs)| {
                    let v = match agg {
                        Aggregation::Count => Some(Decimal::from(vs.len())),
                        _ if vs.is_empty() => None,
                        Aggregation::Sum => Some(vs.iter().copied().sum()),
                        Aggregation::Avg => Some(vs.iter().copied().sum::<Decimal>() / Decimal::from(vs.len())),
                        Aggregation::Min => vs.iter().copied().min(),
                        _ => vs.iter().copied().max(),
                    };
                    (m.to_string(), v)
                })
                .collect()
        }
    };
    out.sort();
    out
}

const COMPANIES: &[&str] = &["ACME", "GLOBX", "HOOLI"];

/// A schema-valid record with random fields from small domains, so that
/// random intents hit it often.
pub fn random_record<R: Rng>(rng: &mut R, taxonomy: &MetricTaxonomy, i: usize) -> KpiRecord {
    let entry = taxonomy.entries().choose(rng).expect("non-empty taxonomy");
    let unit = Unit::for_class(entry.value_class);
    let g = *Granularity::ALL.choose(rng).expect("non-empty");
    let year = rng.gen_range(2020..=2024);
    let status = if rng.gen_bool(0.3) { Status::Guidance } else { Status::Actual };
    let basis = *Basis::ALL.choose(rng).expect("non-empty");
    let (low, high) = match unit {
        Unit::Percent => {
            let lo = Decimal::new(rng.gen_range(-200..600), 1);
            (lo, if rng.gen_bool(0.3) { lo + Decimal::new(rng.gen_range(1..50), 1) } else { lo })
        }
        _ => {
            let lo = Decimal::new(rng.gen_range(1..100_000), 2) * Decimal::from(1_000_000);
            (
                lo,
                if rng.gen_bool(0.3) {
                    lo + Decimal::from(rng.gen_range(1..1000)) * Decimal::from(1_000_000)
                } else {
                    lo
                },
            )
        }
    };
    KpiRecord {
        metric: entry.canonical_name.clone(),
        value: (low + high) / Decimal::TWO,
        value_low: low,
        value_high: high,
        unit,
        scale_applied: if unit == Unit::USD { Decimal::from(1_000_000) } else { Decimal::ONE },
        period: FiscalPeriod::explicit(g, year),
        qualifier: Qualifier { basis, status },
        confidence: Decimal::new(rng.gen_range(50..=100), 2),
        provenance: Provenance {
            doc_id: format!("doc-{}", rng.gen_range(0..6)),
            section_id: format!("s{i}"),
            char_range: CharRange::new(0, 4),
        },
        rules_applied: RuleName::ALL.to_vec(),
        qualifier_cues: Vec::new(),
        company: COMPANIES.choose(rng).expect("non-empty").to_string(),
        published_on: NaiveDate::from_ymd_opt(year + 1, rng.gen_range(1..=12), rng.gen_range(1..=28))
            .expect("valid date"),
    }
}

/// A random intent the parser could emit.
pub fn random_intent<R: Rng>(rng: &mut R, taxonomy: &MetricTaxonomy) -> QueryIntent {
    let names: Vec<&str> = taxonomy.entries().iter().map(|e| e.canonical_name.as_str()).collect();
    let n_metrics = if rng.gen_bool(0.2) { 2 } else { 1 };
    let metrics: Vec<String> = names.choose_multiple(rng, n_metrics).map(|s| s.to_string()).collect();
    let aggregation = *[
        Aggregation::None,
        Aggregation::None,
        Aggregation::Avg,
        Aggregation::Sum,
        Aggregation::Min,
        Aggregation::Max,
        Aggregation::Count,
        Aggregation::Latest,
    ]
    .choose(rng)
    .expect("non-empty");
    let aggregation =
        if aggregation == Aggregation::Latest && metrics.len() > 1 { Aggregation::Max } else { aggregation };
    let g = *Granularity::ALL.choose(rng).expect("non-empty");
    let mut period_filter = match rng.gen_range(0..4) {
        0 => None,
        1 => Some(PeriodFilter::Period { granularity: g, year: Some(rng.gen_range(2020..=2024)) }),
        2 => Some(PeriodFilter::Period { granularity: g, year: None }),
        _ => {
            let from = rng.gen_range(2020..=2024);
            let to = rng.gen_range(from..=2024);
            Some(PeriodFilter::YearRange { granularity: rng.gen_bool(0.5).then_some(g), from, to })
        }
    };
    let mut comparison = None;
    if aggregation == Aggregation::None && rng.gen_bool(0.3) {
        let qoq = g.is_quarter() && rng.gen_bool(0.5);
        comparison = Some(if qoq { Comparison::QoQ } else { Comparison::YoY });
        period_filter = Some(PeriodFilter::Period { granularity: g, year: Some(rng.gen_range(2020..=2024)) });
    }
    QueryIntent {
        metrics,
        period_filter,
        aggregation,
        basis_filter: *[None, None, Some(BasisFilter::GAAP), Some(BasisFilter::NonGAAP)]
            .choose(rng)
            .expect("non-empty"),
        status_filter: *[
            StatusFilter::ActualOnly,
            StatusFilter::ActualOnly,
            StatusFilter::GuidanceOnly,
            StatusFilter::Both,
        ]
        .choose(rng)
        .expect("non-empty"),
        company_filter: rng.gen_bool(0.3).then(|| COMPANIES.choose(rng).expect("non-empty").to_string()),
        comparison,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_intents_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = MetricTaxonomy::default();
        for _ in 0..500 {
            let i = random_intent(&mut rng, &t);
            assert!(i.check().is_ok(), "{i:?}");
        }
    }

    #[test]
    fn random_records_pass_schema() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = MetricTaxonomy::default();
        for i in 0..500 {
            let r = random_record(&mut rng, &t, i);
            assert!(crate::validation::validate_schema(&r).is_empty(), "{r:?}");
        }
    }

    #[test]
    fn count_and_avg() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = MetricTaxonomy::default();
        let recs: Vec<_> = (0..30).map(|i| random_record(&mut rng, &t, i)).collect();
        let mut intent = QueryIntent::new(&recs[0].metric);
        intent.status_filter = StatusFilter::Both;
        intent.aggregation = Aggregation::Count;
        let n = recs.iter().filter(|r| r.metric == recs[0].metric).count();
        assert_eq!(oracle_answer(&recs, &intent), vec![(recs[0].metric.clone(), Some(Decimal::from(n)))]);
    }
}
