use std::sync::Arc;

use chrono::NaiveDate;
use finkpi::eval::{
    f1_score, generate_synthetic_corpus, random_intent, random_record, score_extraction, EvalOptions, Harness,
};
use finkpi::extraction::{extract_document, ExtractOptions, MetricTaxonomy, MockBackend, ValueClass};
use finkpi::fixtures;
use finkpi::ingest::{detect_numeric_spans, load_document, DocumentMeta, InputFormat, SourceKind};
use finkpi::pipeline::{Pipeline, ReviewLog};
use finkpi::rules::{is_forward_cue, normalize_range, resolve_unit, RuleName, RuleSet, Status};
use finkpi::sql::{query, Cell};
use finkpi::store::{AuditEvent, FixedClock, KpiStore, SCHEMA_VERSION};
use finkpi::text_to_sql::{template_sql, validate_sql, StatusFilter, TextToSql};
use finkpi::validation::{
    run_checks, score_confidence, validate_record, CheckKind, CheckOutcome, Disposition, QaCheck, ValidatedRecord,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

fn meta(doc_id: &str) -> DocumentMeta {
    DocumentMeta {
        doc_id: doc_id.into(),
        source_kind: SourceKind::EarningsRelease,
        company: "ACME".into(),
        published_on: NaiveDate::from_ymd_opt(2025, 2, 1).unwrap(),
        fiscal_year_end_month: 12,
    }
}

fn fragment() -> impl Strategy<Value = String> {
    prop_oneof![
        (1u32..90, 0u32..10).prop_map(|(a, b)| format!("Revenue was ${a}.{b} billion.")),
        (1u32..40, 1u32..5)
            .prop_map(|(a, b)| format!("The company expects operating margin of {a}–{}% in FY 2025.", a + b)),
        (100u32..999).prop_map(|a| format!("Free cash flow reached ${a}M in Q3 2024.")),
        (0u32..9, 10u32..99).prop_map(|(a, b)| format!("Diluted EPS was ${a}.{b}.")),
        (1u32..30).prop_map(|a| format!("Gross margin improved {a} basis points, to {a}.5% from {a}%.")),
        "[A-Za-z ,]{0,40}".prop_map(|s| format!("{s}.")),
        Just("\n\nQ4 2024 RESULTS\n\n".to_string()),
        Just("\n\n".to_string()),
    ]
}

fn document_text() -> impl Strategy<Value = String> {
    prop::collection::vec(fragment(), 1..12)
        .prop_map(|parts| parts.join(" "))
        .prop_filter("non-empty", |t| !t.trim().is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numeric_spans_round_trip(text in document_text()) {
        let doc = load_document(text.as_bytes(), InputFormat::PlainText, meta("d")).unwrap();
        for s in &doc.sections {
            for span in detect_numeric_spans(s) {
                prop_assert_eq!(&s.body[span.char_range.start..span.char_range.end], span.surface.as_str());
            }
        }
    }

    #[test]
    fn sections_partition_raw_text(text in document_text()) {
        let doc = load_document(text.as_bytes(), InputFormat::PlainText, meta("d")).unwrap();
        let mut cursor = 0;
        for s in &doc.sections {
            prop_assert!(s.char_range.start >= cursor, "overlap at {}", s.char_range.start);
            prop_assert!(doc.raw_text[cursor..s.char_range.start].trim().is_empty());
            prop_assert_eq!(&doc.raw_text[s.char_range.start..s.char_range.end], s.body.as_str());
            cursor = s.char_range.end;
        }
        prop_assert!(doc.raw_text[cursor..].trim().is_empty());
    }

    #[test]
    fn loading_is_deterministic(text in document_text()) {
        let a = load_document(text.as_bytes(), InputFormat::PlainText, meta("d")).unwrap();
        let b = load_document(text.as_bytes(), InputFormat::PlainText, meta("d")).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn extraction_is_grounded_and_closed(text in document_text(), seed in 0u64..4) {
        let doc = load_document(text.as_bytes(), InputFormat::PlainText, meta("d")).unwrap();
        let taxonomy = MetricTaxonomy::default();
        let backend = MockBackend::new(seed);
        let report = extract_document(&doc, &backend, &taxonomy, &ExtractOptions::default());
        for r in &report.records {
            prop_assert!(taxonomy.get(&r.metric).is_some(), "unknown metric {}", r.metric);
            let section = doc.section(&r.provenance.section_id).unwrap();
            let grounded = detect_numeric_spans(section)
                .iter()
                .any(|s| s.parsed_low == r.value_low && s.parsed_high == r.value_high);
            prop_assert!(grounded, "{:?} not grounded", r);
        }
        let again = extract_document(&doc, &backend, &taxonomy, &ExtractOptions::default());
        prop_assert_eq!(report, again);
    }

    #[test]
    fn midpoint_is_exact(lo in -1_000_000_000i64..1_000_000_000, width in 0i64..1_000_000_000, scale in 0u32..6) {
        let low = Decimal::new(lo, scale);
        let high = low + Decimal::new(width, scale);
        let n = normalize_range(low, high).unwrap();
        prop_assert_eq!(n.value * Decimal::TWO, low + high);
        prop_assert!(n.low <= n.value && n.value <= n.high);
    }

    #[test]
    fn unit_resolution_is_idempotent(face in 0i64..10_000_000, scale in 0u32..4, token in prop::sample::select(vec!["", "billion", "million", "thousand", "B", "M", "K", "%"])) {
        let class = if token == "%" { ValueClass::Percent } else { ValueClass::Currency };
        let once = resolve_unit(Decimal::new(face, scale), token, class).unwrap();
        let twice = resolve_unit(once.value, "", class).unwrap();
        prop_assert_eq!(once.value, twice.value);
        prop_assert_eq!(once.unit, twice.unit);
    }

    #[test]
    fn guidance_requires_forward_cue(seed in 0u64..1000) {
        let corpus = generate_synthetic_corpus(seed, 4);
        let pipeline = Pipeline::mock();
        for doc in &corpus.documents {
            for v in pipeline.run_document(doc).validated {
                let cued = v.record.qualifier_cues.iter().any(|c| is_forward_cue(c));
                prop_assert_eq!(v.record.qualifier.status == Status::Guidance, cued, "{:?}", v.record);
            }
        }
    }

    #[test]
    fn extra_fail_never_raises_confidence(fails in 0usize..5, skips in 0usize..5) {
        let doc = fixtures::guidance_release();
        let base = Pipeline::mock().run_document(&doc).validated.remove(0);
        let mut outcome = base.outcome.clone();
        let mk = |o| QaCheck { check_id: "x".into(), kind: CheckKind::UnitPlausible, question: String::new(), outcome: o, detail: None };
        outcome.checks = std::iter::repeat_n(mk(CheckOutcome::Fail), fails)
            .chain(std::iter::repeat_n(mk(CheckOutcome::Skipped), skips))
            .collect();
        let before = score_confidence(&base.record, &outcome);
        outcome.checks.push(mk(CheckOutcome::Fail));
        prop_assert!(score_confidence(&base.record, &outcome) <= before);
    }

    #[test]
    fn corrected_record_revalidates(i in 0usize..6, nudge in 1i64..1000) {
        let doc = fixtures::guidance_release();
        let records = Pipeline::mock().run_document(&doc).validated;
        let mut r = records[i % records.len()].record.clone();
        r.value += Decimal::new(nudge, 3);
        let v = validate_record(r, &doc);
        if v.outcome.disposition == Disposition::Corrected {
            prop_assert_eq!(run_checks(&v.record, &doc).disposition, Disposition::Accepted);
        }
    }

    #[test]
    fn f1_identity(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let taxonomy = MetricTaxonomy::default();
        let mut rng = ChaCha8Rng::seed_from_u64((tp * 10_000 + fp * 100 + fn_) as u64);
        let gold: Vec<_> = (0..tp + fn_).map(|i| random_record(&mut rng, &taxonomy, i)).collect();
        let mut predicted: Vec<ValidatedRecord> = gold[..tp].iter().cloned().map(|r| {
            let doc = fixtures::consensus_sentence();
            ValidatedRecord { outcome: run_checks(&r, &doc), record: r }
        }).collect();
        for k in 0..fp {
            let mut r = gold.first().cloned().unwrap_or_else(|| random_record(&mut rng, &taxonomy, 0));
            r.provenance.doc_id = format!("spurious-{k}");
            predicted.push(ValidatedRecord { outcome: run_checks(&r, &fixtures::consensus_sentence()), record: r });
        }
        let m = score_extraction(&predicted, &gold);
        let keys: std::collections::BTreeSet<_> = gold.iter().map(|g| (g.provenance.doc_id.clone(), g.metric.clone(), g.period.key(), g.qualifier.status)).collect();
        prop_assume!(keys.len() == gold.len());
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        prop_assert!((m.precision - p).abs() < 1e-12 && (m.recall - r).abs() < 1e-12);
        prop_assert!((m.f1 - f1_score(p, r)).abs() < 1e-12);
        if p + r > 0.0 {
            prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
        for x in [m.precision, m.recall, m.f1, m.unit_error_rate, m.period_misalignment_rate, m.structuring_accuracy, m.schema_compliance, m.qa_match_rate] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn template_sql_is_complete(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taxonomy = MetricTaxonomy::default();
        let intent = random_intent(&mut rng, &taxonomy);
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        let records: Vec<_> = (0..30).map(|i| random_record(&mut rng, &taxonomy, i)).collect();
        store.upsert_records(&records).unwrap();
        let sql = template_sql(&intent);
        prop_assert!(query(&store.table(), &sql).is_ok(), "{}", sql);
        let card = store.export_schema_card(&taxonomy);
        let v = validate_sql(&sql, &intent, &card);
        prop_assert!(v.passed(), "{} {:?}", sql, v.violations);
    }

    #[test]
    fn actual_only_never_returns_guidance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taxonomy = MetricTaxonomy::default();
        let mut intent = random_intent(&mut rng, &taxonomy);
        intent.status_filter = StatusFilter::ActualOnly;
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        let records: Vec<_> = (0..40).map(|i| random_record(&mut rng, &taxonomy, i)).collect();
        store.upsert_records(&records).unwrap();
        let agent = TextToSql::new(taxonomy, Arc::new(MockBackend::new(0)));
        let bundle = agent.answer_intent(&store, "q", &intent).unwrap();
        if let Some(i) = bundle.result.column_index("status") {
            for row in &bundle.result.rows {
                prop_assert_ne!(&row[i], &Cell::Text("Guidance".into()));
            }
        }
    }
}

#[test]
fn reingest_is_idempotent_and_audited() {
    let corpus = generate_synthetic_corpus(3, 25);
    let audit = Arc::new(finkpi::store::AuditLog::in_memory(Arc::new(FixedClock::epoch())));
    let store = KpiStore::in_memory(SCHEMA_VERSION).with_audit(audit.clone());
    let pipeline = Pipeline::mock();
    let review = ReviewLog::in_memory();
    for doc in &corpus.documents {
        pipeline.ingest_document(doc, &store, &review).unwrap();
    }
    let first = store.records();
    for doc in &corpus.documents {
        pipeline.ingest_document(doc, &store, &review).unwrap();
    }
    assert_eq!(store.records(), first);
    let entries = audit.entries().unwrap();
    for r in &first {
        let key = r.key();
        assert!(entries.iter().any(|e| matches!(&e.event, AuditEvent::Upsert { key: k, .. } if *k == key)), "{key:?}");
    }
}

#[test]
fn enabling_a_rule_never_adds_its_errors() {
    for seed in [1, 2] {
        let harness = Harness::new(
            generate_synthetic_corpus(seed, 100),
            EvalOptions { question_limit: Some(0), ..Default::default() },
        );
        for (rule, errors) in [
            (RuleName::UnitResolution, (|m: &finkpi::eval::ExtractionMetrics| m.unit_errors) as fn(&_) -> usize),
            (RuleName::PeriodResolution, |m| m.period_misalignments),
        ] {
            let mut off = RuleSet::all_off();
            let mut on = off;
            on.set(rule, true);
            assert!(
                errors(&harness.run(on).report.extraction) <= errors(&harness.run(off).report.extraction),
                "{rule:?} from all-off"
            );
            off = RuleSet::all_on().without(rule);
            assert!(
                errors(&harness.run(RuleSet::all_on()).report.extraction)
                    <= errors(&harness.run(off).report.extraction),
                "{rule:?} into all-on"
            );
        }
    }
}

#[test]
fn off_midpoint_value_is_corrected_then_accepted() {
    let doc = fixtures::guidance_release();
    let records = Pipeline::mock().run_document(&doc).validated;
    let mut r = records.iter().find(|v| v.record.is_range()).unwrap().record.clone();
    r.value += Decimal::ONE;
    let v = validate_record(r, &doc);
    assert_eq!(v.outcome.disposition, Disposition::Corrected);
    assert_eq!(run_checks(&v.record, &doc).disposition, Disposition::Accepted);
}
