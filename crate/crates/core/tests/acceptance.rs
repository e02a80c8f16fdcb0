//! Acceptance suite. Each criterion prints one PASS/FAIL line with its wall
//! time; the process exits nonzero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use finkpi::eval::{
    evaluate, generate_mutations, generate_synthetic_corpus, oracle_answer, random_intent, random_record, run_ablation,
    EvalOptions, Harness, MutationClass,
};
use finkpi::extraction::{MetricTaxonomy, MockBackend};
use finkpi::fixtures;
use finkpi::pipeline::{Pipeline, ReviewLog};
use finkpi::rules::{normalize_range, Granularity, KpiRecord, RuleSet, Unit, MAX_YEAR, MIN_YEAR};
use finkpi::sql::Cell;
use finkpi::store::{AuditLog, FixedClock, KpiStore, SCHEMA_VERSION};
use finkpi::text_to_sql::{scalar, validate_sql, TextToSql};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

type Check = Result<String, String>;

fn d(s: &str) -> Decimal {
    s.parse().unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn range_midpoints() -> Check {
    let a = normalize_range(d("22"), d("24")).map_err(|e| e.to_string())?;
    let b = normalize_range(d("15"), d("17")).map_err(|e| e.to_string())?;
    ensure(a.value == d("23"), format!("22-24 gave {}", a.value))?;
    ensure(b.value == d("16.0") && (b.low, b.high) == (d("15"), d("17")), format!("15-17 gave {b:?}"))?;
    Ok(format!("22-24 -> {}, 15-17 -> {}", a.value, b.value))
}

fn consensus_sentence() -> Check {
    let run = Pipeline::mock().run_document(&fixtures::consensus_sentence());
    let recs: Vec<&KpiRecord> = run.validated.iter().map(|v| &v.record).collect();
    let find = |m: &str| recs.iter().find(|r| r.metric == m).copied().ok_or(format!("no {m} record"));
    let revenue = find("revenue")?;
    let growth = find("revenue_yoy_growth")?;
    let delta = find("consensus_delta")?;
    for r in [revenue, growth, delta] {
        ensure(
            r.period.granularity == Granularity::Q1 && r.period.year == 2024,
            format!("{} period {:?}", r.metric, r.period),
        )?;
    }
    ensure(revenue.value == d("4300000000") && revenue.unit == Unit::USD, format!("revenue {revenue:?}"))?;
    ensure(revenue.scale_applied == d("1000000000"), "revenue scale")?;
    ensure(growth.value == d("12") && growth.unit == Unit::Percent, format!("growth {growth:?}"))?;
    ensure(delta.value == d("150000000") && delta.unit == Unit::USD, format!("delta {delta:?}"))?;
    ensure(delta.scale_applied == d("1000000"), "delta scale")?;
    Ok(format!("{} records, Q1 2024, revenue 4.3e9 USD, growth 12%, consensus delta 1.5e8 USD", recs.len()))
}

fn guidance_firewall() -> Check {
    let store = KpiStore::in_memory(SCHEMA_VERSION);
    Pipeline::mock()
        .ingest_document(&fixtures::guidance_release(), &store, &ReviewLog::in_memory())
        .map_err(|e| e.to_string())?;
    let agent = TextToSql::new(MetricTaxonomy::default(), Arc::new(MockBackend::new(0)));
    let actual = agent.answer(&store, "Q4 2024 operating margin").map_err(|e| e.to_string())?;
    ensure(actual.result.row_count == 1, format!("actual query returned {} rows", actual.result.row_count))?;
    ensure(
        scalar(&actual.result, "value") == Some(Cell::Decimal(d("14.6"))),
        format!("actual {:?}", actual.result.rows),
    )?;
    let guidance = agent.answer(&store, "FY 2025 operating margin guidance").map_err(|e| e.to_string())?;
    let cell = |c: &str| scalar(&guidance.result, c);
    ensure(cell("value") == Some(Cell::Decimal(d("16.0"))), format!("guidance {:?}", guidance.result.rows))?;
    ensure(
        cell("value_low") == Some(Cell::Decimal(d("15"))) && cell("value_high") == Some(Cell::Decimal(d("17"))),
        "guidance bounds",
    )?;
    Ok(format!("actual 14.6, guidance 16.0 (15, 17); \"{}\"", guidance.explanation))
}

fn ablation_direction() -> Check {
    let harness = Harness::new(generate_synthetic_corpus(42, 200), EvalOptions::default());
    let report = run_ablation(&harness, &[RuleSet::all_on(), RuleSet::all_off()]);
    let unit = report.delta("unit error rate", 1).unwrap_or(f64::NAN) * 100.0;
    let period = report.delta("period misalignment rate", 1).unwrap_or(f64::NAN) * 100.0;
    let precision = report.delta("extraction precision", 1).unwrap_or(f64::NAN) * 100.0;
    let msg = format!("unit error {unit:+.1} pts, period misalignment {period:+.1} pts, precision {precision:+.1} pts");
    ensure(unit >= 5.0 && period >= 5.0 && precision <= -3.0, msg.clone())?;
    Ok(msg)
}

/// Written independently of the store's gate.
fn obviously_valid(r: &KpiRecord) -> bool {
    let scales = [d("1"), d("1000"), d("1000000"), d("1000000000")];
    r.period.is_resolved()
        && (MIN_YEAR..=MAX_YEAR).contains(&r.period.year)
        && !r.metric.trim().is_empty()
        && !r.company.trim().is_empty()
        && r.value_low <= r.value_high
        && r.value == (r.value_low + r.value_high) / Decimal::TWO
        && (r.unit != Unit::Percent
            || ([r.value, r.value_low, r.value_high].iter().all(|x| *x >= d("-100") && *x <= d("1000"))
                && r.scale_applied == Decimal::ONE))
        && scales.contains(&r.scale_applied)
        && r.confidence >= Decimal::ZERO
        && r.confidence <= Decimal::ONE
        && !r.provenance.doc_id.is_empty()
        && !r.provenance.section_id.is_empty()
        && r.provenance.char_range.start < r.provenance.char_range.end
}

fn corrupt(rng: &mut ChaCha8Rng, r: &mut KpiRecord) {
    match rng.gen_range(0..10) {
        0 => r.period.year = *[1850, 2200, -1].get(rng.gen_range(0..3)).unwrap(),
        1 => r.metric = " ".repeat(rng.gen_range(0..2)),
        2 => std::mem::swap(&mut r.value_low, &mut r.value_high),
        3 => r.value += Decimal::ONE,
        4 => {
            r.unit = Unit::Percent;
            r.scale_applied = Decimal::ONE;
            r.value = d("5000");
            r.value_low = r.value;
            r.value_high = r.value;
        }
        5 => r.scale_applied = d("7"),
        6 => r.confidence = d("1.5"),
        7 => r.provenance.doc_id.clear(),
        8 => r.company.clear(),
        _ => r.confidence = d("-0.1"),
    }
}

fn store_gate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let taxonomy = MetricTaxonomy::default();
    let store = KpiStore::in_memory(SCHEMA_VERSION);
    let (mut offered_invalid, mut refused) = (0, 0);
    let mut i = 0;
    while i < 10_000 {
        let batch = rng.gen_range(1..=8).min(10_000 - i);
        let records: Vec<KpiRecord> = (i..i + batch)
            .map(|k| {
                let mut r = random_record(&mut rng, &taxonomy, k);
                if rng.gen_bool(0.3) {
                    corrupt(&mut rng, &mut r);
                }
                r
            })
            .collect();
        let bad = records.iter().filter(|r| !obviously_valid(r)).count();
        offered_invalid += bad;
        match store.upsert_records(&records) {
            Ok(_) => ensure(bad == 0, format!("batch with {bad} invalid records accepted"))?,
            Err(_) => refused += 1,
        }
        i += batch;
    }
    let persisted_invalid = store.records().iter().filter(|r| !obviously_valid(r)).count();
    ensure(persisted_invalid == 0, format!("{persisted_invalid} invalid records persisted"))?;
    ensure(offered_invalid > 1000, "too few invalid records offered")?;
    Ok(format!("10000 records, {offered_invalid} invalid, {refused} batches refused, 0 invalid persisted"))
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let taxonomy = MetricTaxonomy::default();
    let agent = TextToSql::new(taxonomy.clone(), Arc::new(MockBackend::new(0)));
    let mut agree = 0;
    let mut failures = Vec::new();
    for case in 0..100 {
        let n = rng.gen_range(0..=50);
        let records: Vec<KpiRecord> = (0..n).map(|i| random_record(&mut rng, &taxonomy, i)).collect();
        let store = KpiStore::in_memory(SCHEMA_VERSION);
        store.upsert_records(&records).map_err(|e| e.to_string())?;
        let intent = random_intent(&mut rng, &taxonomy);
        let want = oracle_answer(&store.records(), &intent);
        match agent.answer_intent(&store, "generated", &intent) {
            Ok(bundle) if finkpi::eval::answers_match(&bundle.values(), &want) => agree += 1,
            Ok(bundle) => failures.push(format!(
                "case {case}: {} gave {:?}, oracle {:?}",
                bundle.candidate.sql,
                bundle.values(),
                want
            )),
            Err(e) => failures.push(format!("case {case}: {e}")),
        }
    }
    ensure(agree == 100, format!("{agree}/100 agree; first: {}", failures.first().cloned().unwrap_or_default()))?;
    Ok("100/100 answers equal the oracle".into())
}

fn mutations_flagged() -> Check {
    let store = KpiStore::in_memory(SCHEMA_VERSION);
    let card = store.export_schema_card(&MetricTaxonomy::default());
    let mutations = generate_mutations(42, 10);
    let mut missed = Vec::new();
    for m in &mutations {
        let v = validate_sql(&m.mutated_sql, &m.intent, &card);
        let right_check = match m.class {
            MutationClass::Unit => !v.unit_consistent,
            MutationClass::Period => !v.temporal_aligned,
            MutationClass::Qualifier => !v.qualifier_correct,
        };
        if v.passed() || !right_check {
            missed.push(format!("{:?}/{}: {}", m.class, m.operator, m.mutated_sql));
        }
        ensure(
            validate_sql(&m.original_sql, &m.intent, &card).passed(),
            format!("original rejected: {}", m.original_sql),
        )?;
    }
    let classes: BTreeSet<_> = mutations.iter().map(|m| format!("{:?}", m.class)).collect();
    ensure(missed.is_empty(), format!("{} missed: {}", missed.len(), missed.join("; ")))?;
    Ok(format!(
        "{}/{} flagged by the matching check across {} classes",
        mutations.len(),
        mutations.len(),
        classes.len()
    ))
}

fn extraction_quality() -> Check {
    let run = evaluate(42, 200, RuleSet::all_on(), EvalOptions::default());
    let e = run.report.extraction;
    let msg = format!("F1 {:.4}, unit error rate {:.4}", e.f1, e.unit_error_rate);
    ensure(e.f1 >= 0.95 && e.unit_error_rate <= 0.01, msg.clone())?;
    Ok(msg)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        let run = evaluate(42, 200, RuleSet::all_on(), EvalOptions::default());
        run.write_to(&dir).map_err(|e| e.to_string())?;
        let store = KpiStore::open(dir.join("store.json"), SCHEMA_VERSION).map_err(|e| e.to_string())?;
        let audit = Arc::new(
            AuditLog::open(dir.join("query-audit.jsonl"), Arc::new(FixedClock::epoch())).map_err(|e| e.to_string())?,
        );
        let store = store.with_audit(audit);
        let agent = TextToSql::new(MetricTaxonomy::default(), Arc::new(MockBackend::new(0)));
        for q in ["Q4 2023 revenue", "average operating margin from 2021 to 2023", "latest EPS"] {
            let _ = agent.answer(&store, q);
        }
        outputs.push(dir_bytes(&dir));
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure(outputs[0] == outputs[1], format!("outputs differ among {names:?}"))?;
    let bytes: usize = outputs[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes, identical across runs", names.len()))
}

type Criterion = (&'static str, fn() -> Check, u64);

fn main() {
    let criteria: [Criterion; 9] = [
        ("range midpoint normalization", range_midpoints, 1),
        ("consensus sentence extraction", consensus_sentence, 1),
        ("guidance firewall", guidance_firewall, 2),
        ("rule ablation direction", ablation_direction, 60),
        ("store gate under random records", store_gate, 30),
        ("text-to-SQL equals oracle", oracle_equivalence, 30),
        ("seeded SQL mutations flagged", mutations_flagged, 10),
        ("synthetic extraction quality", extraction_quality, 60),
        ("end-to-end determinism", determinism, 120),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > Duration::from_secs(*budget) => Err(format!("{msg}; over the {budget}s budget")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS {} {name} [{:.2}s]: {msg}", i + 1, took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name} [{:.2}s]: {msg}", i + 1, took.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
