//! Per-record consistency checks, confidence scoring and the schema gate
//! every record must clear before it reaches the store.

use std::fmt;

use chrono::Datelike;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::ingest::{parse_numeric_at, Document};
use crate::rules::{classify_qualifier, scale_of, KpiRecord, Status, Unit, MAX_YEAR, MIN_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckKind {
    ValueInSource,
    PeriodConsistent,
    UnitPlausible,
    RangeMidpoint,
    QualifierConsistent,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        Self::ValueInSource,
        Self::PeriodConsistent,
        Self::UnitPlausible,
        Self::RangeMidpoint,
        Self::QualifierConsistent,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckOutcome {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaCheck {
    pub check_id: String,
    pub kind: CheckKind,
    pub question: String,
    pub outcome: CheckOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disposition {
    Accepted,
    Corrected,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub field: String,
    pub from: Decimal,
    pub to: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub checks: Vec<QaCheck>,
    pub disposition: Disposition,
    pub corrections: Vec<Correction>,
}

impl ValidationOutcome {
    pub fn count(&self, outcome: CheckOutcome) -> usize {
        self.checks.iter().filter(|c| c.outcome == outcome).count()
    }

    pub fn check(&self, kind: CheckKind) -> Option<&QaCheck> {
        self.checks.iter().find(|c| c.kind == kind)
    }
}

/// Inclusive plausibility band; `None` on a side means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub min: Option<Decimal>,
    pub max: Option<Decimal>,
}

impl Band {
    pub fn contains(&self, v: Decimal) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

fn int(n: i64) -> Option<Decimal> {
    Some(Decimal::from(n))
}

/// Per-metric plausibility band, if one is defined.
pub fn plausible_band(metric: &str, unit: Unit) -> Option<Band> {
    match unit {
        Unit::Percent if metric.ends_with("margin") => Some(Band { min: int(-100), max: int(100) }),
        Unit::Percent => Some(Band { min: int(-100), max: int(1000) }),
        Unit::USD if metric == "revenue" => Some(Band { min: int(0), max: None }),
        Unit::USD => None,
        Unit::Count => Some(Band { min: int(0), max: None }),
    }
}

fn check(kind: CheckKind, question: String, outcome: CheckOutcome, detail: Option<String>) -> QaCheck {
    let id = match kind {
        CheckKind::ValueInSource => "value_in_source",
        CheckKind::PeriodConsistent => "period_consistent",
        CheckKind::UnitPlausible => "unit_plausible",
        CheckKind::RangeMidpoint => "range_midpoint",
        CheckKind::QualifierConsistent => "qualifier_consistent",
    };
    QaCheck { check_id: id.to_string(), kind, question, outcome, detail }
}

fn value_in_source(r: &KpiRecord, doc: &Document) -> QaCheck {
    let p = &r.provenance;
    let q = format!(
        "Does {}:{}..{} of {} state the reported {}?",
        p.section_id, p.char_range.start, p.char_range.end, p.doc_id, r.metric
    );
    let result = |o, d: Option<String>| check(CheckKind::ValueInSource, q.clone(), o, d);
    if p.doc_id.is_empty() || p.section_id.is_empty() {
        return result(CheckOutcome::Skipped, Some("record has no provenance".into()));
    }
    if p.doc_id != doc.doc_id {
        return result(CheckOutcome::Fail, Some(format!("provenance names document {}", p.doc_id)));
    }
    let Some(surface) = doc.section(&p.section_id).and_then(|s| s.body.get(p.char_range.start..p.char_range.end))
    else {
        return result(CheckOutcome::Fail, Some("provenance span is outside the document".into()));
    };
    let Some(parsed) = parse_numeric_at(surface) else {
        return result(CheckOutcome::Fail, Some(format!("`{surface}` is not a number")));
    };
    let low = parsed.low * r.scale_applied;
    let high = parsed.high * r.scale_applied;
    if r.value_low == low && r.value_high >= low && r.value_high <= high {
        result(CheckOutcome::Pass, None)
    } else {
        result(CheckOutcome::Fail, Some(format!("source reads `{surface}`")))
    }
}

fn unit_plausible(r: &KpiRecord) -> QaCheck {
    let q = format!("Is {} {} plausible for {}?", r.value, r.unit, r.metric);
    match plausible_band(&r.metric, r.unit) {
        None => check(CheckKind::UnitPlausible, q, CheckOutcome::Skipped, Some("no band for metric".into())),
        Some(b) if [r.value, r.value_low, r.value_high].iter().all(|v| b.contains(*v)) => {
            check(CheckKind::UnitPlausible, q, CheckOutcome::Pass, None)
        }
        Some(_) => check(CheckKind::UnitPlausible, q, CheckOutcome::Fail, Some("outside plausibility band".into())),
    }
}

fn period_consistent(r: &KpiRecord) -> QaCheck {
    let q = format!("Is {} consistent with a document published {}?", r.period, r.published_on);
    let published = r.published_on.year();
    let ok = r.period.is_resolved()
        && match r.qualifier.status {
            Status::Actual => (r.period.year - published).abs() <= 2,
            Status::Guidance => r.period.year >= published - 1,
        };
    let outcome = if ok { CheckOutcome::Pass } else { CheckOutcome::Fail };
    check(CheckKind::PeriodConsistent, q, outcome, None)
}

fn midpoint(r: &KpiRecord) -> Option<Decimal> {
    r.value_low.checked_add(r.value_high).map(|s| s / Decimal::TWO)
}

fn range_midpoint(r: &KpiRecord) -> QaCheck {
    let q = format!("Is {} the midpoint of [{}, {}]?", r.value, r.value_low, r.value_high);
    match midpoint(r) {
        Some(m) if m == r.value && r.value_low <= r.value_high => {
            check(CheckKind::RangeMidpoint, q, CheckOutcome::Pass, None)
        }
        Some(m) if r.value_low <= r.value_high => {
            check(CheckKind::RangeMidpoint, q, CheckOutcome::Fail, Some(format!("midpoint is {m}")))
        }
        _ => check(CheckKind::RangeMidpoint, q, CheckOutcome::Fail, Some("bounds are inverted".into())),
    }
}

fn qualifier_consistent(r: &KpiRecord) -> QaCheck {
    let q = format!("Do the cues {:?} imply {} {}?", r.qualifier_cues, r.qualifier.basis, r.qualifier.status);
    let derived = classify_qualifier(&r.qualifier_cues);
    if derived == r.qualifier {
        check(CheckKind::QualifierConsistent, q, CheckOutcome::Pass, None)
    } else {
        check(
            CheckKind::QualifierConsistent,
            q,
            CheckOutcome::Fail,
            Some(format!("cues imply {} {}", derived.basis, derived.status)),
        )
    }
}

/// Run the five targeted checks against a record and its source document.
pub fn run_checks(record: &KpiRecord, doc: &Document) -> ValidationOutcome {
    let checks = vec![
        value_in_source(record, doc),
        period_consistent(record),
        unit_plausible(record),
        range_midpoint(record),
        qualifier_consistent(record),
    ];
    let fails: Vec<&QaCheck> = checks.iter().filter(|c| c.outcome == CheckOutcome::Fail).collect();
    let fixable = |c: &&QaCheck| c.kind == CheckKind::RangeMidpoint && record.value_low <= record.value_high;
    let (disposition, corrections) = if fails.is_empty() {
        (Disposition::Accepted, Vec::new())
    } else if fails.iter().all(fixable) {
        let to = midpoint(record).unwrap_or(record.value);
        (Disposition::Corrected, vec![Correction { field: "value".into(), from: record.value, to }])
    } else {
        (Disposition::Flagged, Vec::new())
    };
    ValidationOutcome { checks, disposition, corrections }
}

pub fn score_confidence(_record: &KpiRecord, outcome: &ValidationOutcome) -> Decimal {
    let fails = Decimal::from(outcome.count(CheckOutcome::Fail));
    let skips = Decimal::from(outcome.count(CheckOutcome::Skipped));
    let score = (Decimal::ONE - Decimal::new(15, 2) * fails - Decimal::new(5, 2) * skips).max(Decimal::ZERO);
    if outcome.disposition == Disposition::Corrected {
        score.min(Decimal::new(85, 2))
    } else {
        score
    }
}

/// A record after validation: corrections applied and confidence scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedRecord {
    pub record: KpiRecord,
    pub outcome: ValidationOutcome,
}

pub fn validate_record(mut record: KpiRecord, doc: &Document) -> ValidatedRecord {
    let outcome = run_checks(&record, doc);
    for c in &outcome.corrections {
        if c.field == "value" {
            record.value = c.to;
        }
    }
    record.confidence = score_confidence(&record, &outcome);
    ValidatedRecord { record, outcome }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemaViolation {
    UnresolvedPeriod,
    YearOutOfRange(i32),
    EmptyMetric,
    InvertedBounds,
    ValueNotMidpoint,
    PercentOutOfBand,
    InvalidScale,
    ConfidenceOutOfRange,
    MissingProvenance,
    EmptyCompany,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::YearOutOfRange(y) => write!(f, "YearOutOfRange({y})"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// Every structural invariant a stored record must satisfy. Empty means valid.
pub fn validate_schema(r: &KpiRecord) -> Vec<SchemaViolation> {
    use SchemaViolation::*;
    if !r.period.is_resolved() {
        return vec![UnresolvedPeriod];
    }
    let mut v = Vec::new();
    if !(MIN_YEAR..=MAX_YEAR).contains(&r.period.year) {
        v.push(YearOutOfRange(r.period.year));
    }
    if r.metric.trim().is_empty() {
        v.push(EmptyMetric);
    }
    if r.value_low > r.value_high {
        v.push(InvertedBounds);
    } else if midpoint(r) != Some(r.value) {
        v.push(ValueNotMidpoint);
    }
    let pct = Band { min: int(-100), max: int(1000) };
    if r.unit == Unit::Percent && ![r.value, r.value_low, r.value_high].iter().all(|x| pct.contains(*x)) {
        v.push(PercentOutOfBand);
    }
    let known_scale =
        ["", "thousand", "million", "billion"].iter().filter_map(|w| scale_of(w)).any(|s| s == r.scale_applied);
    if !known_scale || (r.unit == Unit::Percent && r.scale_applied != Decimal::ONE) {
        v.push(InvalidScale);
    }
    if r.confidence < Decimal::ZERO || r.confidence > Decimal::ONE {
        v.push(ConfidenceOutOfRange);
    }
    let p = &r.provenance;
    if p.doc_id.is_empty() || p.section_id.is_empty() || p.char_range.start >= p.char_range.end {
        v.push(MissingProvenance);
    }
    if r.company.trim().is_empty() {
        v.push(EmptyCompany);
    }
    v
}
