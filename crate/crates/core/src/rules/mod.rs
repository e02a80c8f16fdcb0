//! Domain rule injection: range midpoints, unit scaling, fiscal period
//! resolution and qualifier classification, each individually switchable.

mod period;
mod unit;

pub use period::{
    is_relative_phrase, parse_explicit_period, resolve_period, FiscalPeriod, Granularity, ResolvedFrom, MAX_YEAR,
    MIN_YEAR,
};
pub use unit::{resolve_unit, scale_of, scale_word, ResolvedUnit, Unit};

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{Provenance, RawKpiRecord, ValueClass};
use crate::ingest::DocumentMeta;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleError {
    #[error("invalid range: low {low} exceeds high {high}")]
    InvalidRange { low: Decimal, high: Decimal },
    #[error("unit token `{token}` conflicts with value class {class:?}")]
    UnitClassConflict { token: String, class: ValueClass },
    #[error("unknown unit token `{0}`")]
    UnknownUnitToken(String),
    #[error("value overflows decimal range after scaling")]
    ValueOverflow,
    #[error("period could not be resolved")]
    UnresolvedPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    GAAP,
    NonGAAP,
    Unstated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Actual,
    Guidance,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Self::GAAP, Self::NonGAAP, Self::Unstated];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GAAP => "GAAP",
            Self::NonGAAP => "NonGAAP",
            Self::Unstated => "Unstated",
        }
    }
}

impl Status {
    pub const ALL: [Status; 2] = [Self::Actual, Self::Guidance];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Actual => "Actual",
            Self::Guidance => "Guidance",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Qualifier {
    pub basis: Basis,
    pub status: Status,
}

impl Default for Qualifier {
    fn default() -> Self {
        Self { basis: Basis::Unstated, status: Status::Actual }
    }
}

pub const FORWARD_CUES: &[&str] = &["expects", "expected", "guidance", "outlook", "will be"];

pub fn is_forward_cue(cue: &str) -> bool {
    FORWARD_CUES.iter().any(|c| c.eq_ignore_ascii_case(cue.trim()))
}

pub fn classify_qualifier<S: AsRef<str>>(cues: &[S]) -> Qualifier {
    let status = if cues.iter().any(|c| is_forward_cue(c.as_ref())) { Status::Guidance } else { Status::Actual };
    let lower: Vec<String> = cues.iter().map(|c| c.as_ref().trim().to_ascii_lowercase()).collect();
    let basis = if lower.iter().any(|c| c == "non-gaap" || c == "adjusted") {
        Basis::NonGAAP
    } else if lower.iter().any(|c| c == "gaap") {
        Basis::GAAP
    } else {
        Basis::Unstated
    };
    Qualifier { basis, status }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedRange {
    pub value: Decimal,
    pub low: Decimal,
    pub high: Decimal,
}

pub fn normalize_range(low: Decimal, high: Decimal) -> Result<NormalizedRange, RuleError> {
    if low > high {
        return Err(RuleError::InvalidRange { low, high });
    }
    let sum = low.checked_add(high).ok_or(RuleError::ValueOverflow)?;
    Ok(NormalizedRange { value: sum / Decimal::TWO, low, high })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    RangeMidpoint,
    UnitResolution,
    PeriodResolution,
    QualifierClassification,
}

impl RuleName {
    pub const ALL: [RuleName; 4] =
        [Self::RangeMidpoint, Self::UnitResolution, Self::PeriodResolution, Self::QualifierClassification];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RangeMidpoint => "range_midpoint",
            Self::UnitResolution => "unit_resolution",
            Self::PeriodResolution => "period_resolution",
            Self::QualifierClassification => "qualifier_classification",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error(
    "unknown rule `{0}` (expected one of range_midpoint, unit_resolution, period_resolution, qualifier_classification)"
)]
pub struct UnknownRule(pub String);

impl FromStr for RuleName {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().replace('-', "_");
        Self::ALL.into_iter().find(|r| r.as_str() == s).ok_or(UnknownRule(s))
    }
}

/// Rule toggles. Everything is on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSet {
    pub range_midpoint: bool,
    pub unit_resolution: bool,
    pub period_resolution: bool,
    pub qualifier_classification: bool,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::all_on()
    }
}

impl RuleSet {
    pub fn all_on() -> Self {
        Self { range_midpoint: true, unit_resolution: true, period_resolution: true, qualifier_classification: true }
    }

    pub fn all_off() -> Self {
        Self {
            range_midpoint: false,
            unit_resolution: false,
            period_resolution: false,
            qualifier_classification: false,
        }
    }

    pub fn is_enabled(&self, rule: RuleName) -> bool {
        match rule {
            RuleName::RangeMidpoint => self.range_midpoint,
            RuleName::UnitResolution => self.unit_resolution,
            RuleName::PeriodResolution => self.period_resolution,
            RuleName::QualifierClassification => self.qualifier_classification,
        }
    }

    pub fn set(&mut self, rule: RuleName, on: bool) {
        match rule {
            RuleName::RangeMidpoint => self.range_midpoint = on,
            RuleName::UnitResolution => self.unit_resolution = on,
            RuleName::PeriodResolution => self.period_resolution = on,
            RuleName::QualifierClassification => self.qualifier_classification = on,
        }
    }

    pub fn without(mut self, rule: RuleName) -> Self {
        self.set(rule, false);
        self
    }

    pub fn enabled(&self) -> Vec<RuleName> {
        RuleName::ALL.into_iter().filter(|r| self.is_enabled(*r)).collect()
    }

    /// Apply `--no-rule=<name>` style overrides.
    pub fn disable_named<S: AsRef<str>>(&mut self, names: &[S]) -> Result<(), UnknownRule> {
        for n in names {
            self.set(n.as_ref().parse()?, false);
        }
        Ok(())
    }

    /// Short label such as `all-on`, `all-off` or `no-unit_resolution`.
    pub fn label(&self) -> String {
        let off: Vec<&str> = RuleName::ALL.iter().filter(|r| !self.is_enabled(**r)).map(|r| r.as_str()).collect();
        match off.len() {
            0 => "all-on".to_string(),
            4 => "all-off".to_string(),
            _ => format!("no-{}", off.join("+")),
        }
    }
}

/// A normalized, schema-shaped KPI record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub metric: String,
    pub value: Decimal,
    pub value_low: Decimal,
    pub value_high: Decimal,
    pub unit: Unit,
    pub scale_applied: Decimal,
    pub period: FiscalPeriod,
    pub qualifier: Qualifier,
    pub confidence: Decimal,
    pub provenance: Provenance,
    pub rules_applied: Vec<RuleName>,
    pub qualifier_cues: Vec<String>,
    pub company: String,
    pub published_on: NaiveDate,
}

/// Identity of a record in the store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub doc_id: String,
    pub section_id: String,
    pub metric: String,
    pub granularity: Granularity,
    pub year: i32,
    pub status: Status,
}

impl KpiRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            doc_id: self.provenance.doc_id.clone(),
            section_id: self.provenance.section_id.clone(),
            metric: self.metric.clone(),
            granularity: self.period.granularity,
            year: self.period.year,
            status: self.qualifier.status,
        }
    }

    pub fn is_range(&self) -> bool {
        self.value_low != self.value_high
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{} {}/{}",
            self.doc_id, self.section_id, self.metric, self.granularity, self.year, self.status
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("{metric} at {}:{}..{} rejected: {reason}", provenance.section_id, provenance.char_range.start, provenance.char_range.end)]
pub struct Rejection {
    pub reason: RuleError,
    pub metric: String,
    pub provenance: Provenance,
}

fn fallback_period(published_on: NaiveDate) -> FiscalPeriod {
    FiscalPeriod::explicit(Granularity::FY, published_on.year())
}

/// Period resolution with the rule switched off: phrases are read at face
/// value, a relative phrase collapses onto its anchor and anything else
/// defaults to the publication year.
fn naive_period(raw: &RawKpiRecord, published_on: NaiveDate) -> FiscalPeriod {
    if raw.period_from_header {
        return fallback_period(published_on);
    }
    parse_explicit_period(&raw.period_phrase)
        .or_else(|| raw.period_anchor.as_deref().and_then(parse_explicit_period))
        .map_or_else(|| fallback_period(published_on), |(g, y)| FiscalPeriod::explicit(g, y))
}

/// Compose the four rules over one raw record.
#[allow(clippy::result_large_err)]
pub fn apply_rules(raw: &RawKpiRecord, rules: &RuleSet, meta: &DocumentMeta) -> Result<KpiRecord, Rejection> {
    let reject = |reason| Rejection { reason, metric: raw.metric.clone(), provenance: raw.provenance.clone() };

    let face = if rules.range_midpoint {
        normalize_range(raw.value_low, raw.value_high).map_err(reject)?
    } else {
        NormalizedRange { value: raw.value_low, low: raw.value_low, high: raw.value_low }
    };

    let (value, value_low, value_high, unit, scale_applied) = if rules.unit_resolution {
        let v = resolve_unit(face.value, &raw.unit_token, raw.value_class).map_err(reject)?;
        let scale = |x: Decimal| x.checked_mul(v.scale_applied).ok_or(RuleError::ValueOverflow);
        (v.value, scale(face.low).map_err(reject)?, scale(face.high).map_err(reject)?, v.unit, v.scale_applied)
    } else {
        (face.value, face.low, face.high, Unit::for_class(raw.value_class), Decimal::ONE)
    };

    let period = if rules.period_resolution {
        let mut p = resolve_period(&raw.period_phrase, raw.period_anchor.as_deref());
        if !p.is_resolved() {
            return Err(reject(RuleError::UnresolvedPeriod));
        }
        if raw.period_from_header && p.resolved_from == ResolvedFrom::Explicit {
            p.resolved_from = ResolvedFrom::HeaderFallback;
        }
        p
    } else {
        naive_period(raw, meta.published_on)
    };

    let qualifier =
        if rules.qualifier_classification { classify_qualifier(&raw.qualifier_cues) } else { Qualifier::default() };

    Ok(KpiRecord {
        metric: raw.metric.clone(),
        value,
        value_low,
        value_high,
        unit,
        scale_applied,
        period,
        qualifier,
        confidence: raw.backend_confidence.clamp(Decimal::ZERO, Decimal::ONE),
        provenance: raw.provenance.clone(),
        rules_applied: rules.enabled(),
        qualifier_cues: raw.qualifier_cues.clone(),
        company: meta.company.clone(),
        published_on: meta.published_on,
    })
}
