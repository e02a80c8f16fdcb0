use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::MetricTaxonomy;
use crate::ingest::CharRange;
use crate::rules::{parse_explicit_period, Basis, Granularity, Status, MAX_YEAR, MIN_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregation {
    None,
    Avg,
    Sum,
    Min,
    Max,
    Count,
    Latest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatusFilter {
    ActualOnly,
    GuidanceOnly,
    Both,
}

impl StatusFilter {
    pub fn admits(self, s: Status) -> bool {
        match self {
            Self::ActualOnly => s == Status::Actual,
            Self::GuidanceOnly => s == Status::Guidance,
            Self::Both => true,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::ActualOnly => "actual",
            Self::GuidanceOnly => "guidance",
            Self::Both => "actual and guidance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisFilter {
    GAAP,
    NonGAAP,
}

impl BasisFilter {
    /// GAAP admits records whose basis was not stated; only an explicit
    /// non-GAAP figure is excluded.
    pub fn admits(self, b: Basis) -> bool {
        match self {
            Self::GAAP => b != Basis::NonGAAP,
            Self::NonGAAP => b == Basis::NonGAAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    YoY,
    QoQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodFilter {
    /// A single period; `year` of `None` means "most recent available".
    Period {
        granularity: Granularity,
        year: Option<i32>,
    },
    YearRange {
        granularity: Option<Granularity>,
        from: i32,
        to: i32,
    },
}

impl PeriodFilter {
    pub fn admits(&self, g: Granularity, y: i32) -> bool {
        match *self {
            PeriodFilter::Period { granularity, year } => granularity == g && year.is_none_or(|yy| yy == y),
            PeriodFilter::YearRange { granularity, from, to } => {
                granularity.is_none_or(|gg| gg == g) && (from..=to).contains(&y)
            }
        }
    }
}

impl fmt::Display for PeriodFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PeriodFilter::Period { granularity, year: Some(y) } => write!(f, "{granularity} {y}"),
            PeriodFilter::Period { granularity, year: None } => write!(f, "{granularity}"),
            PeriodFilter::YearRange { granularity: Some(g), from, to } => write!(f, "{g} {from} to {g} {to}"),
            PeriodFilter::YearRange { granularity: None, from, to } => write!(f, "{from} to {to}"),
        }
    }
}

/// Structured reading of an analyst question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryIntent {
    pub metrics: Vec<String>,
    pub period_filter: Option<PeriodFilter>,
    pub aggregation: Aggregation,
    pub basis_filter: Option<BasisFilter>,
    pub status_filter: StatusFilter,
    pub company_filter: Option<String>,
    pub comparison: Option<Comparison>,
}

impl QueryIntent {
    pub fn new(metric: &str) -> Self {
        Self {
            metrics: vec![metric.to_string()],
            period_filter: None,
            aggregation: Aggregation::None,
            basis_filter: None,
            status_filter: StatusFilter::ActualOnly,
            company_filter: None,
            comparison: None,
        }
    }

    /// Periods a comparison spans, newest first.
    pub fn comparison_periods(&self) -> Option<[(Granularity, i32); 2]> {
        let Some(PeriodFilter::Period { granularity: g, year: Some(y) }) = self.period_filter else {
            return None;
        };
        match self.comparison? {
            Comparison::YoY => Some([(g, y), (g, y - 1)]),
            Comparison::QoQ => g.previous_quarter().map(|(pg, dy)| [(g, y), (pg, y + dy)]),
        }
    }

    pub fn check(&self) -> Result<(), IntentError> {
        if self.metrics.is_empty() {
            return Err(IntentError::UnrecognizedMetric { phrase: String::new() });
        }
        if self.aggregation == Aggregation::Latest && self.metrics.len() > 1 {
            return Err(IntentError::Unsupported("latest value of more than one metric".into()));
        }
        if let Some(c) = self.comparison {
            if self.aggregation != Aggregation::None {
                return Err(IntentError::Unsupported("comparison combined with aggregation".into()));
            }
            match self.period_filter {
                Some(PeriodFilter::Period { granularity, .. }) => {
                    if c == Comparison::QoQ && !granularity.is_quarter() {
                        return Err(IntentError::Unsupported("quarter-over-quarter needs a quarter".into()));
                    }
                }
                _ => return Err(IntentError::Unsupported("comparison needs a single period".into())),
            }
        }
        if let Some(PeriodFilter::YearRange { from, to, .. }) = self.period_filter {
            if from > to {
                return Err(IntentError::Unsupported(format!("empty year range {from}..{to}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntentError {
    #[error("UnrecognizedMetric: no known metric in `{phrase}`")]
    UnrecognizedMetric { phrase: String },
    #[error("unsupported question: {0}")]
    Unsupported(String),
    #[error("empty question")]
    EmptyQuestion,
}

static RANGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:from|between)\s+(?:(FY|Q[1-4]|H[12])\s*)?(\d{4})\s+(?:to|and|through)\s+(?:(?:FY|Q[1-4]|H[12])\s*)?(\d{4})\b")
        .expect("range regex")
});

static PERIOD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:Q[1-4] ?\d{4}|H[12] ?\d{4}|FY ?\d{4}|fiscal(?: year)? \d{4}|\d{4}|Q[1-4]|H[12])\b")
        .expect("period regex")
});

static COMPANY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:for|at|of)\s+([A-Z][A-Z0-9.&]{1,9})\b|\b([A-Z][A-Z0-9.&]{1,9})'s\b").expect("company regex")
});

const NOT_COMPANIES: &[&str] = &["GAAP", "FY", "EPS", "FCF", "YOY", "QOQ", "Q1", "Q2", "Q3", "Q4", "H1", "H2", "USD"];

fn contains_word(text: &str, word: &str) -> bool {
    text.match_indices(word).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + word.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric() || c == '-')
            && !after.is_some_and(|c| c.is_alphanumeric() || c == '-')
    })
}

fn any_word(text: &str, words: &[&str]) -> bool {
    words.iter().any(|w| contains_word(text, w))
}

fn blank_out(text: &str, ranges: &[CharRange]) -> String {
    let mut s = text.to_string();
    for r in ranges {
        s.replace_range(r.start..r.end, &" ".repeat(r.end - r.start));
    }
    s
}

/// Read metrics, period, aggregation, qualifiers, company and comparison
/// from a question. Unless the question asks for guidance, only actual
/// figures are requested.
pub fn parse_intent(question: &str, taxonomy: &MetricTaxonomy) -> Result<QueryIntent, IntentError> {
    let q = question.trim();
    if q.is_empty() {
        return Err(IntentError::EmptyQuestion);
    }
    let hits = taxonomy.find_aliases(q);
    let mut metrics: Vec<String> = Vec::new();
    for h in &hits {
        if !metrics.contains(&h.canonical) {
            metrics.push(h.canonical.clone());
        }
    }
    if metrics.is_empty() {
        return Err(IntentError::UnrecognizedMetric { phrase: q.to_string() });
    }
    // Keywords inside a metric alias ("revenue yoy growth") are not cues.
    let rest = blank_out(q, &hits.iter().map(|h| h.range).collect::<Vec<_>>());
    let lower = rest.to_lowercase();

    let period_filter = if let Some(c) = RANGE.captures(&rest) {
        let from: i32 = c[2].parse().unwrap_or(0);
        let to: i32 = c[3].parse().unwrap_or(0);
        let granularity = c.get(1).and_then(|g| g.as_str().to_uppercase().parse().ok());
        Some(PeriodFilter::YearRange { granularity, from: from.min(to), to: from.max(to) })
    } else {
        PERIOD.find_iter(&rest).find_map(|m| {
            let s = m.as_str();
            if let Some((g, y)) = parse_explicit_period(s) {
                return Some(PeriodFilter::Period { granularity: g, year: Some(y) });
            }
            if s.len() == 4 && s.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            s.to_uppercase().parse().ok().map(|g| PeriodFilter::Period { granularity: g, year: None })
        })
    };

    let status_filter =
        if any_word(&lower, &["actual and guidance", "actuals and guidance", "including guidance", "all statuses"]) {
            StatusFilter::Both
        } else if any_word(&lower, &["guidance", "outlook", "forecast", "projected", "expected", "guided"]) {
            StatusFilter::GuidanceOnly
        } else {
            StatusFilter::ActualOnly
        };

    let basis_filter = if any_word(&lower, &["non-gaap", "adjusted"]) {
        Some(BasisFilter::NonGAAP)
    } else if contains_word(&lower, "gaap") {
        Some(BasisFilter::GAAP)
    } else {
        None
    };

    let comparison =
        if any_word(&lower, &["qoq", "quarter-over-quarter", "quarter over quarter", "sequential", "sequentially"]) {
            Some(Comparison::QoQ)
        } else if any_word(
            &lower,
            &["yoy", "year-over-year", "year over year", "versus last year", "vs last year", "compared to last year"],
        ) {
            Some(Comparison::YoY)
        } else {
            None
        };

    let aggregation = if comparison.is_some() {
        Aggregation::None
    } else if any_word(&lower, &["how many", "number of", "count"]) {
        Aggregation::Count
    } else if any_word(&lower, &["average", "mean", "avg"]) {
        Aggregation::Avg
    } else if any_word(&lower, &["total", "sum", "combined", "cumulative"]) {
        Aggregation::Sum
    } else if any_word(&lower, &["highest", "maximum", "max", "peak"]) {
        Aggregation::Max
    } else if any_word(&lower, &["lowest", "minimum", "min"]) {
        Aggregation::Min
    } else if any_word(&lower, &["latest", "most recent", "last reported"]) {
        Aggregation::Latest
    } else {
        Aggregation::None
    };

    let company_filter = COMPANY.captures_iter(&rest).find_map(|c| {
        let name = c.get(1).or_else(|| c.get(2))?.as_str().trim_end_matches('.');
        (!NOT_COMPANIES.contains(&name.to_uppercase().as_str())).then(|| name.to_string())
    });

    let intent = QueryIntent {
        metrics,
        period_filter: period_filter.filter(|p| match p {
            PeriodFilter::Period { year: Some(y), .. } => (MIN_YEAR..=MAX_YEAR).contains(y),
            PeriodFilter::YearRange { from, to, .. } => {
                (MIN_YEAR..=MAX_YEAR).contains(from) && (MIN_YEAR..=MAX_YEAR).contains(to)
            }
            _ => true,
        }),
        aggregation,
        basis_filter,
        status_filter,
        company_filter,
        comparison,
    };
    intent.check()?;
    Ok(intent)
}
