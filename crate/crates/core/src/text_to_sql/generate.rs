use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::intent::{Aggregation, BasisFilter, Comparison, PeriodFilter, QueryIntent, StatusFilter};
use crate::store::{SchemaCard, COLUMNS_SQL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationSource {
    Backend,
    Regenerated,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub sql: String,
    pub generation_source: GenerationSource,
    pub attempt: u32,
}

pub const SQL_INSTRUCTION: &str =
    "Translate the analyst question into one read-only SQL SELECT over the table described below.";
pub const SQL_REPAIR_PREAMBLE: &str = "The previous SQL was rejected. Fix it and answer with one SELECT only.";

const FEW_SHOT: &[(&str, &str)] = &[
    (
        "What was Q4 2024 operating margin?",
        "SELECT value FROM kpi WHERE metric = 'operating_margin' AND period_granularity = 'Q4' AND period_year = 2024 AND status = 'Actual'",
    ),
    (
        "Average FY revenue between 2021 and 2023",
        "SELECT AVG(value) AS avg_value FROM kpi WHERE metric = 'revenue' AND period_granularity = 'FY' AND period_year BETWEEN 2021 AND 2023 AND status = 'Actual'",
    ),
];

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn period_clause(intent: &QueryIntent) -> Option<String> {
    let p = intent.period_filter?;
    Some(match (p, intent.comparison) {
        (PeriodFilter::Period { granularity: g, year: Some(y) }, Some(Comparison::YoY)) => {
            format!("period_granularity = '{g}' AND period_year IN ({}, {y})", y - 1)
        }
        (PeriodFilter::Period { .. }, Some(Comparison::QoQ)) => {
            let [(g1, y1), (g0, y0)] = intent.comparison_periods()?;
            format!(
                "((period_granularity = '{g1}' AND period_year = {y1}) OR (period_granularity = '{g0}' AND period_year = {y0}))"
            )
        }
        (PeriodFilter::Period { granularity: g, year: Some(y) }, None) => {
            format!("period_granularity = '{g}' AND period_year = {y}")
        }
        (PeriodFilter::Period { granularity: g, year: None }, _) => format!("period_granularity = '{g}'"),
        (PeriodFilter::YearRange { granularity, from, to }, _) => {
            let years = format!("period_year BETWEEN {from} AND {to}");
            match granularity {
                Some(g) => format!("period_granularity = '{g}' AND {years}"),
                None => years,
            }
        }
    })
}

/// WHERE conditions for an intent, in a fixed order.
pub fn where_conditions(intent: &QueryIntent) -> Vec<String> {
    let mut w = Vec::new();
    match intent.metrics.as_slice() {
        [one] => w.push(format!("metric = {}", quote(one))),
        many => w.push(format!("metric IN ({})", many.iter().map(|m| quote(m)).collect::<Vec<_>>().join(", "))),
    }
    w.extend(period_clause(intent));
    match intent.status_filter {
        StatusFilter::ActualOnly => w.push("status = 'Actual'".into()),
        StatusFilter::GuidanceOnly => w.push("status = 'Guidance'".into()),
        StatusFilter::Both => {}
    }
    match intent.basis_filter {
        Some(BasisFilter::GAAP) => w.push("basis <> 'NonGAAP'".into()),
        Some(BasisFilter::NonGAAP) => w.push("basis = 'NonGAAP'".into()),
        None => {}
    }
    if let Some(c) = &intent.company_filter {
        w.push(format!("company = {}", quote(c)));
    }
    w
}

/// Deterministic SQL for an intent. Always valid against the `kpi` schema.
pub fn template_sql(intent: &QueryIntent) -> String {
    let filter = where_conditions(intent).join(" AND ");
    let multi = intent.metrics.len() > 1;
    let agg = |f: &str, arg: &str, alias: &str| {
        if multi {
            format!("SELECT metric, {f}({arg}) AS {alias} FROM kpi WHERE {filter} GROUP BY metric ORDER BY metric")
        } else {
            format!("SELECT {f}({arg}) AS {alias} FROM kpi WHERE {filter}")
        }
    };
    match intent.aggregation {
        Aggregation::None => format!(
            "SELECT {COLUMNS_SQL} FROM kpi WHERE {filter} ORDER BY metric, period_year DESC, period_granularity DESC, doc_id, section_id"
        ),
        Aggregation::Latest => format!(
            "SELECT {COLUMNS_SQL} FROM kpi WHERE {filter} ORDER BY period_year DESC, period_granularity DESC, published_on DESC, doc_id DESC, section_id DESC, status DESC LIMIT 1"
        ),
        Aggregation::Count => agg("COUNT", "*", "record_count"),
        Aggregation::Avg => agg("AVG", "value", "avg_value"),
        Aggregation::Sum => agg("SUM", "value", "sum_value"),
        Aggregation::Min => agg("MIN", "value", "min_value"),
        Aggregation::Max => agg("MAX", "value", "max_value"),
    }
}

pub fn build_sql_prompt(question: &str, intent: &QueryIntent, card: &SchemaCard) -> String {
    let mut p = format!("{SQL_INSTRUCTION}\n\n{}\n", card.to_prompt_text());
    p.push_str("Rules: filter status = 'Actual' unless guidance is asked for; keep units separate; use the exact fiscal period.\n\n");
    for (q, sql) in FEW_SHOT {
        p.push_str(&format!("Question: {q}\nSQL: {sql}\n\n"));
    }
    let intent_json = serde_json::to_string(intent).unwrap_or_default();
    p.push_str(&format!("Parsed intent: {intent_json}\nQuestion: {question}\nSQL:"));
    p
}

pub fn build_sql_repair_prompt(original_prompt: &str, rejected_sql: &str, feedback: &str) -> String {
    format!("{SQL_REPAIR_PREAMBLE}\nRejected SQL: {rejected_sql}\nProblems:\n{feedback}\n\n{original_prompt}")
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```(?:sql)?\s*(.*?)```").expect("fence regex"));
static SELECT_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)\bSELECT\b.*").expect("select regex"));

/// Pull a SQL statement out of a completion.
pub fn extract_sql(completion: &str) -> Option<String> {
    let body = FENCE.captures(completion).and_then(|c| c.get(1)).map_or(completion, |m| m.as_str());
    let sql = SELECT_LINE.find(body)?.as_str().trim();
    let sql = sql.split("\n\n").next().unwrap_or(sql).trim().trim_end_matches(';').trim();
    (!sql.is_empty()).then(|| sql.to_string())
}
