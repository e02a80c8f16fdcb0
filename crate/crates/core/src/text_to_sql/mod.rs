//! Question answering over the KPI store: intent parsing, SQL generation,
//! constraint validation, execution with feedback and explanation.

mod constraints;
mod explain;
mod generate;
mod intent;

pub use constraints::{validate_select, validate_sql, ConstraintKind, SqlValidation, Violation};
pub use explain::{explain, format_value};
pub use generate::{
    build_sql_prompt, build_sql_repair_prompt, extract_sql, template_sql, where_conditions, GenerationSource,
    SqlCandidate, SQL_INSTRUCTION, SQL_REPAIR_PREAMBLE,
};
pub use intent::{
    parse_intent, Aggregation, BasisFilter, Comparison, IntentError, PeriodFilter, QueryIntent, StatusFilter,
};

use std::sync::Arc;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{CompletionBackend, MetricTaxonomy};
use crate::rules::Unit;
use crate::sql::{query, Cell, ResultTable, Table};
use crate::store::{AuditEvent, KpiStore, SchemaCard};
use crate::validation::plausible_band;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryError {
    #[error("ClarificationNeeded: {0}")]
    ClarificationNeeded(IntentError),
    #[error("no valid SQL after {attempts} attempts: {detail}")]
    Exhausted { attempts: u32, detail: String },
    #[error("audit log failure: {0}")]
    Audit(String),
}

/// Everything the caller needs to trust an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBundle {
    pub question: String,
    pub intent: QueryIntent,
    #[serde(flatten)]
    pub candidate: SqlCandidate,
    pub validation: SqlValidation,
    #[serde(flatten)]
    pub result: ResultTable,
    pub explanation: String,
    pub attempts: u32,
    pub audit_id: String,
}

impl AnswerBundle {
    pub fn values(&self) -> Vec<(String, Option<Decimal>)> {
        answer_values(&self.intent, &self.result)
    }
}

/// A candidate that passed validation, executed and looked plausible.
#[derive(Debug, Clone, PartialEq)]
pub struct Executed {
    pub candidate: SqlCandidate,
    pub validation: SqlValidation,
    pub result: ResultTable,
    pub attempts: u32,
}

pub const DEFAULT_MAX_RETRIES: u32 = 2;

pub struct TextToSql {
    taxonomy: MetricTaxonomy,
    backend: Arc<dyn CompletionBackend>,
    max_retries: u32,
}

impl std::fmt::Debug for TextToSql {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TextToSql")
            .field("backend", &self.backend.name())
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

/// `(metric, value)` pairs a result answers with, sorted.
pub fn answer_values(intent: &QueryIntent, result: &ResultTable) -> Vec<(String, Option<Decimal>)> {
    let metric_col = result.column_index("metric");
    let value_col = result.column_index("value").or_else(|| result.columns.len().checked_sub(1));
    let Some(v) = value_col else { return Vec::new() };
    let mut out: Vec<(String, Option<Decimal>)> = result
        .rows
        .iter()
        .map(|r| {
            let metric = metric_col
                .filter(|&m| m != v)
                .and_then(|m| r[m].as_text())
                .map_or_else(|| intent.metrics.first().cloned().unwrap_or_default(), str::to_string);
            (metric, r[v].as_decimal())
        })
        .collect();
    out.sort();
    out
}

fn implausible(intent: &QueryIntent, result: &ResultTable, unit_of: &dyn Fn(&str) -> Option<Unit>) -> Option<String> {
    if result.is_empty() {
        return Some("the query returned no rows".into());
    }
    let values = answer_values(intent, result);
    if values.iter().all(|(_, v)| v.is_none()) {
        return Some("every returned value is NULL".into());
    }
    if matches!(intent.aggregation, Aggregation::Count | Aggregation::Sum) {
        return None;
    }
    for (metric, v) in &values {
        let (Some(v), Some(unit)) = (v, unit_of(metric)) else { continue };
        if unit == Unit::Percent && plausible_band(metric, unit).is_some_and(|b| !b.contains(*v)) {
            return Some(format!("{metric} value {v}% is outside the plausible range"));
        }
    }
    None
}

impl TextToSql {
    pub fn new(taxonomy: MetricTaxonomy, backend: Arc<dyn CompletionBackend>) -> Self {
        Self { taxonomy, backend, max_retries: DEFAULT_MAX_RETRIES }
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn taxonomy(&self) -> &MetricTaxonomy {
        &self.taxonomy
    }

    fn unit_of(&self) -> impl Fn(&str) -> Option<Unit> + '_ {
        |m| self.taxonomy.value_class(m).map(Unit::for_class)
    }

    fn try_candidate(
        &self,
        sql: &str,
        intent: &QueryIntent,
        card: &SchemaCard,
        table: &Table,
        lenient: bool,
    ) -> Result<(SqlValidation, ResultTable), String> {
        let validation = validate_sql(sql, intent, card);
        if !validation.passed() {
            return Err(validation.feedback());
        }
        let result = query(table, sql).map_err(|e| e.to_string())?;
        if !lenient {
            if let Some(why) = implausible(intent, &result, &self.unit_of()) {
                return Err(format!("[Plausibility] {why}"));
            }
        }
        Ok((validation, result))
    }

    /// Ask the backend for SQL, re-asking with the validator's feedback,
    /// then fall back to the template query. At most `max_retries + 1`
    /// candidates are tried, the template always last.
    pub fn execute_with_feedback(
        &self,
        question: &str,
        intent: &QueryIntent,
        card: &SchemaCard,
        table: &Table,
    ) -> Result<Executed, QueryError> {
        let prompt = build_sql_prompt(question, intent, card);
        let mut attempts = 0u32;
        let mut last: Option<(String, String)> = None;
        for round in 0..self.max_retries {
            let p = match &last {
                None => prompt.clone(),
                Some((sql, feedback)) => build_sql_repair_prompt(&prompt, sql, feedback),
            };
            let Ok(completion) = self.backend.complete(&p) else { break };
            let Some(sql) = extract_sql(&completion) else { break };
            attempts += 1;
            let generation_source = if round == 0 { GenerationSource::Backend } else { GenerationSource::Regenerated };
            match self.try_candidate(&sql, intent, card, table, false) {
                Ok((validation, result)) => {
                    let candidate = SqlCandidate { sql, generation_source, attempt: attempts };
                    return Ok(Executed { candidate, validation, result, attempts });
                }
                Err(feedback) => {
                    tracing::debug!(%sql, %feedback, "candidate rejected");
                    last = Some((sql, feedback));
                }
            }
        }
        attempts += 1;
        let sql = template_sql(intent);
        match self.try_candidate(&sql, intent, card, table, true) {
            Ok((validation, result)) => {
                let candidate = SqlCandidate { sql, generation_source: GenerationSource::Template, attempt: attempts };
                Ok(Executed { candidate, validation, result, attempts })
            }
            Err(detail) => Err(QueryError::Exhausted { attempts, detail }),
        }
    }

    /// Bind an open period ("Q4" with no year) to the latest year the store
    /// holds for the requested metrics.
    pub fn resolve_open_year(&self, store: &KpiStore, intent: &QueryIntent) -> QueryIntent {
        let mut intent = intent.clone();
        if let Some(PeriodFilter::Period { granularity, year: None }) = intent.period_filter {
            let latest = store
                .records()
                .iter()
                .filter(|r| {
                    intent.metrics.contains(&r.metric)
                        && r.period.granularity == granularity
                        && intent.status_filter.admits(r.qualifier.status)
                        && intent.basis_filter.is_none_or(|b| b.admits(r.qualifier.basis))
                        && intent.company_filter.as_ref().is_none_or(|c| *c == r.company)
                })
                .map(|r| r.period.year)
                .max();
            if let Some(y) = latest {
                intent.period_filter = Some(PeriodFilter::Period { granularity, year: Some(y) });
            }
        }
        intent
    }

    pub fn answer(&self, store: &KpiStore, question: &str) -> Result<AnswerBundle, QueryError> {
        match parse_intent(question, &self.taxonomy) {
            Ok(intent) => self.answer_intent(store, question, &intent),
            Err(e) => {
                let event = AuditEvent::Query {
                    question: question.to_string(),
                    sql: None,
                    attempts: 0,
                    row_count: 0,
                    passed_validation: false,
                    detail: Some(e.to_string()),
                };
                store.audit().append(event).map_err(|e| QueryError::Audit(e.to_string()))?;
                Err(QueryError::ClarificationNeeded(e))
            }
        }
    }

    pub fn answer_intent(
        &self,
        store: &KpiStore,
        question: &str,
        intent: &QueryIntent,
    ) -> Result<AnswerBundle, QueryError> {
        intent.check().map_err(QueryError::ClarificationNeeded)?;
        let intent = self.resolve_open_year(store, intent);
        let card = store.export_schema_card(&self.taxonomy);
        let table = store.table();
        let executed = self.execute_with_feedback(question, &intent, &card, &table);
        let event = match &executed {
            Ok(x) => AuditEvent::Query {
                question: question.to_string(),
                sql: Some(x.candidate.sql.clone()),
                attempts: x.attempts,
                row_count: x.result.row_count,
                passed_validation: x.validation.passed(),
                detail: None,
            },
            Err(e) => AuditEvent::Query {
                question: question.to_string(),
                sql: None,
                attempts: match e {
                    QueryError::Exhausted { attempts, .. } => *attempts,
                    _ => 0,
                },
                row_count: 0,
                passed_validation: false,
                detail: Some(e.to_string()),
            },
        };
        let audit_id = store.audit().append(event).map_err(|e| QueryError::Audit(e.to_string()))?;
        let Executed { candidate, validation, result, attempts } = executed?;
        let explanation = explain(&intent, &result, &self.unit_of());
        Ok(AnswerBundle {
            question: question.to_string(),
            intent,
            candidate,
            validation,
            result,
            explanation,
            attempts,
            audit_id,
        })
    }
}

/// First cell of a single-row result, for callers that expect a scalar.
pub fn scalar(result: &ResultTable, column: &str) -> Option<Cell> {
    match result.rows.as_slice() {
        [row] => result.column_index(column).map(|i| row[i].clone()),
        _ => None,
    }
}
