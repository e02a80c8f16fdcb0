//! A small read-only SQL engine: `SELECT` with `WHERE`, `GROUP BY`,
//! `ORDER BY`, `LIMIT` and the five standard aggregates over one table.
//!
//! Three-valued logic follows standard SQL: comparisons with `NULL` are
//! unknown and unknown rows are filtered out.

pub mod ast;
mod exec;
mod lexer;
mod parser;

pub use exec::{execute, Cell, ColumnDef, ColumnType, ResultTable, Table};
pub use parser::parse_select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SqlError {
    #[error("SqlSyntaxError at offset {offset}: {message}")]
    SqlSyntaxError { offset: usize, message: String },
    #[error("NonSelectRejected: only a single SELECT is allowed ({0})")]
    NonSelectRejected(String),
    #[error("ExecutionError: {0}")]
    ExecutionError(String),
}

/// Parse and execute in one step.
pub fn query(table: &Table, sql: &str) -> Result<ResultTable, SqlError> {
    execute(table, &parse_select(sql)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal::Decimal;
    use std::str::FromStr;

    fn d(s: &str) -> Cell {
        Cell::Decimal(Decimal::from_str(s).unwrap())
    }

    fn t(s: &str) -> Cell {
        Cell::Text(s.into())
    }

    fn table() -> Table {
        let columns = vec![
            ColumnDef::new("metric", ColumnType::Text),
            ColumnDef::new("value", ColumnType::Decimal),
            ColumnDef::new("period_year", ColumnType::Int),
            ColumnDef::new("status", ColumnType::Text),
            ColumnDef::new("published_on", ColumnType::Date),
        ];
        let date = |s: &str| Cell::Date(s.parse().unwrap());
        let rows = vec![
            vec![t("operating_margin"), d("14.6"), Cell::Int(2024), t("Actual"), date("2025-02-01")],
            vec![t("operating_margin"), d("14.4"), Cell::Int(2023), t("Actual"), date("2025-02-01")],
            vec![t("operating_margin"), d("16.0"), Cell::Int(2025), t("Guidance"), date("2025-02-01")],
            vec![t("revenue"), d("4300000000"), Cell::Int(2024), t("Actual"), date("2024-04-20")],
            vec![t("revenue"), Cell::Null, Cell::Int(2023), t("Actual"), date("2024-04-20")],
        ];
        Table { name: "kpi".into(), columns, rows }
    }

    fn col0(sql: &str) -> Vec<Cell> {
        query(&table(), sql).unwrap().rows.into_iter().map(|mut r| r.remove(0)).collect()
    }

    #[test]
    fn filter_project() {
        assert_eq!(
            col0("SELECT value FROM kpi WHERE metric='operating_margin' AND period_year=2024 AND status='Actual'"),
            vec![d("14.6")]
        );
        assert_eq!(col0("SELECT value FROM kpi WHERE status <> 'Guidance' AND metric = 'operating_margin'").len(), 2);
        assert_eq!(
            col0("SELECT period_year FROM kpi WHERE period_year IN (2023, 2025) AND metric = 'operating_margin'"),
            vec![Cell::Int(2023), Cell::Int(2025)]
        );
        assert_eq!(col0("SELECT metric FROM kpi WHERE period_year BETWEEN 2024 AND 2025").len(), 3);
        assert_eq!(col0("SELECT metric FROM kpi WHERE published_on >= '2025-01-01'").len(), 3);
    }

    #[test]
    fn nulls_are_unknown() {
        assert_eq!(col0("SELECT period_year FROM kpi WHERE value > 0 AND metric = 'revenue'"), vec![Cell::Int(2024)]);
        assert_eq!(col0("SELECT period_year FROM kpi WHERE NOT value > 0 AND metric = 'revenue'"), vec![]);
        assert_eq!(col0("SELECT period_year FROM kpi WHERE value IS NULL"), vec![Cell::Int(2023)]);
        assert_eq!(col0("SELECT COUNT(value) FROM kpi"), vec![Cell::Int(4)]);
    }

    #[test]
    fn aggregates() {
        assert_eq!(col0("SELECT COUNT(*) FROM kpi"), vec![Cell::Int(5)]);
        assert_eq!(
            col0("SELECT AVG(value) FROM kpi WHERE metric = 'operating_margin' AND status = 'Actual'"),
            vec![d("14.5")]
        );
        assert_eq!(col0("SELECT SUM(period_year) FROM kpi WHERE metric = 'revenue'"), vec![Cell::Int(4047)]);
        assert_eq!(col0("SELECT MAX(value) FROM kpi WHERE metric = 'operating_margin'"), vec![d("16.0")]);
        assert_eq!(col0("SELECT MIN(published_on) FROM kpi"), vec![Cell::Date("2024-04-20".parse().unwrap())]);
        assert_eq!(col0("SELECT SUM(value) FROM kpi WHERE metric = 'nothing'"), vec![Cell::Null]);
        assert_eq!(col0("SELECT COUNT(*) FROM kpi WHERE metric = 'nothing'"), vec![Cell::Int(0)]);
        let r = query(&table(), "SELECT metric, COUNT(*) AS n FROM kpi GROUP BY metric ORDER BY n DESC").unwrap();
        assert_eq!(r.rows, vec![vec![t("operating_margin"), Cell::Int(3)], vec![t("revenue"), Cell::Int(2)]]);
        assert_eq!(r.columns[1].name, "n");
    }

    #[test]
    fn ordering_and_limit() {
        assert_eq!(
            col0("SELECT value FROM kpi WHERE metric = 'operating_margin' ORDER BY period_year DESC LIMIT 1"),
            vec![d("16.0")]
        );
        assert_eq!(col0("SELECT value FROM kpi ORDER BY value LIMIT 1"), vec![Cell::Null]);
    }

    #[test]
    fn execution_errors() {
        for bad in [
            "SELECT nope FROM kpi",
            "SELECT value FROM other",
            "SELECT value FROM kpi WHERE period_year = 'x' + 1",
            "SELECT value FROM kpi WHERE metric = 3",
            "SELECT metric, COUNT(*) FROM kpi",
            "SELECT * FROM kpi GROUP BY metric",
            "SELECT value FROM kpi WHERE COUNT(*) > 1",
            "SELECT SUM(metric) FROM kpi",
            "SELECT value = 1 FROM kpi",
            "SELECT value FROM kpi WHERE value",
        ] {
            assert!(matches!(query(&table(), bad), Err(SqlError::ExecutionError(_))), "{bad}");
        }
    }

    #[test]
    fn arithmetic() {
        assert_eq!(col0("SELECT value * 2 FROM kpi WHERE period_year = 2025"), vec![d("32.0")]);
        assert_eq!(col0("SELECT value / 0 FROM kpi WHERE period_year = 2025"), vec![Cell::Null]);
        assert_eq!(col0("SELECT period_year - 1 FROM kpi WHERE period_year = 2025"), vec![Cell::Int(2024)]);
    }

    #[test]
    fn result_table_json_round_trip() {
        let r = query(&table(), "SELECT * FROM kpi").unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"14.6\""));
        let back: ResultTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
