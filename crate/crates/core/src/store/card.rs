use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::extraction::MetricTaxonomy;
use crate::rules::Unit;
use crate::sql::{Cell, ColumnType};

/// What a column's numbers mean; the SQL validator refuses to compare
/// columns whose semantics differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitSemantics {
    /// Amount in the unit named by the row's `unit` column.
    Measure,
    Multiplier,
    Year,
    Probability,
    Category,
    Identifier,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnCard {
    pub name: String,
    pub logical_type: ColumnType,
    pub unit_semantics: UnitSemantics,
    pub aliases: Vec<String>,
    /// Closed value domain, for enumerated columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCard {
    pub name: String,
    pub unit: Unit,
    pub aliases: Vec<String>,
}

/// Compact description of the store for prompt augmentation and clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaCard {
    pub table: String,
    pub schema_version: u32,
    pub columns: Vec<ColumnCard>,
    pub metrics: Vec<MetricCard>,
    pub sample_rows: Vec<Vec<Cell>>,
}

impl<'de> Deserialize<'de> for SchemaCard {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            table: String,
            schema_version: u32,
            columns: Vec<ColumnCard>,
            metrics: Vec<MetricCard>,
            sample_rows: Vec<Vec<serde_json::Value>>,
        }
        let raw = Raw::deserialize(d)?;
        let mut sample_rows = Vec::new();
        for r in &raw.sample_rows {
            if r.len() != raw.columns.len() {
                return Err(D::Error::custom("sample row width differs from column count"));
            }
            let row = r
                .iter()
                .zip(&raw.columns)
                .map(|(v, c)| Cell::from_json(v, c.logical_type))
                .collect::<Result<Vec<_>, _>>()
                .map_err(D::Error::custom)?;
            sample_rows.push(row);
        }
        Ok(Self {
            table: raw.table,
            schema_version: raw.schema_version,
            columns: raw.columns,
            metrics: raw.metrics,
            sample_rows,
        })
    }
}

impl SchemaCard {
    pub fn column(&self, name: &str) -> Option<&ColumnCard> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn metric_unit(&self, metric: &str) -> Option<Unit> {
        self.metrics.iter().find(|m| m.name == metric).map(|m| m.unit)
    }

    pub(crate) fn metrics_from(taxonomy: &MetricTaxonomy) -> Vec<MetricCard> {
        taxonomy
            .entries()
            .iter()
            .map(|e| MetricCard {
                name: e.canonical_name.clone(),
                unit: Unit::for_class(e.value_class),
                aliases: e.aliases.clone(),
            })
            .collect()
    }

    /// Compact text rendering for a SQL-generation prompt.
    pub fn to_prompt_text(&self) -> String {
        let mut s = format!("Table {} (schema v{}):\n", self.table, self.schema_version);
        for c in &self.columns {
            s.push_str(&format!("- {} {}", c.name, c.logical_type));
            if !c.values.is_empty() {
                s.push_str(&format!(" one of {}", c.values.join("|")));
            }
            if !c.aliases.is_empty() {
                s.push_str(&format!(" (aka {})", c.aliases.join(", ")));
            }
            s.push('\n');
        }
        s.push_str("Metrics:\n");
        for m in &self.metrics {
            s.push_str(&format!("- {} [{}]: {}\n", m.name, m.unit, m.aliases.join(", ")));
        }
        if !self.sample_rows.is_empty() {
            s.push_str("Sample rows:\n");
            for r in &self.sample_rows {
                let cells: Vec<String> = r.iter().map(Cell::to_string).collect();
                s.push_str(&format!("({})\n", cells.join(", ")));
            }
        }
        s
    }
}
