use serde::{Deserialize, Serialize};

use super::taxonomy::{MetricTaxonomy, ValueClass};
use crate::ingest::{Section, SectionKind};

pub const EXTRACTION_INSTRUCTION: &str = "Extract financial KPIs from the earnings text using the schema below. Output in JSON. Normalize units and link metrics to fiscal periods.";

pub const REPAIR_PREAMBLE: &str =
    "Your previous answer could not be parsed as JSON. Reply with a single valid JSON object and nothing else.";

pub(crate) const RESPONSE_FORMAT: &str = r#"Respond with {"records": [{"metric": <canonical name>, "value_low": <number>, "value_high": <number>, "unit": <unit token as written>, "period": <period phrase>, "period_anchor": <explicit period a relative phrase refers to, or null>, "period_source": "sentence" | "header", "qualifiers": [<cue words>], "span": [<start byte>, <end byte>], "confidence": <0..1>}]}. Only report values that appear in the text."#;

pub(crate) const TEXT_OPEN: &str = "<<<\n";
pub(crate) const TEXT_CLOSE: &str = "\n>>>";

/// Target output fields named in the extraction prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetField {
    pub name: String,
    /// Display unit such as "B" or "M".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_hint: Option<String>,
}

impl TargetField {
    pub fn new(name: impl Into<String>, unit_hint: Option<&str>) -> Self {
        Self { name: name.into(), unit_hint: unit_hint.map(str::to_string) }
    }

    fn render(&self) -> String {
        match &self.unit_hint {
            Some(u) => format!("{} ({u})", self.name),
            None => self.name.clone(),
        }
    }
}

/// The record layout the extraction prompt asks for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSchema {
    pub fields: Vec<TargetField>,
}

impl Default for TargetSchema {
    /// `{metric, value, unit, period, qualifier}`.
    fn default() -> Self {
        Self {
            fields: ["metric", "value", "unit", "period", "qualifier"]
                .iter()
                .map(|n| TargetField::new(*n, None))
                .collect(),
        }
    }
}

fn class_label(c: ValueClass) -> &'static str {
    match c {
        ValueClass::Currency => "Currency",
        ValueClass::Percent => "Percent",
        ValueClass::Count => "Count",
    }
}

pub(crate) fn parse_class_label(s: &str) -> Option<ValueClass> {
    match s {
        "Currency" => Some(ValueClass::Currency),
        "Percent" => Some(ValueClass::Percent),
        "Count" => Some(ValueClass::Count),
        _ => None,
    }
}

pub(crate) fn kind_label(k: SectionKind) -> &'static str {
    match k {
        SectionKind::Narrative => "Narrative",
        SectionKind::Table => "Table",
        SectionKind::Header => "Header",
        SectionKind::Boilerplate => "Boilerplate",
    }
}

/// Domain-aware extraction prompt: instruction, target schema, metric
/// aliases, response format and the section text. Output is a pure
/// function of the inputs.
pub fn build_extraction_prompt(section: &Section, taxonomy: &MetricTaxonomy, schema: &TargetSchema) -> String {
    let mut p = String::new();
    p.push_str(EXTRACTION_INSTRUCTION);
    p.push_str("\n\n");
    let fields: Vec<String> = schema.fields.iter().map(TargetField::render).collect();
    p.push_str("Schema includes: ");
    p.push_str(&fields.join(", "));
    p.push('\n');
    if !taxonomy.is_empty() {
        p.push_str("Metric aliases:\n");
        for e in taxonomy.entries() {
            p.push_str("- ");
            p.push_str(&e.canonical_name);
            p.push_str(" [");
            p.push_str(class_label(e.value_class));
            if let Some(g) = &e.growth_metric {
                p.push_str("; growth: ");
                p.push_str(g);
            }
            p.push_str("]: ");
            p.push_str(&e.aliases.join(" | "));
            p.push('\n');
        }
    }
    p.push_str(RESPONSE_FORMAT);
    p.push('\n');
    p.push_str(&format!("Section: {} ({})\n", section.section_id, kind_label(section.kind)));
    p.push_str(&format!("Header: {}\n", section.title));
    p.push_str("Text:\n");
    p.push_str(TEXT_OPEN);
    p.push_str(&section.body);
    p.push_str(TEXT_CLOSE);
    p
}

/// Prompt sent after a malformed completion.
pub fn build_repair_prompt(original: &str, error: &str) -> String {
    format!("{REPAIR_PREAMBLE}\nParse error: {error}\n\n{original}")
}
