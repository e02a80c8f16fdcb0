//! Extraction agent: candidate KPI detection, context extraction, prompt
//! construction, backend completion and grounded parsing.

mod backend;
mod context;
mod parse;
mod prompt;
mod taxonomy;

pub use backend::{BackendError, CompletionBackend, MockBackend, ScriptedBackend};
pub use context::{derive_records, detect_candidates, extract_context, sentence_ranges, ContextualSpan};
pub use parse::parse_backend_output;
pub use prompt::{
    build_extraction_prompt, build_repair_prompt, TargetField, TargetSchema, EXTRACTION_INSTRUCTION, REPAIR_PREAMBLE,
};
pub use taxonomy::{AliasHit, MetricEntry, MetricTaxonomy, TaxonomyError, ValueClass};

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CharRange, Document, Section, SectionKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractionError {
    #[error("malformed completion: {0}")]
    MalformedCompletion(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Where a value came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub section_id: String,
    /// Byte range of the numeric span inside the section body.
    pub char_range: CharRange,
}

/// A preliminary `{metric, value, unit, period, qualifier}` record, still in
/// face values and raw phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawKpiRecord {
    pub metric: String,
    pub value_class: ValueClass,
    pub value_low: Decimal,
    pub value_high: Decimal,
    pub unit_token: String,
    pub period_phrase: String,
    pub period_anchor: Option<String>,
    pub period_from_header: bool,
    pub qualifier_cues: Vec<String>,
    pub provenance: Provenance,
    pub backend_confidence: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionFailure {
    pub section_id: String,
    pub error: String,
    /// Number of backend calls made for the section.
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub records: Vec<RawKpiRecord>,
    pub failures: Vec<SectionFailure>,
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Maximum concurrent backend calls.
    pub parallelism: usize,
    pub schema: TargetSchema,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { parallelism: 4, schema: TargetSchema::default() }
    }
}

/// Extract one section: prompt, complete, parse; one repair re-ask on a
/// malformed completion.
pub fn extract_section(
    section: &Section,
    doc_id: &str,
    backend: &dyn CompletionBackend,
    taxonomy: &MetricTaxonomy,
    schema: &TargetSchema,
) -> Result<Vec<RawKpiRecord>, SectionFailure> {
    let fail = |error: ExtractionError, attempts| SectionFailure {
        section_id: section.section_id.clone(),
        error: error.to_string(),
        attempts,
    };
    let prompt = build_extraction_prompt(section, taxonomy, schema);
    let completion = backend.complete(&prompt).map_err(|e| fail(e.into(), 1))?;
    match parse_backend_output(&completion, section, taxonomy, doc_id) {
        Ok(records) => Ok(records),
        Err(ExtractionError::MalformedCompletion(msg)) => {
            tracing::warn!(section = %section.section_id, %msg, "malformed completion, re-asking once");
            let repair = build_repair_prompt(&prompt, &msg);
            let completion = backend.complete(&repair).map_err(|e| fail(e.into(), 2))?;
            parse_backend_output(&completion, section, taxonomy, doc_id).map_err(|e| fail(e, 2))
        }
        Err(e) => Err(fail(e, 1)),
    }
}

fn extractable(section: &Section) -> bool {
    matches!(section.kind, SectionKind::Narrative | SectionKind::Table)
}

/// Run the extraction agent over every body section of a document.
///
/// Sections are processed concurrently with at most `opts.parallelism`
/// backend calls in flight. Output order is by section, then by offset,
/// independent of completion order. A failing section is reported and the
/// rest of the document continues.
pub fn extract_document(
    doc: &Document,
    backend: &dyn CompletionBackend,
    taxonomy: &MetricTaxonomy,
    opts: &ExtractOptions,
) -> ExtractionReport {
    let sections: Vec<(usize, &Section)> = doc.sections.iter().enumerate().filter(|(_, s)| extractable(s)).collect();

    let run = |&(i, s): &(usize, &Section)| (i, extract_section(s, &doc.doc_id, backend, taxonomy, &opts.schema));
    let mut results: Vec<(usize, Result<Vec<RawKpiRecord>, SectionFailure>)> = if opts.parallelism <= 1 {
        sections.iter().map(run).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(opts.parallelism).build() {
            Ok(pool) => pool.install(|| sections.par_iter().map(run).collect()),
            Err(e) => {
                tracing::warn!(error = %e, "falling back to sequential extraction");
                sections.iter().map(run).collect()
            }
        }
    };
    results.sort_by_key(|(i, _)| *i);

    let mut report = ExtractionReport::default();
    for (_, result) in results {
        match result {
            Ok(mut records) => {
                records.sort_by(|a, b| {
                    a.provenance.char_range.cmp(&b.provenance.char_range).then_with(|| a.metric.cmp(&b.metric))
                });
                report.records.extend(records);
            }
            Err(f) => report.failures.push(f),
        }
    }
    report
}
