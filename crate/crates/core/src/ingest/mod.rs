//! Filing ingestion: decoding, text normalization, section segmentation and
//! numeric span detection.
//!
//! All offsets are byte offsets into UTF-8 strings, so `&text[range]` slicing
//! is always valid. Section ranges index the document's `raw_text`; numeric
//! span ranges index the owning section's `body`.

mod html;
mod numeric;
mod segment;

pub use html::strip_html;
pub use numeric::{detect_numeric_spans, parse_numeric_at, scan_numeric, RawNumeric};
pub use segment::{segment_sections, FormatHint};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rust_decimal::Decimal;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("input is not valid UTF-8: {0}")]
    Decode(String),
    #[error("document has no non-whitespace content")]
    EmptyDocument,
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    #[serde(alias = "10-K", alias = "10K")]
    TenK,
    #[serde(alias = "10-Q", alias = "10Q")]
    TenQ,
    #[serde(alias = "8-K", alias = "8K")]
    EightK,
    EarningsRelease,
    Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    PlainText,
    Html,
}

impl InputFormat {
    /// Guess the format from a file extension.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "txt" | "text" => Some(Self::PlainText),
            "html" | "htm" => Some(Self::Html),
            _ => None,
        }
    }
}

/// Metadata sidecar accompanying every filing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub company: String,
    pub published_on: NaiveDate,
    pub fiscal_year_end_month: u8,
}

impl DocumentMeta {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.doc_id.trim().is_empty() {
            return Err(IngestError::InvalidMetadata("doc_id is empty".into()));
        }
        if !(1..=12).contains(&self.fiscal_year_end_month) {
            return Err(IngestError::InvalidMetadata(format!(
                "fiscal_year_end_month {} outside 1..=12",
                self.fiscal_year_end_month
            )));
        }
        Ok(())
    }
}

/// Half-open byte range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharRange {
    pub start: usize,
    pub end: usize,
}

impl CharRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn shift(&self, by: usize) -> Self {
        Self::new(self.start + by, self.end + by)
    }

    pub fn contains_range(&self, other: &CharRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Gap in bytes between two ranges, zero when they touch or overlap.
    pub fn distance(&self, other: &CharRange) -> usize {
        other.start.saturating_sub(self.end).max(self.start.saturating_sub(other.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SectionKind {
    Narrative,
    Table,
    Header,
    Boilerplate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    /// Header text for `Header` sections; for body sections, the title of
    /// the closest preceding header (empty when there is none).
    pub title: String,
    pub body: String,
    pub char_range: CharRange,
    pub kind: SectionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpanKind {
    Scalar,
    Range,
    Percent,
    PercentRange,
    Currency,
    CurrencyRange,
}

impl SpanKind {
    pub fn is_range(self) -> bool {
        matches!(self, Self::Range | Self::PercentRange | Self::CurrencyRange)
    }

    pub fn is_percent(self) -> bool {
        matches!(self, Self::Percent | Self::PercentRange)
    }

    pub fn is_currency(self) -> bool {
        matches!(self, Self::Currency | Self::CurrencyRange)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericSpan {
    pub span_id: String,
    pub section_id: String,
    pub char_range: CharRange,
    pub surface: String,
    pub kind: SpanKind,
    pub parsed_low: Decimal,
    pub parsed_high: Decimal,
    pub unit_token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub company: String,
    pub published_on: NaiveDate,
    pub fiscal_year_end_month: u8,
    pub raw_text: String,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn meta(&self) -> DocumentMeta {
        DocumentMeta {
            doc_id: self.doc_id.clone(),
            source_kind: self.source_kind,
            company: self.company.clone(),
            published_on: self.published_on,
            fiscal_year_end_month: self.fiscal_year_end_month,
        }
    }

    pub fn section(&self, section_id: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }
}

/// Decode, normalize and segment one filing.
pub fn load_document(bytes: &[u8], format: InputFormat, meta: DocumentMeta) -> Result<Document, IngestError> {
    meta.validate()?;
    let decoded = std::str::from_utf8(bytes).map_err(|e| IngestError::Decode(e.to_string()))?;
    let (text, hints) = match format {
        InputFormat::PlainText => (normalize_text(decoded), Vec::new()),
        InputFormat::Html => {
            let stripped = strip_html(decoded);
            (stripped.text, stripped.table_blocks)
        }
    };
    if text.trim().is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let sections = segment_sections(&text, &hints);
    Ok(Document {
        doc_id: meta.doc_id,
        source_kind: meta.source_kind,
        company: meta.company,
        published_on: meta.published_on,
        fiscal_year_end_month: meta.fiscal_year_end_month,
        raw_text: text,
        sections,
    })
}

/// Line-ending and whitespace normalization shared by both input formats.
pub(crate) fn normalize_text(input: &str) -> String {
    let unified = input
        .replace("\r\n", "\n")
        .replace('\r', "\n")
        .replace(['\u{00A0}', '\u{2007}', '\u{202F}'], " ")
        .replace('\u{FEFF}', "");
    let lines: Vec<&str> = unified.lines().map(|l| l.trim_end()).collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    match (first, last) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}
