//! Reference documents used by examples, tests and the service smoke path.

use chrono::NaiveDate;

use crate::ingest::{load_document, Document, DocumentMeta, InputFormat, SourceKind};

/// Earnings-release paragraph with an actual margin, a prior-year figure,
/// revenue growth and a guidance range.
pub const GUIDANCE_RELEASE: &str = "Operating margin in Q4 2024 was 14.6%, up from 14.4% last year. Revenue grew 15.2% to $2.52 billion. The company expects operating margin to be between 15–17% in FY 2025.";

/// One sentence with an amount, a growth rate and a consensus delta.
pub const CONSENSUS_SENTENCE: &str =
    "In Q1 2024, revenue grew 12% YoY to $4.3 billion, beating consensus by $150 million.";

pub fn guidance_release_meta() -> DocumentMeta {
    DocumentMeta {
        doc_id: "acme-q4-2024".into(),
        source_kind: SourceKind::EarningsRelease,
        company: "ACME".into(),
        published_on: NaiveDate::from_ymd_opt(2025, 2, 1).expect("valid date"),
        fiscal_year_end_month: 12,
    }
}

pub fn consensus_sentence_meta() -> DocumentMeta {
    DocumentMeta {
        doc_id: "acme-q1-2024".into(),
        source_kind: SourceKind::EarningsRelease,
        company: "ACME".into(),
        published_on: NaiveDate::from_ymd_opt(2024, 4, 25).expect("valid date"),
        fiscal_year_end_month: 12,
    }
}

pub fn guidance_release() -> Document {
    load_document(GUIDANCE_RELEASE.as_bytes(), InputFormat::PlainText, guidance_release_meta()).expect("fixture loads")
}

pub fn consensus_sentence() -> Document {
    load_document(CONSENSUS_SENTENCE.as_bytes(), InputFormat::PlainText, consensus_sentence_meta())
        .expect("fixture loads")
}
