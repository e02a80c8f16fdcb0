//! Load an HTML filing, segment it and list the numeric spans per section.

use chrono::NaiveDate;
use finkpi::ingest::{detect_numeric_spans, load_document, DocumentMeta, InputFormat, SourceKind};

const FILING: &str = r#"<html><body>
<h2>Fourth Quarter Highlights</h2>
<p>Revenue in Q4 2024 was $2.52 billion. Gross margin was 61.3%.</p>
<h2>Outlook</h2>
<p>The company expects FY 2025 revenue between $10.1 and $10.4 billion.</p>
<table>
<tr><th>Metric</th><th>Q4 2024</th></tr>
<tr><td>Free cash flow</td><td>$412 million</td></tr>
</table>
</body></html>"#;

fn main() {
    let meta = DocumentMeta {
        doc_id: "acme-10q".into(),
        source_kind: SourceKind::EarningsRelease,
        company: "ACME".into(),
        published_on: NaiveDate::from_ymd_opt(2025, 2, 1).unwrap(),
        fiscal_year_end_month: 12,
    };
    let doc = load_document(FILING.as_bytes(), InputFormat::Html, meta).expect("filing loads");
    for section in &doc.sections {
        println!("[{}] {:?} {:?}", section.section_id, section.kind, section.title);
        for span in detect_numeric_spans(section) {
            println!(
                "    {:<16} {:?} low={} high={} unit={:?}",
                span.surface, span.kind, span.parsed_low, span.parsed_high, span.unit_token
            );
        }
    }
}
