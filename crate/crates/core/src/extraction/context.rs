use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::taxonomy::{AliasHit, MetricTaxonomy, ValueClass};
use super::{Provenance, RawKpiRecord};
use crate::ingest::{detect_numeric_spans, CharRange, NumericSpan, Section, SectionKind};

/// Period phrases recognised inside a sentence, longest forms first.
static PERIOD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:Q[1-4] ?(?:19|20|21)\d{2}|FY ?(?:19|20|21)\d{2}|H[12] ?(?:19|20|21)\d{2}|fiscal(?: year)? (?:19|20|21)\d{2}|(?:last|prior|previous) year|a year ago|year-ago|prior-year|(?:19|20|21)\d{2})\b",
    )
    .expect("period regex")
});

static CUES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:non-GAAP|GAAP|expects|expected|expect|guidance|outlook|will be|adjusted|approximately)\b")
        .expect("cue regex")
});

const ABBREVIATIONS: &[&str] = &["inc", "corp", "co", "ltd", "vs", "approx", "no", "u.s", "mr", "ms", "dr"];

/// A numeric span paired with the metric alias it most plausibly reports,
/// plus the context needed to normalize it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualSpan {
    pub numeric: NumericSpan,
    pub metric_alias_hit: AliasHit,
    pub period_phrase: String,
    /// Explicit period co-mentioned with a relative phrase such as "last year".
    pub period_anchor: Option<String>,
    /// True when the period came from the enclosing header, not the sentence.
    pub period_from_header: bool,
    pub qualifier_cues: Vec<String>,
    pub sentence: String,
    /// Sentence location within the section body.
    pub sentence_range: CharRange,
    pub section_title: String,
    pub doc_id: String,
    pub section_id: String,
}

/// Sentence ranges of a section body. Table sections split per line.
pub fn sentence_ranges(text: &str, kind: SectionKind) -> Vec<CharRange> {
    let mut out = Vec::new();
    if kind == SectionKind::Table {
        let mut offset = 0;
        for line in text.split('\n') {
            let lead = line.len() - line.trim_start().len();
            let t = line.trim();
            if !t.is_empty() {
                out.push(CharRange::new(offset + lead, offset + lead + t.len()));
            }
            offset += line.len() + 1;
        }
        return out;
    }

    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if matches!(b, b'.' | b'!' | b'?') {
            let after = i + 1;
            let at_end = text[after..].trim().is_empty();
            let followed_by_space = bytes.get(after).is_some_and(|c| c.is_ascii_whitespace());
            if at_end || (followed_by_space && starts_sentence(&text[after..]) && !is_abbreviation(&text[start..i])) {
                push_trimmed(&mut out, text, start, after);
                start = after;
                if at_end {
                    break;
                }
            }
        }
        i += 1;
    }
    push_trimmed(&mut out, text, start, text.len());
    out
}

fn push_trimmed(out: &mut Vec<CharRange>, text: &str, start: usize, end: usize) {
    if start >= end {
        return;
    }
    let piece = &text[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        out.push(CharRange::new(start + lead, start + lead + trimmed.len()));
    }
}

fn starts_sentence(rest: &str) -> bool {
    rest.trim_start()
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit() || matches!(c, '$' | '"' | '\u{201C}' | '('))
}

fn is_abbreviation(before: &str) -> bool {
    let word: String = before
        .chars()
        .rev()
        .take_while(|c| c.is_alphabetic() || *c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let w = word.to_lowercase();
    let after_digit = before[..before.len() - word.len()].ends_with(|c: char| c.is_ascii_digit());
    ABBREVIATIONS.contains(&w.as_str()) || (w.len() == 1 && !after_digit && w.chars().all(|c| c.is_alphabetic()))
}

/// Pair each numeric span with a taxonomy alias in the same sentence.
///
/// The alias closest before the number wins (ties go left); when no alias
/// precedes it, the closest alias after it is used. Spans with no alias in
/// their sentence are dropped.
pub fn detect_candidates(section: &Section, taxonomy: &MetricTaxonomy, doc_id: &str) -> Vec<ContextualSpan> {
    if matches!(section.kind, SectionKind::Header | SectionKind::Boilerplate) {
        return Vec::new();
    }
    let spans = detect_numeric_spans(section);
    if spans.is_empty() || taxonomy.is_empty() {
        return Vec::new();
    }
    let sentences = sentence_ranges(&section.body, section.kind);
    let aliases = taxonomy.find_aliases(&section.body);

    let mut out = Vec::new();
    for span in spans {
        let Some(sentence) = sentences.iter().find(|s| s.contains_range(&span.char_range)) else {
            continue;
        };
        let in_sentence = aliases.iter().filter(|a| sentence.contains_range(&a.range));
        let before = in_sentence
            .clone()
            .filter(|a| a.range.end <= span.char_range.start)
            .min_by_key(|a| (span.char_range.start - a.range.end, a.range.start));
        let chosen = before.or_else(|| {
            in_sentence
                .filter(|a| a.range.start >= span.char_range.end)
                .min_by_key(|a| (a.range.start - span.char_range.end, a.range.start))
        });
        let Some(hit) = chosen else {
            continue;
        };
        out.push(ContextualSpan {
            numeric: span,
            metric_alias_hit: hit.clone(),
            period_phrase: String::new(),
            period_anchor: None,
            period_from_header: false,
            qualifier_cues: Vec::new(),
            sentence: section.body[sentence.start..sentence.end].to_string(),
            sentence_range: *sentence,
            section_title: section.title.clone(),
            doc_id: doc_id.to_string(),
            section_id: section.section_id.clone(),
        });
    }
    out
}

fn is_relative(phrase: &str) -> bool {
    let p = phrase.to_lowercase();
    p.contains("year") && !p.contains("fiscal") && !p.chars().any(|c| c.is_ascii_digit())
}

fn period_matches(text: &str) -> Vec<(CharRange, String)> {
    PERIOD
        .find_iter(text)
        .map(|m| (CharRange::new(m.start(), m.end()), m.as_str().to_string()))
        .filter(|(_, s)| {
            // Bare four-digit tokens only count as years inside the supported window.
            s.parse::<i32>().map_or(true, |y| (1990..=2100).contains(&y))
        })
        .collect()
}

/// Fill in the period phrase and qualifier cues for a candidate.
pub fn extract_context(mut span: ContextualSpan) -> ContextualSpan {
    let local = CharRange::new(
        span.numeric.char_range.start - span.sentence_range.start,
        span.numeric.char_range.end - span.sentence_range.start,
    );
    let periods = period_matches(&span.sentence);
    let nearest = periods.iter().min_by_key(|(r, _)| (r.distance(&local), r.start));
    match nearest {
        Some((_, phrase)) => {
            span.period_phrase = phrase.clone();
            span.period_from_header = false;
            span.period_anchor = if is_relative(phrase) {
                periods
                    .iter()
                    .filter(|(_, p)| !is_relative(p))
                    .min_by_key(|(r, _)| (r.distance(&local), r.start))
                    .map(|(_, p)| p.clone())
            } else {
                None
            };
        }
        None => {
            let from_header = period_matches(&span.section_title).into_iter().find(|(_, p)| !is_relative(p));
            match from_header {
                Some((_, phrase)) => {
                    span.period_phrase = phrase;
                    span.period_from_header = true;
                }
                None => span.period_phrase.clear(),
            }
            span.period_anchor = None;
        }
    }

    span.qualifier_cues = cues_in(&span.sentence);
    span
}

/// Qualifier cues in order of first appearance, in canonical spelling.
pub(crate) fn cues_in(text: &str) -> Vec<String> {
    let mut cues: Vec<String> = Vec::new();
    for m in CUES.find_iter(text) {
        let cue = canonical_cue(m.as_str());
        if !cues.contains(&cue) {
            cues.push(cue);
        }
    }
    cues
}

fn canonical_cue(raw: &str) -> String {
    let lower = raw.to_lowercase();
    match lower.as_str() {
        "non-gaap" => "non-GAAP".into(),
        "gaap" => "GAAP".into(),
        "expect" => "expects".into(),
        other => other.split_whitespace().collect::<Vec<_>>().join(" "),
    }
}

/// The records a faithful extractor should emit for one section: every
/// candidate with context, mapped to its metric.
pub fn derive_records(section: &Section, taxonomy: &MetricTaxonomy, doc_id: &str) -> Vec<RawKpiRecord> {
    detect_candidates(section, taxonomy, doc_id)
        .into_iter()
        .map(extract_context)
        .filter_map(|c| record_from_context(&c, taxonomy))
        .collect()
}

pub(crate) fn record_from_context(c: &ContextualSpan, taxonomy: &MetricTaxonomy) -> Option<RawKpiRecord> {
    let entry = taxonomy.get(&c.metric_alias_hit.canonical)?;
    let (metric, class) = match (&entry.growth_metric, entry.value_class, c.numeric.kind.is_percent()) {
        (Some(growth), ValueClass::Currency, true) => (growth.clone(), ValueClass::Percent),
        _ => (entry.canonical_name.clone(), entry.value_class),
    };
    Some(RawKpiRecord {
        metric,
        value_class: class,
        value_low: c.numeric.parsed_low,
        value_high: c.numeric.parsed_high,
        unit_token: c.numeric.unit_token.clone(),
        period_phrase: c.period_phrase.clone(),
        period_anchor: c.period_anchor.clone(),
        period_from_header: c.period_from_header,
        qualifier_cues: c.qualifier_cues.clone(),
        provenance: Provenance {
            doc_id: c.doc_id.clone(),
            section_id: c.section_id.clone(),
            char_range: c.numeric.char_range,
        },
        backend_confidence: Decimal::ONE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narrative(body: &str, title: &str) -> Section {
        Section {
            section_id: "s0".into(),
            title: title.into(),
            body: body.into(),
            char_range: CharRange::new(0, body.len()),
            kind: SectionKind::Narrative,
        }
    }

    fn contexts(body: &str) -> Vec<ContextualSpan> {
        let t = MetricTaxonomy::financial_default();
        detect_candidates(&narrative(body, ""), &t, "d").into_iter().map(extract_context).collect()
    }

    #[test]
    fn sentence_splitting() {
        let text = "Revenue was $4.3 billion. Margin rose to 14.6% vs. 13%! Inc. names stay. Done";
        let parts: Vec<&str> =
            sentence_ranges(text, SectionKind::Narrative).iter().map(|r| &text[r.start..r.end]).collect();
        assert_eq!(
            parts,
            vec!["Revenue was $4.3 billion.", "Margin rose to 14.6% vs. 13%!", "Inc. names stay.", "Done"]
        );
    }

    #[test]
    fn scale_suffix_ends_sentence() {
        let text = "Revenue was $57.7B. For fiscal 2022, J. Smith expects more.";
        let n = sentence_ranges(text, SectionKind::Narrative).len();
        assert_eq!(n, 2);
    }

    #[test]
    fn operating_margin_with_period() {
        let c = contexts("Operating margin in Q4 2024 was 14.6%");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].metric_alias_hit.canonical, "operating_margin");
        assert_eq!(c[0].period_phrase, "Q4 2024");
        assert!(c[0].qualifier_cues.is_empty());
    }

    #[test]
    fn number_without_alias_dropped() {
        assert!(contexts("Headcount reached 5,000").is_empty());
    }

    #[test]
    fn revenue_growth_and_level() {
        let c = contexts("Revenue grew 15.2% to $2.52 billion");
        let names: Vec<_> = c.iter().map(|c| c.metric_alias_hit.canonical.as_str()).collect();
        assert_eq!(names, vec!["revenue", "revenue"]);
        assert_eq!(c[0].numeric.surface, "15.2%");
        assert_eq!(c[1].numeric.surface, "$2.52 billion");
    }

    #[test]
    fn guidance_sentence_context() {
        let c = contexts("The company expects operating margin to be between 15–17% in FY 2025.");
        assert_eq!(c[0].period_phrase, "FY 2025");
        assert_eq!(c[0].qualifier_cues, vec!["expects"]);
    }

    #[test]
    fn appendix_a_sentence_context() {
        let c = contexts("In Q1 2024, revenue grew 12% YoY to $4.3 billion, beating consensus by $150 million.");
        let got: Vec<_> = c
            .iter()
            .map(|c| (c.metric_alias_hit.canonical.as_str(), c.numeric.surface.as_str(), c.period_phrase.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("revenue", "12%", "Q1 2024"),
                ("revenue", "$4.3 billion", "Q1 2024"),
                ("consensus_delta", "$150 million", "Q1 2024"),
            ]
        );
        assert!(c.iter().all(|c| c.qualifier_cues.is_empty()));
    }

    #[test]
    fn relative_period_gets_anchor() {
        let c = contexts("Operating margin in Q4 2024 was 14.6%, up from 14.4% last year.");
        assert_eq!(c[0].period_phrase, "Q4 2024");
        assert_eq!(c[0].period_anchor, None);
        assert_eq!(c[1].period_phrase, "last year");
        assert_eq!(c[1].period_anchor.as_deref(), Some("Q4 2024"));
    }

    #[test]
    fn missing_period_without_header_is_empty() {
        let c = contexts("Gross margin was 41.2%.");
        assert_eq!(c[0].period_phrase, "");
        assert!(!c[0].period_from_header);
    }

    #[test]
    fn header_fallback() {
        let t = MetricTaxonomy::financial_default();
        let c: Vec<_> = detect_candidates(&narrative("Gross margin was 41.2%.", "Q3 2024 HIGHLIGHTS"), &t, "d")
            .into_iter()
            .map(extract_context)
            .collect();
        assert_eq!(c[0].period_phrase, "Q3 2024");
        assert!(c[0].period_from_header);
    }

    #[test]
    fn basis_cues() {
        let c = contexts("Adjusted EPS was $1.27 on a non-GAAP basis, approximately flat.");
        assert_eq!(c[0].qualifier_cues, vec!["adjusted", "non-GAAP", "approximately"]);
    }

    #[test]
    fn growth_percent_maps_to_companion_metric() {
        let t = MetricTaxonomy::financial_default();
        let recs = derive_records(&narrative("Revenue grew 15.2% to $2.52 billion.", ""), &t, "d");
        assert_eq!(recs[0].metric, "revenue_yoy_growth");
        assert_eq!(recs[0].value_class, ValueClass::Percent);
        assert_eq!(recs[1].metric, "revenue");
        assert_eq!(recs[1].unit_token, "billion");
    }

    #[test]
    fn sentence_contains_surface_and_period() {
        for c in contexts(
            "Operating margin in Q4 2024 was 14.6%, up from 14.4% last year. Revenue grew 15.2% to $2.52 billion.",
        ) {
            assert!(c.sentence.contains(&c.numeric.surface));
            assert!(c.period_phrase.is_empty() || c.sentence.contains(&c.period_phrase));
        }
    }
}
