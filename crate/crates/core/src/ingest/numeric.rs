use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::Decimal;

use super::{CharRange, NumericSpan, Section, SectionKind, SpanKind};

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?P<neg>[-−])?(?P<cur>\$ ?)?(?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)(?:(?P<word> ?(?:thousand|million|billion)\b)|(?P<letter>(?:bn|mn|[KMB])\b))?(?P<pct> ?%| percent\b)?",
    )
    .expect("number regex")
});

static DASH_CONNECTOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^ ?[–—-] ?").expect("dash regex"));
static TO_CONNECTOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^ to ").expect("to regex"));

const MONTHS: &[&str] = &[
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
    "jan",
    "feb",
    "mar",
    "apr",
    "jun",
    "jul",
    "aug",
    "sep",
    "sept",
    "oct",
    "nov",
    "dec",
];

/// One number (or number range) found in text, face value only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawNumeric {
    pub range: CharRange,
    pub low: Decimal,
    pub high: Decimal,
    pub currency: bool,
    pub percent: bool,
    /// Scale word exactly as written ("billion", "B", ...), empty if none.
    pub scale: String,
}

impl RawNumeric {
    pub fn kind(&self) -> SpanKind {
        let range = self.low < self.high;
        match (self.percent, self.currency, range) {
            (true, _, false) => SpanKind::Percent,
            (true, _, true) => SpanKind::PercentRange,
            (false, true, false) => SpanKind::Currency,
            (false, true, true) => SpanKind::CurrencyRange,
            (false, false, false) => SpanKind::Scalar,
            (false, false, true) => SpanKind::Range,
        }
    }

    pub fn unit_token(&self) -> String {
        if self.percent {
            "%".to_string()
        } else {
            self.scale.clone()
        }
    }
}

#[derive(Debug, Clone)]
struct Single {
    range: CharRange,
    value: Decimal,
    negative: bool,
    currency: bool,
    percent: bool,
    scale: String,
    plain_integer: bool,
}

/// Parse a single number starting exactly at `pos` (no range joining, no
/// boundary checks).
fn parse_single(text: &str, pos: usize) -> Option<Single> {
    let caps = NUMBER.captures(&text[pos..])?;
    let whole = caps.get(0)?;
    let num = caps.name("num")?.as_str();
    let mut value = Decimal::from_str(&num.replace(',', "")).ok()?;
    let negative = caps.name("neg").is_some();
    if negative {
        value = -value;
    }
    let scale =
        caps.name("word").or_else(|| caps.name("letter")).map(|m| m.as_str().trim().to_string()).unwrap_or_default();
    Some(Single {
        range: CharRange::new(pos, pos + whole.end()),
        value,
        negative,
        currency: caps.name("cur").is_some(),
        percent: caps.name("pct").is_some(),
        plain_integer: !num.contains([',', '.']),
        scale,
    })
}

fn prev_char(text: &str, pos: usize) -> Option<char> {
    text[..pos].chars().next_back()
}

fn next_char(text: &str, pos: usize) -> Option<char> {
    text[pos..].chars().next()
}

fn left_boundary_ok(text: &str, pos: usize) -> bool {
    match prev_char(text, pos) {
        None => true,
        Some(c) => !(c.is_alphanumeric() || c == '_' || c == '.' || c == ','),
    }
}

fn right_boundary_ok(text: &str, end: usize) -> bool {
    match next_char(text, end) {
        None => true,
        Some(c) if c.is_alphanumeric() || c == '_' => false,
        Some('-') => !text[end + 1..].starts_with(|c: char| c.is_alphabetic()),
        Some(_) => true,
    }
}

fn is_bare_year(n: &Single) -> bool {
    n.plain_integer
        && !n.currency
        && !n.percent
        && !n.negative
        && n.scale.is_empty()
        && n.range.len() == 4
        && (Decimal::from(1900)..=Decimal::from(2100)).contains(&n.value)
}

fn is_day_of_month(text: &str, n: &Single) -> bool {
    if !n.plain_integer || n.currency || n.percent || !n.scale.is_empty() {
        return false;
    }
    if n.value < Decimal::ONE || n.value > Decimal::from(31) {
        return false;
    }
    let before = text[..n.range.start].trim_end_matches(' ');
    let word: String = before
        .chars()
        .rev()
        .take_while(|c| c.is_alphabetic() || *c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    MONTHS.contains(&word.trim_end_matches('.').to_lowercase().as_str())
}

/// Attempt to extend `first` into a range with the number after a connector.
fn join_range(text: &str, first: &Single) -> Option<Single> {
    let after = &text[first.range.end..];
    let (conn_len, is_to) = match DASH_CONNECTOR.find(after) {
        Some(m) => (m.end(), false),
        None => (TO_CONNECTOR.find(after)?.end(), true),
    };
    let second_at = first.range.end + conn_len;
    let second = parse_single(text, second_at)?;
    if second.negative && !is_to {
        return None;
    }
    if !right_boundary_ok(text, second.range.end) || is_bare_year(&second) {
        return None;
    }
    if second.currency && !first.currency {
        return None;
    }
    if first.percent && !second.percent {
        return None;
    }
    if first.currency && second.percent {
        return None;
    }
    if !first.scale.is_empty() && !first.scale.eq_ignore_ascii_case(&second.scale) {
        return None;
    }
    let ordered = if is_to { first.value < second.value } else { first.value <= second.value };
    if !ordered {
        return None;
    }
    Some(second)
}

/// Find every maximal number or number range in `text`.
pub fn scan_numeric(text: &str) -> Vec<RawNumeric> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let c = match next_char(text, pos) {
            Some(c) => c,
            None => break,
        };
        let starts = c.is_ascii_digit() || c == '$' || c == '-' || c == '−' || c == '.';
        if !starts || !left_boundary_ok(text, pos) {
            pos += c.len_utf8();
            continue;
        }
        let Some(first) = parse_single(text, pos) else {
            pos += c.len_utf8();
            continue;
        };
        if first.negative {
            let sign_ok = matches!(prev_char(text, pos), None | Some(' ' | '(' | '\n' | '\t'));
            if !sign_ok {
                pos += c.len_utf8();
                continue;
            }
        }
        if !right_boundary_ok(text, first.range.end) {
            tracing::debug!(surface = &text[first.range.start..first.range.end], "skipping number glued to text");
            pos = first.range.end;
            continue;
        }
        if is_bare_year(&first) || is_day_of_month(text, &first) {
            pos = first.range.end;
            continue;
        }
        let second = join_range(text, &first);
        let end = second.as_ref().map_or(first.range.end, |s| s.range.end);
        let (high, percent, currency, scale) = match &second {
            Some(s) => (
                s.value,
                first.percent || s.percent,
                first.currency || s.currency,
                if s.scale.is_empty() { first.scale.clone() } else { s.scale.clone() },
            ),
            None => (first.value, first.percent, first.currency, first.scale.clone()),
        };
        out.push(RawNumeric {
            range: CharRange::new(first.range.start, end),
            low: first.value,
            high,
            currency,
            percent,
            scale,
        });
        pos = end;
    }
    out
}

/// Parse a value string such as `"4.3B"`, `"$2.52 billion"` or `"15–17%"`.
/// The whole string (ignoring surrounding whitespace) must be one number.
pub fn parse_numeric_at(text: &str) -> Option<RawNumeric> {
    let trimmed = text.trim();
    let found = scan_numeric(trimmed);
    match found.as_slice() {
        [only] if only.range.start == 0 && only.range.end == trimmed.len() => Some(only.clone()),
        _ => None,
    }
}

/// Locate numeric spans in a section body. Header sections carry no spans.
pub fn detect_numeric_spans(section: &Section) -> Vec<NumericSpan> {
    if section.kind == SectionKind::Header {
        return Vec::new();
    }
    scan_numeric(&section.body)
        .into_iter()
        .enumerate()
        .map(|(i, raw)| NumericSpan {
            span_id: format!("{}-n{}", section.section_id, i),
            section_id: section.section_id.clone(),
            char_range: raw.range,
            surface: section.body[raw.range.start..raw.range.end].to_string(),
            kind: raw.kind(),
            parsed_low: raw.low,
            parsed_high: raw.high,
            unit_token: raw.unit_token(),
        })
        .collect()
}
