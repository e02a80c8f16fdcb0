use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde_json::{Map, Value};

use super::context::{cues_in, sentence_ranges};
use super::taxonomy::{MetricEntry, MetricTaxonomy, ValueClass};
use super::{ExtractionError, Provenance, RawKpiRecord};
use crate::ingest::{detect_numeric_spans, parse_numeric_at, CharRange, NumericSpan, Section};

static BARE_KEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:"#).expect("bare key regex"));

/// A value as reported by the backend, before grounding.
#[derive(Debug, Clone)]
struct Claimed {
    entry: MetricEntry,
    low: Decimal,
    high: Decimal,
    unit: Option<String>,
    period: String,
    anchor: Option<String>,
    from_header: bool,
    cues: Option<Vec<String>>,
    span: Option<CharRange>,
    confidence: Decimal,
}

/// Turn a completion into grounded raw records.
///
/// Two layouts are accepted: `{"records": [...]}` with one object per value,
/// and a flat object keyed by field name (`{"Period": "Q1 2024", "Revenue":
/// {"value": 4.3, "unit": "B"}, ...}`). Every claimed value must match a
/// numeric span of the section; ungrounded claims are dropped.
pub fn parse_backend_output(
    completion: &str,
    section: &Section,
    taxonomy: &MetricTaxonomy,
    doc_id: &str,
) -> Result<Vec<RawKpiRecord>, ExtractionError> {
    let root = parse_json_object(completion)?;
    let claims = if let Some(records) = root.get("records") {
        let arr = records
            .as_array()
            .ok_or_else(|| ExtractionError::MalformedCompletion("`records` is not an array".into()))?;
        arr.iter().filter_map(|r| claim_from_record(r, taxonomy)).collect::<Vec<_>>()
    } else {
        claims_from_flat(&root, taxonomy)
    };

    let spans = detect_numeric_spans(section);
    let mut used = vec![false; spans.len()];
    let mut out = Vec::new();
    for claim in claims {
        let Some(idx) = ground(&claim, &spans, &used) else {
            tracing::warn!(
                metric = %claim.entry.canonical_name,
                low = %claim.low,
                high = %claim.high,
                section = %section.section_id,
                "dropping ungrounded value"
            );
            continue;
        };
        used[idx] = true;
        let span = &spans[idx];
        let (metric, value_class) = match (&claim.entry.growth_metric, claim.entry.value_class) {
            (Some(g), ValueClass::Currency) if span.kind.is_percent() => (g.clone(), ValueClass::Percent),
            _ => (claim.entry.canonical_name.clone(), claim.entry.value_class),
        };
        let cues = claim.cues.unwrap_or_else(|| sentence_cues(section, span));
        out.push(RawKpiRecord {
            metric,
            value_class,
            value_low: span.parsed_low,
            value_high: span.parsed_high,
            unit_token: claim.unit.filter(|u| !u.is_empty()).unwrap_or_else(|| span.unit_token.clone()),
            period_phrase: claim.period,
            period_anchor: claim.anchor,
            period_from_header: claim.from_header,
            qualifier_cues: cues,
            provenance: Provenance {
                doc_id: doc_id.to_string(),
                section_id: section.section_id.clone(),
                char_range: span.char_range,
            },
            backend_confidence: claim.confidence,
        });
    }
    out.sort_by_key(|r| r.provenance.char_range);
    Ok(out)
}

fn parse_json_object(completion: &str) -> Result<Map<String, Value>, ExtractionError> {
    let text = completion.trim();
    let text = text
        .strip_prefix("```json")
        .or_else(|| text.strip_prefix("```"))
        .map(|t| t.trim_end().trim_end_matches("```"))
        .unwrap_or(text);
    let (Some(open), Some(close)) = (text.find('{'), text.rfind('}')) else {
        return Err(ExtractionError::MalformedCompletion("no JSON object in completion".into()));
    };
    if close < open {
        return Err(ExtractionError::MalformedCompletion("unbalanced braces".into()));
    }
    let candidate = &text[open..=close];
    let parsed = serde_json::from_str::<Value>(candidate).or_else(|first| {
        // Models often emit JavaScript-style bare keys.
        let quoted = BARE_KEY.replace_all(candidate, r#"$1"$2":"#);
        serde_json::from_str::<Value>(&quoted).map_err(|_| first)
    });
    match parsed {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ExtractionError::MalformedCompletion("top level is not an object".into())),
        Err(e) => Err(ExtractionError::MalformedCompletion(e.to_string())),
    }
}

fn decimal_of(v: &Value) -> Option<Decimal> {
    match v {
        Value::Number(n) => {
            Decimal::from_str(&n.to_string()).or_else(|_| Decimal::from_scientific(&n.to_string())).ok()
        }
        Value::String(s) => Decimal::from_str(s.trim()).ok(),
        _ => None,
    }
}

fn str_of(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str).map(str::to_string)
}

/// Value given as a number, a decorated string ("4.3B", "15–17%"), or an
/// object with `value` / `low`+`high` / `value_low`+`value_high`.
fn value_of(v: &Value) -> Option<(Decimal, Decimal, Option<String>)> {
    match v {
        Value::Number(_) => decimal_of(v).map(|d| (d, d, None)),
        Value::String(s) => {
            if let Ok(d) = Decimal::from_str(s.trim()) {
                return Some((d, d, None));
            }
            let raw = parse_numeric_at(s)?;
            let unit = raw.unit_token();
            Some((raw.low, raw.high, (!unit.is_empty()).then_some(unit)))
        }
        Value::Object(o) => {
            let unit = str_of(o.get("unit"));
            let pair = |lo: &str, hi: &str| Some((decimal_of(o.get(lo)?)?, decimal_of(o.get(hi)?)?));
            if let Some((lo, hi)) = pair("value_low", "value_high").or_else(|| pair("low", "high")) {
                return Some((lo, hi, unit));
            }
            let (lo, hi, inner_unit) = value_of(o.get("value")?)?;
            Some((lo, hi, unit.or(inner_unit)))
        }
        _ => None,
    }
}

fn claim_from_record(v: &Value, taxonomy: &MetricTaxonomy) -> Option<Claimed> {
    let o = v.as_object()?;
    let metric = o.get("metric")?.as_str()?;
    let Some(entry) = taxonomy.resolve_key(metric) else {
        tracing::warn!(metric, "dropping record with metric outside the taxonomy");
        return None;
    };
    let (low, high, unit_from_value) = if o.contains_key("value_low") {
        (decimal_of(o.get("value_low")?)?, decimal_of(o.get("value_high").or(o.get("value_low"))?)?, None)
    } else {
        value_of(o.get("value")?)?
    };
    let span = o.get("span").and_then(Value::as_array).and_then(|a| match a.as_slice() {
        [s, e] => Some(CharRange::new(s.as_u64()? as usize, e.as_u64()? as usize)),
        _ => None,
    });
    let cues = o
        .get("qualifiers")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect::<Vec<_>>());
    Some(Claimed {
        entry: entry.clone(),
        low,
        high,
        unit: str_of(o.get("unit")).or(unit_from_value),
        period: str_of(o.get("period")).unwrap_or_default(),
        anchor: str_of(o.get("period_anchor")).filter(|a| !a.is_empty()),
        from_header: o.get("period_source").and_then(Value::as_str) == Some("header"),
        cues,
        span,
        confidence: o
            .get("confidence")
            .and_then(decimal_of)
            .filter(|c| *c >= Decimal::ZERO && *c <= Decimal::ONE)
            .unwrap_or(Decimal::ONE),
    })
}

fn claims_from_flat(root: &Map<String, Value>, taxonomy: &MetricTaxonomy) -> Vec<Claimed> {
    let period = root
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("period"))
        .and_then(|(_, v)| v.as_str())
        .unwrap_or_default()
        .to_string();
    root.iter()
        .filter(|(k, _)| !k.eq_ignore_ascii_case("period"))
        .filter_map(|(k, v)| {
            let Some(entry) = taxonomy.resolve_key(k) else {
                tracing::warn!(key = %k, "ignoring field outside the taxonomy");
                return None;
            };
            let (low, high, unit) = value_of(v)?;
            Some(Claimed {
                entry: entry.clone(),
                low,
                high,
                unit,
                period: period.clone(),
                anchor: None,
                from_header: false,
                cues: None,
                span: None,
                confidence: Decimal::ONE,
            })
        })
        .collect()
}

fn ground(claim: &Claimed, spans: &[NumericSpan], used: &[bool]) -> Option<usize> {
    let matches = |s: &NumericSpan| s.parsed_low == claim.low && s.parsed_high == claim.high;
    if let Some(range) = claim.span {
        return spans.iter().position(|s| s.char_range == range && matches(s));
    }
    spans.iter().enumerate().find(|(i, s)| !used[*i] && matches(s)).map(|(i, _)| i)
}

fn sentence_cues(section: &Section, span: &NumericSpan) -> Vec<String> {
    sentence_ranges(&section.body, section.kind)
        .into_iter()
        .find(|r| r.contains_range(&span.char_range))
        .map(|r| cues_in(&section.body[r.start..r.end]))
        .unwrap_or_default()
}
