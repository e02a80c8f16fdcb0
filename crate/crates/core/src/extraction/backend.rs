//! Completion backends. The pipeline only ever sees [`CompletionBackend`];
//! [`MockBackend`] is the offline default.

use std::collections::VecDeque;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use super::context::derive_records;
use super::prompt::{parse_class_label, EXTRACTION_INSTRUCTION, REPAIR_PREAMBLE, TEXT_CLOSE, TEXT_OPEN};
use super::taxonomy::{MetricEntry, MetricTaxonomy};
use crate::ingest::{CharRange, Section, SectionKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend not configured: {0}")]
    Unavailable(String),
}

/// Anything that turns a prompt into completion text.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

/// Deterministic stand-in for an LLM.
///
/// For extraction prompts it re-reads the section text and taxonomy from the
/// prompt and answers with exactly the records the rule-based candidate
/// detector derives. Optional fault rates make it misbehave reproducibly:
/// the outcome is a pure function of `(prompt, seed)`.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    seed: u64,
    malformed_rate: f64,
    fabrication_rate: f64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Probability that a first-attempt completion is truncated JSON.
    pub fn with_malformed_rate(mut self, rate: f64) -> Self {
        self.malformed_rate = rate.clamp(0.0, 1.0);
        self
    }

    /// Probability that each reported value is replaced by an invented one.
    pub fn with_fabrication_rate(mut self, rate: f64) -> Self {
        self.fabrication_rate = rate.clamp(0.0, 1.0);
        self
    }

    fn rng_for(&self, prompt: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(prompt.as_bytes()))
    }

    fn answer_extraction(&self, prompt: &str, repair: bool) -> String {
        let mut rng = self.rng_for(prompt);
        if !repair && self.malformed_rate > 0.0 && rng.gen_bool(self.malformed_rate) {
            return r#"{"records": [{"metric": "#.to_string();
        }
        let Some((section, taxonomy)) = parse_extraction_prompt(prompt) else {
            return "{}".to_string();
        };
        let records: Vec<Value> = derive_records(&section, &taxonomy, "")
            .into_iter()
            .map(|r| {
                let (mut low, mut high) = (r.value_low, r.value_high);
                if self.fabrication_rate > 0.0 && rng.gen_bool(self.fabrication_rate) {
                    let bump = rust_decimal::Decimal::new(rng.gen_range(11..99), 1);
                    low += bump;
                    high += bump;
                }
                json!({
                    "metric": r.metric,
                    "value_low": low.to_string(),
                    "value_high": high.to_string(),
                    "unit": r.unit_token,
                    "period": r.period_phrase,
                    "period_anchor": r.period_anchor,
                    "period_source": if r.period_from_header { "header" } else { "sentence" },
                    "qualifiers": r.qualifier_cues,
                    "span": [r.provenance.char_range.start, r.provenance.char_range.end],
                    "confidence": 1.0,
                })
            })
            .collect();
        json!({ "records": records }).to_string()
    }
}

impl CompletionBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        if prompt.starts_with(EXTRACTION_INSTRUCTION) {
            Ok(self.answer_extraction(prompt, false))
        } else if prompt.starts_with(REPAIR_PREAMBLE) {
            let original = prompt.find(EXTRACTION_INSTRUCTION).map_or(prompt, |at| &prompt[at..]);
            Ok(self.answer_extraction(original, true))
        } else {
            // Not an extraction request; the mock proposes nothing.
            Ok(String::new())
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Recover the section and taxonomy embedded in an extraction prompt.
pub(crate) fn parse_extraction_prompt(prompt: &str) -> Option<(Section, MetricTaxonomy)> {
    let text_at = prompt.find(&format!("Text:\n{TEXT_OPEN}"))?;
    let body_start = text_at + "Text:\n".len() + TEXT_OPEN.len();
    let body_end = prompt.rfind(TEXT_CLOSE)?;
    if body_end < body_start {
        return None;
    }
    let body = prompt[body_start..body_end].to_string();
    let head = &prompt[..text_at];

    let mut entries = Vec::new();
    let mut section_id = "s0".to_string();
    let mut kind = SectionKind::Narrative;
    let mut title = String::new();
    let mut in_aliases = false;
    for line in head.lines() {
        if line == "Metric aliases:" {
            in_aliases = true;
            continue;
        }
        if in_aliases {
            if let Some(rest) = line.strip_prefix("- ") {
                if let Some(e) = parse_alias_line(rest) {
                    entries.push(e);
                }
                continue;
            }
            in_aliases = false;
        }
        if let Some(rest) = line.strip_prefix("Section: ") {
            let (id, k) = rest.split_once(" (")?;
            section_id = id.to_string();
            kind = match k.trim_end_matches(')') {
                "Table" => SectionKind::Table,
                "Header" => SectionKind::Header,
                "Boilerplate" => SectionKind::Boilerplate,
                _ => SectionKind::Narrative,
            };
        } else if let Some(rest) = line.strip_prefix("Header: ") {
            title = rest.to_string();
        } else if line == "Header:" {
            title.clear();
        }
    }
    let taxonomy = MetricTaxonomy::new(entries).ok()?;
    let section = Section { section_id, title, char_range: CharRange::new(0, body.len()), body, kind };
    Some((section, taxonomy))
}

fn parse_alias_line(rest: &str) -> Option<MetricEntry> {
    let (name, tail) = rest.split_once(" [")?;
    let (meta, aliases) = tail.split_once("]: ")?;
    let mut parts = meta.split("; ");
    let class = parse_class_label(parts.next()?)?;
    let growth = parts.next().and_then(|g| g.strip_prefix("growth: ")).map(str::to_string);
    Some(MetricEntry {
        canonical_name: name.to_string(),
        aliases: aliases.split(" | ").filter(|a| !a.is_empty()).map(str::to_string).collect(),
        value_class: class,
        growth_metric: growth,
    })
}

/// Replays canned completions in order and records every prompt it saw.
/// Once the script runs out it answers with an empty string.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<Result<String, BackendError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(|s| Ok(s.into())).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn push_error(&self, err: BackendError) {
        self.responses.lock().expect("script lock").push_back(Err(err));
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt lock").clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.prompts.lock().expect("prompt lock").push(prompt.to_string());
        self.responses.lock().expect("script lock").pop_front().unwrap_or_else(|| Ok(String::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::prompt::{build_extraction_prompt, TargetSchema};

    fn section(body: &str, title: &str) -> Section {
        Section {
            section_id: "s3".into(),
            title: title.into(),
            body: body.into(),
            char_range: CharRange::new(0, body.len()),
            kind: SectionKind::Narrative,
        }
    }

    #[test]
    fn prompt_round_trips_through_mock_parser() {
        let s = section("Gross margin was 41.2%.\nSecond line >>> tricky", "Q3 2024 HIGHLIGHTS");
        let t = MetricTaxonomy::financial_default();
        let p = build_extraction_prompt(&s, &t, &TargetSchema::default());
        let (back, tax) = parse_extraction_prompt(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(tax, t);
    }

    #[test]
    fn mock_is_pure_in_prompt_and_seed() {
        let s = section("Operating margin in Q4 2024 was 14.6%.", "");
        let p = build_extraction_prompt(&s, &MetricTaxonomy::financial_default(), &TargetSchema::default());
        let a = MockBackend::new(7).with_fabrication_rate(0.5).complete(&p).unwrap();
        let b = MockBackend::new(7).with_fabrication_rate(0.5).complete(&p).unwrap();
        assert_eq!(a, b);
        let clean = MockBackend::new(7).complete(&p).unwrap();
        assert!(clean.contains("\"value_low\":\"14.6\""));
    }

    #[test]
    fn malformed_only_on_first_attempt() {
        let s = section("Operating margin in Q4 2024 was 14.6%.", "");
        let p = build_extraction_prompt(&s, &MetricTaxonomy::financial_default(), &TargetSchema::default());
        let mock = MockBackend::new(1).with_malformed_rate(1.0);
        assert!(serde_json::from_str::<Value>(&mock.complete(&p).unwrap()).is_err());
        let repaired = mock.complete(&crate::extraction::prompt::build_repair_prompt(&p, "eof")).unwrap();
        assert!(serde_json::from_str::<Value>(&repaired).is_ok());
    }

    #[test]
    fn scripted_backend_replays() {
        let b = ScriptedBackend::new(["a", "b"]);
        assert_eq!(b.complete("p1").unwrap(), "a");
        assert_eq!(b.complete("p2").unwrap(), "b");
        assert_eq!(b.complete("p3").unwrap(), "");
        assert_eq!(b.prompts(), vec!["p1", "p2", "p3"]);
    }
}
