use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CharRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueClass {
    Currency,
    Percent,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub canonical_name: String,
    pub aliases: Vec<String>,
    pub value_class: ValueClass,
    /// Percent-valued companion metric used when a percentage is reported
    /// against a currency metric ("revenue grew 12%").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_metric: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("duplicate canonical metric `{0}`")]
    DuplicateCanonical(String),
    #[error("alias `{alias}` maps to both `{first}` and `{second}`")]
    AmbiguousAlias { alias: String, first: String, second: String },
    #[error("growth metric `{growth}` of `{metric}` is not a percent metric in the taxonomy")]
    BadGrowthMetric { metric: String, growth: String },
}

/// An alias occurrence inside some text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasHit {
    /// Matched text as it appears in the source.
    pub alias: String,
    pub canonical: String,
    pub range: CharRange,
}

/// Canonical metric names with their surface aliases. Alias matching is
/// case-insensitive and word-bounded; longer aliases win.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<MetricEntry>", into = "Vec<MetricEntry>")]
pub struct MetricTaxonomy {
    entries: Vec<MetricEntry>,
    alias_index: HashMap<String, usize>,
    matcher: Option<Regex>,
}

impl PartialEq for MetricTaxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl TryFrom<Vec<MetricEntry>> for MetricTaxonomy {
    type Error = TaxonomyError;

    fn try_from(entries: Vec<MetricEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<MetricTaxonomy> for Vec<MetricEntry> {
    fn from(t: MetricTaxonomy) -> Self {
        t.entries
    }
}

impl Default for MetricTaxonomy {
    fn default() -> Self {
        Self::financial_default()
    }
}

impl MetricTaxonomy {
    pub fn new(entries: Vec<MetricEntry>) -> Result<Self, TaxonomyError> {
        let mut alias_index: HashMap<String, usize> = HashMap::new();
        let mut seen = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if seen.insert(e.canonical_name.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateCanonical(e.canonical_name.clone()));
            }
        }
        for (i, e) in entries.iter().enumerate() {
            for alias in e.aliases.iter().chain(std::iter::once(&e.canonical_name.replace('_', " "))) {
                let key = alias.to_lowercase();
                if let Some(&prev) = alias_index.get(&key) {
                    if prev != i {
                        return Err(TaxonomyError::AmbiguousAlias {
                            alias: alias.clone(),
                            first: entries[prev].canonical_name.clone(),
                            second: e.canonical_name.clone(),
                        });
                    }
                }
                alias_index.insert(key, i);
            }
        }
        for e in &entries {
            if let Some(g) = &e.growth_metric {
                let ok = seen.get(g).is_some_and(|&gi| entries[gi].value_class == ValueClass::Percent);
                if !ok {
                    return Err(TaxonomyError::BadGrowthMetric { metric: e.canonical_name.clone(), growth: g.clone() });
                }
            }
        }
        let matcher = build_matcher(&entries);
        Ok(Self { entries, alias_index, matcher })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty taxonomy is valid")
    }

    /// The metrics the pipeline ships with.
    pub fn financial_default() -> Self {
        fn entry(name: &str, class: ValueClass, aliases: &[&str], growth: Option<&str>) -> MetricEntry {
            MetricEntry {
                canonical_name: name.into(),
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
                value_class: class,
                growth_metric: growth.map(str::to_string),
            }
        }
        use ValueClass::*;
        Self::new(vec![
            entry(
                "revenue",
                Currency,
                &["revenue", "revenues", "net revenue", "total revenue", "net sales"],
                Some("revenue_yoy_growth"),
            ),
            entry(
                "revenue_yoy_growth",
                Percent,
                &["revenue growth", "revenue yoy growth", "yoy revenue growth", "top-line growth"],
                None,
            ),
            entry(
                "operating_income",
                Currency,
                &["operating income", "income from operations", "operating profit"],
                None,
            ),
            entry("operating_margin", Percent, &["operating margin", "operating margins"], None),
            entry("free_cash_flow", Currency, &["free cash flow", "fcf"], None),
            entry("eps", Currency, &["eps", "earnings per share", "diluted eps"], None),
            entry("gross_margin", Percent, &["gross margin", "gross margins"], None),
            entry(
                "consensus_delta",
                Currency,
                &["consensus", "consensus estimate", "consensus estimates", "analyst consensus"],
                None,
            ),
        ])
        .expect("default taxonomy is valid")
    }

    pub fn entries(&self) -> &[MetricEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, canonical: &str) -> Option<&MetricEntry> {
        self.entries.iter().find(|e| e.canonical_name == canonical)
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.get(canonical).is_some()
    }

    pub fn value_class(&self, canonical: &str) -> Option<ValueClass> {
        self.get(canonical).map(|e| e.value_class)
    }

    /// Resolve a field key or phrase ("Revenue_YoY_Growth", "Operating margin")
    /// to a canonical name.
    pub fn resolve_key(&self, key: &str) -> Option<&MetricEntry> {
        let norm = key.trim().replace('_', " ").to_lowercase();
        let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
        self.alias_index.get(&norm).map(|&i| &self.entries[i])
    }

    /// All non-overlapping alias occurrences in `text`, left to right.
    pub fn find_aliases(&self, text: &str) -> Vec<AliasHit> {
        let Some(re) = &self.matcher else {
            return Vec::new();
        };
        re.find_iter(text)
            .filter_map(|m| {
                let entry = self.resolve_key(m.as_str())?;
                Some(AliasHit {
                    alias: m.as_str().to_string(),
                    canonical: entry.canonical_name.clone(),
                    range: CharRange::new(m.start(), m.end()),
                })
            })
            .collect()
    }
}

fn build_matcher(entries: &[MetricEntry]) -> Option<Regex> {
    let mut aliases: Vec<String> = entries
        .iter()
        .flat_map(|e| e.aliases.iter().cloned().chain(std::iter::once(e.canonical_name.replace('_', " "))))
        .collect();
    if aliases.is_empty() {
        return None;
    }
    aliases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    aliases.dedup();
    let alternation = aliases
        .iter()
        .map(|a| regex::escape(a).replace("\\ ", "\\s+").replace(' ', r"\s+"))
        .collect::<Vec<_>>()
        .join("|");
    Some(Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).expect("alias regex"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_taxonomy_resolves_aliases() {
        let t = MetricTaxonomy::financial_default();
        assert_eq!(t.resolve_key("Operating Margin").unwrap().canonical_name, "operating_margin");
        assert_eq!(t.resolve_key("Revenue_YoY_Growth").unwrap().canonical_name, "revenue_yoy_growth");
        assert_eq!(t.resolve_key("Consensus_Delta").unwrap().canonical_name, "consensus_delta");
        assert!(t.resolve_key("headcount").is_none());
    }

    #[test]
    fn longest_alias_wins() {
        let t = MetricTaxonomy::financial_default();
        let hits = t.find_aliases("Revenue growth of 12% lifted total revenue and operating income.");
        let names: Vec<_> = hits.iter().map(|h| h.canonical.as_str()).collect();
        assert_eq!(names, vec!["revenue_yoy_growth", "revenue", "operating_income"]);
        assert_eq!(hits[1].alias, "total revenue");
    }

    #[test]
    fn word_boundaries_respected() {
        let t = MetricTaxonomy::financial_default();
        assert!(t.find_aliases("prerevenue company, epsilon").is_empty());
    }

    #[test]
    fn ambiguous_alias_rejected() {
        let e = |n: &str| MetricEntry {
            canonical_name: n.into(),
            aliases: vec!["Margin".into()],
            value_class: ValueClass::Percent,
            growth_metric: None,
        };
        let err = MetricTaxonomy::new(vec![e("a"), e("b")]).unwrap_err();
        assert!(matches!(err, TaxonomyError::AmbiguousAlias { .. }));
        let err = MetricTaxonomy::new(vec![e("a"), MetricEntry { aliases: vec![], ..e("a") }]).unwrap_err();
        assert_eq!(err, TaxonomyError::DuplicateCanonical("a".into()));
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let t = MetricTaxonomy::financial_default();
        let json = serde_json::to_string(&t).unwrap();
        let back: MetricTaxonomy = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
    }
}
