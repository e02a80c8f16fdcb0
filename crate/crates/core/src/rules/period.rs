use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const MIN_YEAR: i32 = 1990;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Granularity {
    FY,
    Q1,
    Q2,
    Q3,
    Q4,
    H1,
    H2,
}

impl Granularity {
    pub const ALL: [Granularity; 7] = [Self::FY, Self::Q1, Self::Q2, Self::Q3, Self::Q4, Self::H1, Self::H2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FY => "FY",
            Self::Q1 => "Q1",
            Self::Q2 => "Q2",
            Self::Q3 => "Q3",
            Self::Q4 => "Q4",
            Self::H1 => "H1",
            Self::H2 => "H2",
        }
    }

    pub fn is_quarter(self) -> bool {
        matches!(self, Self::Q1 | Self::Q2 | Self::Q3 | Self::Q4)
    }

    /// The preceding quarter, with its year offset.
    pub fn previous_quarter(self) -> Option<(Granularity, i32)> {
        match self {
            Self::Q1 => Some((Self::Q4, -1)),
            Self::Q2 => Some((Self::Q1, 0)),
            Self::Q3 => Some((Self::Q2, 0)),
            Self::Q4 => Some((Self::Q3, 0)),
            _ => None,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown period granularity `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResolvedFrom {
    Explicit,
    RelativePrior,
    HeaderFallback,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiscalPeriod {
    pub granularity: Granularity,
    pub year: i32,
    pub resolved_from: ResolvedFrom,
}

impl FiscalPeriod {
    pub fn explicit(granularity: Granularity, year: i32) -> Self {
        Self { granularity, year, resolved_from: ResolvedFrom::Explicit }
    }

    pub fn unresolved() -> Self {
        Self { granularity: Granularity::FY, year: 0, resolved_from: ResolvedFrom::Unresolved }
    }

    pub fn is_resolved(&self) -> bool {
        self.resolved_from != ResolvedFrom::Unresolved
    }

    /// `(granularity, year)`, ignoring how the period was resolved.
    pub fn key(&self) -> (Granularity, i32) {
        (self.granularity, self.year)
    }
}

impl fmt::Display for FiscalPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_resolved() {
            write!(f, "{} {}", self.granularity, self.year)
        } else {
            f.write_str("unresolved period")
        }
    }
}

static EXPLICIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:(?P<g>Q[1-4]|H[12]|FY) ?|fiscal (?:year )?)?(?P<y>\d{4})$").expect("explicit period regex")
});

static RELATIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:(?:last|prior|previous) year|a year ago|year-ago|prior-year)$").expect("relative period regex")
});

/// Parse an explicit phrase such as "Q4 2024", "FY2025", "fiscal year 2023"
/// or a bare year (read as FY).
pub fn parse_explicit_period(phrase: &str) -> Option<(Granularity, i32)> {
    let caps = EXPLICIT.captures(phrase.trim())?;
    let year: i32 = caps["y"].parse().ok()?;
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return None;
    }
    let g = caps.name("g").map_or(Ok(Granularity::FY), |g| g.as_str().parse()).ok()?;
    Some((g, year))
}

pub fn is_relative_phrase(phrase: &str) -> bool {
    RELATIVE.is_match(phrase.trim())
}

/// Resolve a period phrase. A relative phrase ("last year") takes the
/// granularity of its co-mentioned explicit `anchor` one year earlier; with
/// no usable anchor, and for an empty phrase, the result is `Unresolved`.
pub fn resolve_period(phrase: &str, anchor: Option<&str>) -> FiscalPeriod {
    if let Some((g, y)) = parse_explicit_period(phrase) {
        return FiscalPeriod::explicit(g, y);
    }
    if is_relative_phrase(phrase) {
        if let Some((g, y)) = anchor.and_then(parse_explicit_period) {
            if y > MIN_YEAR {
                return FiscalPeriod { granularity: g, year: y - 1, resolved_from: ResolvedFrom::RelativePrior };
            }
        }
    }
    FiscalPeriod::unresolved()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Granularity::*;

    #[test]
    fn explicit_forms() {
        assert_eq!(resolve_period("Q4 2024", None), FiscalPeriod::explicit(Q4, 2024));
        assert_eq!(resolve_period("FY 2025", None), FiscalPeriod::explicit(FY, 2025));
        assert_eq!(resolve_period("fy2025", None), FiscalPeriod::explicit(FY, 2025));
        assert_eq!(resolve_period("fiscal year 2023", None), FiscalPeriod::explicit(FY, 2023));
        assert_eq!(resolve_period("H1 2022", None), FiscalPeriod::explicit(H1, 2022));
        assert_eq!(resolve_period("2021", None), FiscalPeriod::explicit(FY, 2021));
    }

    #[test]
    fn relative_needs_anchor() {
        let p = resolve_period("last year", Some("Q4 2024"));
        assert_eq!((p.granularity, p.year, p.resolved_from), (Q4, 2023, ResolvedFrom::RelativePrior));
        assert_eq!(resolve_period("prior year", Some("FY 2025")).key(), (FY, 2024));
        assert!(!resolve_period("last year", None).is_resolved());
        assert!(!resolve_period("last year", Some("last year")).is_resolved());
    }

    #[test]
    fn empty_and_out_of_window() {
        assert_eq!(resolve_period("", None), FiscalPeriod::unresolved());
        assert_eq!(resolve_period("Q1 1890", None).year, 0);
        assert_eq!(resolve_period("sometime", None).resolved_from, ResolvedFrom::Unresolved);
    }

    #[test]
    fn display() {
        assert_eq!(FiscalPeriod::explicit(Q4, 2024).to_string(), "Q4 2024");
        assert_eq!("h2".parse::<Granularity>().unwrap(), H2);
        assert_eq!(Q1.previous_quarter(), Some((Q4, -1)));
    }
}
