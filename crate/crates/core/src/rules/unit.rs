use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::RuleError;
use crate::extraction::ValueClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    USD,
    Percent,
    Count,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::USD => "USD",
            Self::Percent => "Percent",
            Self::Count => "Count",
        }
    }

    pub fn for_class(class: ValueClass) -> Self {
        match class {
            ValueClass::Currency => Self::USD,
            ValueClass::Percent => Self::Percent,
            ValueClass::Count => Self::Count,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedUnit {
    pub value: Decimal,
    pub unit: Unit,
    pub scale_applied: Decimal,
}

/// Multiplier for a scale token, `None` if the token is not a scale word.
pub fn scale_of(token: &str) -> Option<Decimal> {
    let t = token.trim();
    let exp = match t.to_ascii_lowercase().as_str() {
        "" => 0,
        "thousand" | "k" => 3,
        "million" | "m" | "mn" | "mm" => 6,
        "billion" | "b" | "bn" => 9,
        _ => return None,
    };
    Some(Decimal::from_i128_with_scale(10i128.pow(exp), 0))
}

/// Short display word for a multiplier, the inverse of [`scale_of`].
pub fn scale_word(scale: Decimal) -> Option<&'static str> {
    match scale.normalize().to_string().as_str() {
        "1000" => Some("thousand"),
        "1000000" => Some("million"),
        "1000000000" => Some("billion"),
        _ => None,
    }
}

fn is_percent_token(token: &str) -> bool {
    matches!(token.trim().to_ascii_lowercase().as_str(), "%" | "percent" | "pct")
}

/// Canonicalize a face value: currency to base USD, percent passed
/// through, counts scaled.
pub fn resolve_unit(face_value: Decimal, unit_token: &str, class: ValueClass) -> Result<ResolvedUnit, RuleError> {
    let conflict = || RuleError::UnitClassConflict { token: unit_token.to_string(), class };
    if is_percent_token(unit_token) {
        return match class {
            ValueClass::Percent => {
                Ok(ResolvedUnit { value: face_value, unit: Unit::Percent, scale_applied: Decimal::ONE })
            }
            _ => Err(conflict()),
        };
    }
    let scale = scale_of(unit_token).ok_or_else(|| RuleError::UnknownUnitToken(unit_token.to_string()))?;
    if class == ValueClass::Percent && scale != Decimal::ONE {
        return Err(conflict());
    }
    let mut value = face_value.checked_mul(scale).ok_or(RuleError::ValueOverflow)?;
    if scale != Decimal::ONE {
        value = value.normalize();
    }
    Ok(ResolvedUnit { value, unit: Unit::for_class(class), scale_applied: scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn scales() {
        let r = resolve_unit(d("4.3"), "billion", ValueClass::Currency).unwrap();
        assert_eq!((r.value, r.unit, r.scale_applied), (d("4300000000"), Unit::USD, d("1000000000")));
        assert_eq!(r.value.to_string(), "4300000000");
        let r = resolve_unit(d("150"), "M", ValueClass::Currency).unwrap();
        assert_eq!(r.value, d("150000000"));
        let r = resolve_unit(d("12"), "%", ValueClass::Percent).unwrap();
        assert_eq!((r.value, r.unit, r.scale_applied), (d("12"), Unit::Percent, Decimal::ONE));
        assert_eq!(resolve_unit(d("2.5"), "K", ValueClass::Count).unwrap().value, d("2500"));
    }

    #[test]
    fn conflicts() {
        assert!(matches!(resolve_unit(d("12"), "%", ValueClass::Currency), Err(RuleError::UnitClassConflict { .. })));
        assert!(matches!(
            resolve_unit(d("12"), "million", ValueClass::Percent),
            Err(RuleError::UnitClassConflict { .. })
        ));
        assert_eq!(
            resolve_unit(d("1"), "furlongs", ValueClass::Count),
            Err(RuleError::UnknownUnitToken("furlongs".into()))
        );
    }

    #[test]
    fn scale_words_round_trip() {
        for w in ["thousand", "million", "billion"] {
            assert_eq!(scale_word(scale_of(w).unwrap()), Some(w));
        }
        assert_eq!(scale_word(Decimal::ONE), None);
    }
}
