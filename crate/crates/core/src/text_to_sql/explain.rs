use rust_decimal::Decimal;

use super::intent::{Aggregation, QueryIntent};
use crate::rules::{scale_word, Unit};
use crate::sql::{Cell, ResultTable};

fn label(metric: &str) -> String {
    match metric {
        "eps" => "EPS".into(),
        "free_cash_flow" => "free cash flow".into(),
        "revenue_yoy_growth" => "revenue growth".into(),
        "consensus_delta" => "difference from consensus".into(),
        m => m.replace('_', " "),
    }
}

fn plain(d: Decimal) -> String {
    let d = d.round_dp(2).normalize();
    if d.scale() == 0 {
        format!("{d}.0")
    } else {
        d.to_string()
    }
}

fn pick_scale(value: Decimal, scale: Option<Decimal>) -> Option<Decimal> {
    let by_magnitude =
        || [Decimal::from(1_000_000_000u64), Decimal::from(1_000_000u64)].into_iter().find(|s| value.abs() >= *s);
    scale.filter(|s| *s > Decimal::ONE && scale_word(*s).is_some()).or_else(by_magnitude)
}

/// Render a value in its unit, restoring the reporting scale for amounts.
pub fn format_value(value: Decimal, unit: Unit, scale: Option<Decimal>) -> String {
    match unit {
        Unit::Percent => format!("{}%", plain(value)),
        Unit::Count => value.round_dp(2).normalize().to_string(),
        Unit::USD => {
            let sign = if value.is_sign_negative() { "-" } else { "" };
            let v = value.abs();
            match pick_scale(v, scale) {
                Some(s) => format!("{sign}${} {}", (v / s).round_dp(2).normalize(), scale_word(s).unwrap_or("")),
                None => format!("{sign}${}", v.round_dp(2).normalize()),
            }
        }
    }
}

fn change_line(new: Decimal, old: Decimal, unit: Unit) -> String {
    let diff = new - old;
    let signed = |s: String| if diff.is_sign_negative() { s } else { format!("+{s}") };
    match unit {
        Unit::Percent => format!("Change: {} percentage points.", signed(plain(diff))),
        _ => {
            let pct = (!old.is_zero()).then(|| (diff / old.abs() * Decimal::ONE_HUNDRED).round_dp(1));
            let amount = signed(format_value(diff, unit, None));
            match pct {
                Some(p) => {
                    format!("Change: {amount} ({}{}%).", if p.is_sign_negative() { "" } else { "+" }, p.normalize())
                }
                None => format!("Change: {amount}."),
            }
        }
    }
}

struct Row<'a> {
    metric: &'a str,
    value: Decimal,
    low: Decimal,
    high: Decimal,
    unit: Unit,
    scale: Decimal,
    period: String,
    status: &'a str,
    basis: &'a str,
}

fn rows(result: &ResultTable) -> Option<Vec<Row<'_>>> {
    let idx = |n: &str| result.column_index(n);
    let (m, v, lo, hi, u, s, g, y, st, b) = (
        idx("metric")?,
        idx("value")?,
        idx("value_low")?,
        idx("value_high")?,
        idx("unit")?,
        idx("scale_applied")?,
        idx("period_granularity")?,
        idx("period_year")?,
        idx("status")?,
        idx("basis")?,
    );
    result
        .rows
        .iter()
        .map(|r| {
            let unit = match r[u].as_text()? {
                "USD" => Unit::USD,
                "Percent" => Unit::Percent,
                _ => Unit::Count,
            };
            Some(Row {
                metric: r[m].as_text()?,
                value: r[v].as_decimal()?,
                low: r[lo].as_decimal()?,
                high: r[hi].as_decimal()?,
                unit,
                scale: r[s].as_decimal()?,
                period: format!("{} {}", r[g], r[y]),
                status: r[st].as_text()?,
                basis: r[b].as_text()?,
            })
        })
        .collect()
}

fn row_sentence(r: &Row<'_>) -> String {
    let guidance = r.status == "Guidance";
    let basis = if r.basis == "NonGAAP" { "non-GAAP " } else { "" };
    let mut s = format!(
        "{} {basis}{} ({}) {} {}",
        r.period,
        label(r.metric),
        if guidance { "guidance" } else { "actual" },
        if guidance { "is" } else { "was" },
        format_value(r.value, r.unit, Some(r.scale))
    );
    if r.low != r.high {
        s.push_str(&format!(
            " (range {} to {})",
            format_value(r.low, r.unit, Some(r.scale)),
            format_value(r.high, r.unit, Some(r.scale))
        ));
    }
    s.push('.');
    s
}

fn scope(intent: &QueryIntent) -> String {
    let mut parts = vec![intent.status_filter.label().to_string()];
    if let Some(p) = intent.period_filter {
        parts.push(p.to_string());
    }
    if let Some(c) = &intent.company_filter {
        parts.push(c.clone());
    }
    parts.join(", ")
}

const MAX_LISTED: usize = 5;

/// One short paragraph describing a result in words.
pub fn explain(intent: &QueryIntent, result: &ResultTable, unit_of: &dyn Fn(&str) -> Option<Unit>) -> String {
    let metrics = intent.metrics.iter().map(|m| label(m)).collect::<Vec<_>>().join(" and ");
    let scope = scope(intent);
    if result.is_empty() {
        return format!("No records match {metrics} ({scope}).");
    }
    match intent.aggregation {
        Aggregation::None | Aggregation::Latest => {
            let Some(rows) = rows(result) else {
                return format!("{} rows returned for {metrics} ({scope}).", result.row_count);
            };
            let mut out: Vec<String> = rows.iter().take(MAX_LISTED).map(row_sentence).collect();
            if rows.len() > MAX_LISTED {
                out.push(format!("{} more rows not shown.", rows.len() - MAX_LISTED));
            }
            if let (Some([newer, older]), [_]) = (intent.comparison_periods(), intent.metrics.as_slice()) {
                let find = |(g, y): (crate::rules::Granularity, i32)| {
                    let p = format!("{g} {y}");
                    let hits: Vec<&Row> = rows.iter().filter(|r| r.period == p).collect();
                    (hits.len() == 1).then(|| hits[0])
                };
                if let (Some(n), Some(o)) = (find(newer), find(older)) {
                    out.push(change_line(n.value, o.value, n.unit));
                }
            }
            out.join(" ")
        }
        agg => {
            let word = match agg {
                Aggregation::Avg => "Average",
                Aggregation::Sum => "Total",
                Aggregation::Min => "Lowest",
                Aggregation::Max => "Highest",
                _ => "Count of",
            };
            let value_col = result.columns.len() - 1;
            let metric_col = result.column_index("metric").filter(|&i| i != value_col);
            let lines: Vec<String> = result
                .rows
                .iter()
                .map(|r| {
                    let metric = metric_col.and_then(|i| r[i].as_text()).unwrap_or(&intent.metrics[0]);
                    let value = match (&r[value_col], agg) {
                        (Cell::Null, _) => "not available".to_string(),
                        (c, Aggregation::Count) => c.to_string(),
                        (c, _) => match (c.as_decimal(), unit_of(metric)) {
                            (Some(d), Some(u)) => format_value(d, u, None),
                            _ => c.to_string(),
                        },
                    };
                    if agg == Aggregation::Count {
                        format!("{word} {} records ({scope}): {value}.", label(metric))
                    } else {
                        format!("{word} {} ({scope}) is {value}.", label(metric))
                    }
                })
                .collect();
            lines.join(" ")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn formats() {
        assert_eq!(format_value(d("14.6"), Unit::Percent, None), "14.6%");
        assert_eq!(format_value(d("16"), Unit::Percent, None), "16.0%");
        assert_eq!(format_value(d("4300000000"), Unit::USD, Some(d("1000000000"))), "$4.3 billion");
        assert_eq!(format_value(d("150000000"), Unit::USD, Some(d("1000000"))), "$150 million");
        assert_eq!(format_value(d("2520000000"), Unit::USD, Some(Decimal::ONE)), "$2.52 billion");
        assert_eq!(format_value(d("1.23"), Unit::USD, Some(Decimal::ONE)), "$1.23");
        assert_eq!(format_value(d("-5000000"), Unit::USD, None), "-$5 million");
        assert_eq!(change_line(d("14.6"), d("14.4"), Unit::Percent), "Change: +0.2 percentage points.");
        assert_eq!(change_line(d("110"), d("100"), Unit::USD), "Change: +$10 (+10%).");
    }
}
