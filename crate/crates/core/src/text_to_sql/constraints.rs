//! Semantic checks on a candidate query against the question's intent.
//!
//! The WHERE clause is evaluated abstractly over every combination of the
//! enumerable columns (metric, unit, status, basis, period) with all other
//! columns unknown. A combination is admitted when the predicate is true or
//! unknown. The admitted sets are then compared with what the intent asks for.

use std::collections::BTreeSet;

use rust_decimal::prelude::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::intent::{BasisFilter, PeriodFilter, QueryIntent};
use crate::rules::{Basis, Granularity, Status, Unit};
use crate::sql::ast::{AggFunc, BinaryOp, Expr, Literal, Select, SelectItem};
use crate::sql::{execute, parse_select, Cell, Table};
use crate::store::{columns, SchemaCard, UnitSemantics, TABLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Syntax,
    Unit,
    Temporal,
    Qualifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: ConstraintKind,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlValidation {
    pub syntax_ok: bool,
    pub unit_consistent: bool,
    pub temporal_aligned: bool,
    pub qualifier_correct: bool,
    pub violations: Vec<Violation>,
}

impl SqlValidation {
    pub fn passed(&self) -> bool {
        self.syntax_ok && self.unit_consistent && self.temporal_aligned && self.qualifier_correct
    }

    fn syntax_failure(detail: String) -> Self {
        Self {
            syntax_ok: false,
            unit_consistent: false,
            temporal_aligned: false,
            qualifier_correct: false,
            violations: vec![Violation { check: ConstraintKind::Syntax, rule: "syntax".into(), detail }],
        }
    }

    /// Short human-readable summary for feedback prompts.
    pub fn feedback(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("[{:?}] {}: {}", v.check, v.rule, v.detail))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    fn not(self) -> Tri {
        match self {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
        }
    }

    fn and(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Unknown,
        }
    }

    fn or(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::True, _) | (_, Tri::True) => Tri::True,
            (Tri::False, Tri::False) => Tri::False,
            _ => Tri::Unknown,
        }
    }

    fn of(b: bool) -> Tri {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }
}

enum Abs {
    Unknown,
    Val(Cell),
    Truth(Tri),
}

impl Abs {
    fn truth(self) -> Tri {
        match self {
            Abs::Truth(t) => t,
            _ => Tri::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Assignment {
    metric: String,
    unit: Unit,
    status: Status,
    basis: Basis,
    granularity: Granularity,
    year: i32,
}

impl Assignment {
    fn lookup(&self, column: &str) -> Option<Cell> {
        Some(match column {
            "metric" => Cell::Text(self.metric.clone()),
            "unit" => Cell::Text(self.unit.as_str().into()),
            "status" => Cell::Text(self.status.as_str().into()),
            "basis" => Cell::Text(self.basis.as_str().into()),
            "period_granularity" => Cell::Text(self.granularity.as_str().into()),
            "period_year" => Cell::Int(i64::from(self.year)),
            _ => return None,
        })
    }
}

fn compare(op: BinaryOp, a: &Cell, b: &Cell) -> Tri {
    let ord = match (a, b) {
        (Cell::Null, _) | (_, Cell::Null) => return Tri::Unknown,
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        _ => match (a.as_decimal(), b.as_decimal()) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => return Tri::Unknown,
        },
    };
    Tri::of(match op {
        BinaryOp::Eq => ord.is_eq(),
        BinaryOp::NotEq => ord.is_ne(),
        BinaryOp::Lt => ord.is_lt(),
        BinaryOp::Le => ord.is_le(),
        BinaryOp::Gt => ord.is_gt(),
        BinaryOp::Ge => ord.is_ge(),
        _ => return Tri::Unknown,
    })
}

fn literal_cell(l: &Literal) -> Cell {
    match l {
        Literal::Null => Cell::Null,
        Literal::Number(d) => Cell::Decimal(*d),
        Literal::Str(s) => Cell::Text(s.clone()),
    }
}

fn eval(e: &Expr, a: &Assignment) -> Abs {
    match e {
        Expr::Column(c) => a.lookup(c).map_or(Abs::Unknown, Abs::Val),
        Expr::Literal(l) => Abs::Val(literal_cell(l)),
        Expr::Not(inner) => Abs::Truth(eval(inner, a).truth().not()),
        Expr::Neg(inner) => match eval(inner, a) {
            Abs::Val(c) => c.as_decimal().map_or(Abs::Unknown, |d| Abs::Val(Cell::Decimal(-d))),
            _ => Abs::Unknown,
        },
        Expr::Binary { op: BinaryOp::And, left, right } => {
            Abs::Truth(eval(left, a).truth().and(eval(right, a).truth()))
        }
        Expr::Binary { op: BinaryOp::Or, left, right } => Abs::Truth(eval(left, a).truth().or(eval(right, a).truth())),
        Expr::Binary { op, left, right } if op.is_comparison() => match (eval(left, a), eval(right, a)) {
            (Abs::Val(x), Abs::Val(y)) => Abs::Truth(compare(*op, &x, &y)),
            _ => Abs::Truth(Tri::Unknown),
        },
        Expr::Binary { op, left, right } => match (eval(left, a), eval(right, a)) {
            (Abs::Val(x), Abs::Val(y)) => match (x.as_decimal(), y.as_decimal()) {
                (Some(x), Some(y)) => {
                    let r = match op {
                        BinaryOp::Add => x.checked_add(y),
                        BinaryOp::Sub => x.checked_sub(y),
                        BinaryOp::Mul => x.checked_mul(y),
                        BinaryOp::Div => x.checked_div(y),
                        _ => None,
                    };
                    r.map_or(Abs::Unknown, |d| Abs::Val(Cell::Decimal(d)))
                }
                _ => Abs::Unknown,
            },
            _ => Abs::Unknown,
        },
        Expr::InList { expr, list, negated } => {
            let Abs::Val(x) = eval(expr, a) else { return Abs::Truth(Tri::Unknown) };
            let mut t = Tri::False;
            for item in list {
                t = t.or(match eval(item, a) {
                    Abs::Val(y) => compare(BinaryOp::Eq, &x, &y),
                    _ => Tri::Unknown,
                });
            }
            Abs::Truth(if *negated { t.not() } else { t })
        }
        Expr::Between { expr, low, high, negated } => {
            let t = match (eval(expr, a), eval(low, a), eval(high, a)) {
                (Abs::Val(x), Abs::Val(l), Abs::Val(h)) => {
                    compare(BinaryOp::Ge, &x, &l).and(compare(BinaryOp::Le, &x, &h))
                }
                _ => Tri::Unknown,
            };
            Abs::Truth(if *negated { t.not() } else { t })
        }
        Expr::IsNull { expr, negated } => match eval(expr, a) {
            Abs::Val(c) => Abs::Truth(Tri::of(matches!(c, Cell::Null) != *negated)),
            _ => Abs::Truth(Tri::Unknown),
        },
        Expr::Agg { .. } => Abs::Unknown,
    }
}

const OTHER_METRIC: &str = "__other_metric__";

fn all_exprs(q: &Select) -> Vec<&Expr> {
    let mut out: Vec<&Expr> = q
        .items
        .iter()
        .filter_map(|i| match i {
            SelectItem::Expr { expr, .. } => Some(expr),
            SelectItem::Wildcard => None,
        })
        .collect();
    out.extend(q.selection.iter());
    out.extend(q.group_by.iter());
    out.extend(q.order_by.iter().map(|o| &o.expr));
    out
}

/// What a scalar expression measures, if it measures a single thing.
fn semantics_of(e: &Expr, card: &SchemaCard) -> Option<UnitSemantics> {
    match e {
        Expr::Column(c) => card.column(c).map(|c| c.unit_semantics),
        Expr::Neg(inner) => semantics_of(inner, card),
        Expr::Agg { func: AggFunc::Count, .. } => None,
        Expr::Agg { arg: Some(arg), .. } => semantics_of(arg, card),
        Expr::Binary { op, left, .. } if op.is_arithmetic() => semantics_of(left, card),
        _ => None,
    }
}

fn compatible(op: BinaryOp, a: UnitSemantics, b: UnitSemantics) -> bool {
    a == b || (matches!(op, BinaryOp::Mul | BinaryOp::Div) && [a, b].contains(&UnitSemantics::Multiplier))
}

fn expected_periods(intent: &QueryIntent, years: &BTreeSet<i32>) -> BTreeSet<(Granularity, i32)> {
    let every = |keep: &dyn Fn(Granularity, i32) -> bool| {
        Granularity::ALL.iter().flat_map(|&g| years.iter().map(move |&y| (g, y))).filter(|&(g, y)| keep(g, y)).collect()
    };
    if let Some(pair) = intent.comparison_periods() {
        return pair.into_iter().collect();
    }
    match intent.period_filter {
        None => every(&|_, _| true),
        Some(p) => every(&|g, y| p.admits(g, y)),
    }
}

fn unit_of(metric: &str, card: &SchemaCard) -> Vec<Unit> {
    card.metric_unit(metric).map_or_else(|| vec![Unit::USD, Unit::Percent, Unit::Count], |u| vec![u])
}

/// Check a candidate query: it must parse, execute against the `kpi`
/// schema, and select exactly the metrics, periods, statuses and bases the
/// intent asks for without mixing units.
pub fn validate_sql(sql: &str, intent: &QueryIntent, card: &SchemaCard) -> SqlValidation {
    let q = match parse_select(sql) {
        Ok(q) => q,
        Err(e) => return SqlValidation::syntax_failure(e.to_string()),
    };
    let empty = Table { name: TABLE.to_string(), columns: columns(), rows: Vec::new() };
    if let Err(e) = execute(&empty, &q) {
        return SqlValidation::syntax_failure(e.to_string());
    }
    validate_select(&q, intent, card)
}

pub fn validate_select(q: &Select, intent: &QueryIntent, card: &SchemaCard) -> SqlValidation {
    let mut violations = Vec::new();
    let mut push = |check, rule: &str, detail: String| violations.push(Violation { check, rule: rule.into(), detail });

    // Candidate values from the query and the intent.
    let mut strings = BTreeSet::new();
    let mut years: BTreeSet<i32> = [crate::rules::MIN_YEAR, crate::rules::MAX_YEAR].into();
    if let Some(w) = &q.selection {
        w.walk(&mut |e| match e {
            Expr::Literal(Literal::Str(s)) => {
                strings.insert(s.clone());
            }
            Expr::Literal(Literal::Number(d)) if d.fract().is_zero() => {
                if let Some(y) = d.to_i32().filter(|y| (1000..=9999).contains(y)) {
                    years.extend([y - 1, y, y + 1]);
                }
            }
            _ => {}
        });
    }
    match intent.period_filter {
        Some(PeriodFilter::Period { year: Some(y), .. }) => years.extend([y - 2, y - 1, y, y + 1]),
        Some(PeriodFilter::YearRange { from, to, .. }) => years.extend([from - 1, from, to, to + 1]),
        _ => {}
    }
    let mut metrics: BTreeSet<String> = card.metrics.iter().map(|m| m.name.clone()).collect();
    metrics.extend(intent.metrics.iter().cloned());
    let enum_values: BTreeSet<String> = card.columns.iter().flat_map(|c| c.values.iter().cloned()).collect();
    metrics.extend(strings.iter().filter(|s| !enum_values.contains(*s)).cloned());
    metrics.insert(OTHER_METRIC.to_string());

    let mut admitted: Vec<Assignment> = Vec::new();
    for metric in &metrics {
        for unit in unit_of(metric, card) {
            for status in Status::ALL {
                for basis in Basis::ALL {
                    for granularity in Granularity::ALL {
                        for &year in &years {
                            let a = Assignment { metric: metric.clone(), unit, status, basis, granularity, year };
                            let keep = q.selection.as_ref().is_none_or(|w| eval(w, &a).truth() != Tri::False);
                            if keep {
                                admitted.push(a);
                            }
                        }
                    }
                }
            }
        }
    }

    // Metric scope and units.
    let got_metrics: BTreeSet<&str> = admitted.iter().map(|a| a.metric.as_str()).collect();
    let want_metrics: BTreeSet<&str> = intent.metrics.iter().map(String::as_str).collect();
    if got_metrics != want_metrics {
        push(
            ConstraintKind::Unit,
            "metric_scope",
            format!("query selects metrics {:?}, question asks for {:?}", got_metrics, want_metrics),
        );
    }
    let metric_units: BTreeSet<Unit> = intent.metrics.iter().flat_map(|m| unit_of(m, card)).collect();
    if let Some(w) = &q.selection {
        w.walk(&mut |e| {
            let mut check_unit_literal = |lit: &Expr| {
                if let Expr::Literal(Literal::Str(s)) = lit {
                    if !metric_units.iter().any(|u| u.as_str() == s) {
                        push(
                            ConstraintKind::Unit,
                            "unit_predicate",
                            format!("unit filter `{s}` contradicts the metric unit"),
                        );
                    }
                }
            };
            match e {
                Expr::Binary { op: BinaryOp::Eq, left, right } if **left == Expr::col("unit") => {
                    check_unit_literal(right)
                }
                Expr::Binary { op: BinaryOp::Eq, left, right } if **right == Expr::col("unit") => {
                    check_unit_literal(left)
                }
                Expr::InList { expr, list, negated: false } if **expr == Expr::col("unit") => {
                    list.iter().for_each(&mut check_unit_literal)
                }
                _ => {}
            }
        });
    }
    for e in all_exprs(q) {
        e.walk(&mut |sub| {
            if let Expr::Binary { op, left, right } = sub {
                if op.is_comparison() || op.is_arithmetic() {
                    if let (Some(a), Some(b)) = (semantics_of(left, card), semantics_of(right, card)) {
                        if !compatible(*op, a, b) {
                            push(
                                ConstraintKind::Unit,
                                "semantics_mismatch",
                                format!("`{sub}` combines {a:?} with {b:?}"),
                            );
                        }
                    }
                }
            }
        });
    }
    let grouped_by_unit = q.group_by.iter().any(|g| *g == Expr::col("metric") || *g == Expr::col("unit"));
    let admitted_units: BTreeSet<Unit> = admitted.iter().map(|a| a.unit).collect();
    if !grouped_by_unit && admitted_units.len() > 1 {
        for e in all_exprs(q) {
            e.walk(&mut |sub| {
                if let Expr::Agg { func, arg: Some(arg) } = sub {
                    if *func != AggFunc::Count && semantics_of(arg, card) == Some(UnitSemantics::Measure) {
                        push(
                            ConstraintKind::Unit,
                            "mixed_unit_aggregate",
                            format!("`{sub}` aggregates across units {admitted_units:?}"),
                        );
                    }
                }
            });
        }
    }

    // Periods.
    let got_periods: BTreeSet<(Granularity, i32)> = admitted.iter().map(|a| (a.granularity, a.year)).collect();
    let want_periods = expected_periods(intent, &years);
    if got_periods != want_periods {
        let extra: Vec<String> =
            got_periods.difference(&want_periods).take(4).map(|(g, y)| format!("{g} {y}")).collect();
        let missing: Vec<String> =
            want_periods.difference(&got_periods).take(4).map(|(g, y)| format!("{g} {y}")).collect();
        push(
            ConstraintKind::Temporal,
            "period_alignment",
            format!("extra periods {extra:?}, missing periods {missing:?}"),
        );
    }

    // Qualifiers.
    let got_status: BTreeSet<Status> = admitted.iter().map(|a| a.status).collect();
    let want_status: BTreeSet<Status> = Status::ALL.into_iter().filter(|s| intent.status_filter.admits(*s)).collect();
    if got_status != want_status {
        push(
            ConstraintKind::Qualifier,
            "status",
            format!("query admits {got_status:?}, question asks for {want_status:?}"),
        );
    }
    let got_basis: BTreeSet<Basis> = admitted.iter().map(|a| a.basis).collect();
    let want_basis: BTreeSet<Basis> =
        Basis::ALL.into_iter().filter(|b| intent.basis_filter.is_none_or(|f: BasisFilter| f.admits(*b))).collect();
    if got_basis != want_basis {
        push(
            ConstraintKind::Qualifier,
            "basis",
            format!("query admits {got_basis:?}, question asks for {want_basis:?}"),
        );
    }

    let has = |k| violations.iter().any(|v| v.check == k);
    SqlValidation {
        syntax_ok: true,
        unit_consistent: !has(ConstraintKind::Unit),
        temporal_aligned: !has(ConstraintKind::Temporal),
        qualifier_correct: !has(ConstraintKind::Qualifier),
        violations,
    }
}
