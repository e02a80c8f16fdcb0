//! Seeded semantic faults injected into correct template SQL.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::rules::{Granularity, Unit};
use crate::sql::ast::{AggFunc, BinaryOp, Expr, Literal, Select, SelectItem};
use crate::sql::parse_select;
use crate::text_to_sql::{template_sql, Aggregation, BasisFilter, PeriodFilter, QueryIntent, StatusFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationClass {
    Unit,
    Period,
    Qualifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlMutation {
    pub class: MutationClass,
    pub operator: String,
    pub intent: QueryIntent,
    pub original_sql: String,
    pub mutated_sql: String,
}

const PERCENT_METRICS: &[&str] = &["operating_margin", "gross_margin"];
const USD_METRICS: &[&str] = &["revenue", "operating_income", "free_cash_flow"];

fn unit_of(metric: &str) -> Unit {
    if PERCENT_METRICS.contains(&metric) {
        Unit::Percent
    } else {
        Unit::USD
    }
}

fn conjuncts(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary { op: BinaryOp::And, left, right } => {
            conjuncts(left, out);
            conjuncts(right, out);
        }
        other => out.push(other.clone()),
    }
}

fn and_all(parts: Vec<Expr>) -> Option<Expr> {
    parts.into_iter().reduce(|a, b| Expr::binary(BinaryOp::And, a, b))
}

fn is_pred_on(e: &Expr, column: &str) -> bool {
    let mut found = false;
    e.walk(&mut |x| found |= *x == Expr::col(column));
    found
}

fn str_lit(s: &str) -> Expr {
    Expr::Literal(Literal::Str(s.to_string()))
}

fn num(n: i64) -> Expr {
    Expr::Literal(Literal::Number(Decimal::from(n)))
}

fn eq(col: &str, v: Expr) -> Expr {
    Expr::binary(BinaryOp::Eq, Expr::col(col), v)
}

struct Parts {
    q: Select,
    conds: Vec<Expr>,
}

impl Parts {
    fn new(sql: &str) -> Self {
        let q = parse_select(sql).expect("template parses");
        let mut conds = Vec::new();
        if let Some(w) = &q.selection {
            conjuncts(w, &mut conds);
        }
        Self { q, conds }
    }

    fn replace(&mut self, column: &str, with: Expr) {
        for c in &mut self.conds {
            if is_pred_on(c, column) {
                *c = with.clone();
            }
        }
    }

    fn remove(&mut self, column: &str) {
        self.conds.retain(|c| !is_pred_on(c, column));
    }

    fn finish(mut self) -> String {
        self.q.selection = and_all(self.conds);
        self.q.to_string()
    }
}

fn base_intent(rng: &mut ChaCha8Rng) -> QueryIntent {
    let metric =
        if rng.gen_bool(0.5) { PERCENT_METRICS.choose(rng) } else { USD_METRICS.choose(rng) }.expect("non-empty");
    let mut i = QueryIntent::new(metric);
    let g = *[Granularity::Q1, Granularity::Q2, Granularity::Q3, Granularity::Q4, Granularity::FY]
        .choose(rng)
        .expect("non-empty");
    i.period_filter = Some(PeriodFilter::Period { granularity: g, year: Some(rng.gen_range(2019..=2024)) });
    if rng.gen_bool(0.3) {
        i.status_filter = StatusFilter::GuidanceOnly;
    }
    i
}

fn other_unit_metric(rng: &mut ChaCha8Rng, metric: &str) -> &'static str {
    match unit_of(metric) {
        Unit::Percent => USD_METRICS.choose(rng),
        _ => PERCENT_METRICS.choose(rng),
    }
    .expect("non-empty")
}

fn unit_mutation(rng: &mut ChaCha8Rng, k: usize) -> SqlMutation {
    let mut intent = base_intent(rng);
    let metric = intent.metrics[0].clone();
    let wrong = other_unit_metric(rng, &metric);
    let (operator, original, mutated) = match k % 5 {
        0 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.replace("metric", eq("metric", str_lit(wrong)));
            ("swap_metric_unit", sql, p.finish())
        }
        1 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let u = if unit_of(&metric) == Unit::Percent { Unit::USD } else { Unit::Percent };
            p.conds.push(eq("unit", str_lit(u.as_str())));
            ("wrong_unit_predicate", sql, p.finish())
        }
        2 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.conds.push(Expr::binary(BinaryOp::Gt, Expr::col("value"), Expr::col("period_year")));
            ("value_vs_year", sql, p.finish())
        }
        3 => {
            intent.aggregation = Aggregation::Avg;
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let list = vec![str_lit(&metric), str_lit(wrong)];
            p.replace("metric", Expr::InList { expr: Box::new(Expr::col("metric")), list, negated: false });
            ("mixed_unit_average", sql, p.finish())
        }
        _ => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let sum = Expr::binary(BinaryOp::Add, Expr::col("value"), Expr::col("confidence"));
            p.q.items = vec![SelectItem::Expr { expr: sum, alias: Some("value".into()) }];
            p.q.order_by.clear();
            ("value_plus_confidence", sql, p.finish())
        }
    };
    SqlMutation {
        class: MutationClass::Unit,
        operator: operator.into(),
        intent,
        original_sql: original,
        mutated_sql: mutated,
    }
}

fn period_mutation(rng: &mut ChaCha8Rng, k: usize) -> SqlMutation {
    let mut intent = base_intent(rng);
    let Some(PeriodFilter::Period { granularity: g, year: Some(y) }) = intent.period_filter else {
        unreachable!("base intent has a period")
    };
    let (operator, original, mutated) = match k % 5 {
        0 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let shift = if rng.gen_bool(0.5) { 1 } else { -1 };
            p.replace("period_year", eq("period_year", num(i64::from(y + shift))));
            ("shift_year", sql, p.finish())
        }
        1 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let other = Granularity::ALL.iter().copied().filter(|x| *x != g).collect::<Vec<_>>();
            p.replace(
                "period_granularity",
                eq("period_granularity", str_lit(other.choose(rng).expect("non-empty").as_str())),
            );
            ("swap_granularity", sql, p.finish())
        }
        2 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.remove("period_year");
            ("drop_year", sql, p.finish())
        }
        3 => {
            intent.comparison = Some(crate::text_to_sql::Comparison::YoY);
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let list = vec![num(i64::from(y - 2)), num(i64::from(y))];
            p.replace("period_year", Expr::InList { expr: Box::new(Expr::col("period_year")), list, negated: false });
            ("non_adjacent_yoy", sql, p.finish())
        }
        _ => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.replace("period_year", Expr::binary(BinaryOp::Ge, Expr::col("period_year"), num(i64::from(y))));
            ("open_year_bound", sql, p.finish())
        }
    };
    SqlMutation {
        class: MutationClass::Period,
        operator: operator.into(),
        intent,
        original_sql: original,
        mutated_sql: mutated,
    }
}

fn qualifier_mutation(rng: &mut ChaCha8Rng, k: usize) -> SqlMutation {
    let mut intent = base_intent(rng);
    let (operator, original, mutated) = match k % 5 {
        0 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let flipped = if intent.status_filter == StatusFilter::GuidanceOnly { "Actual" } else { "Guidance" };
            p.replace("status", eq("status", str_lit(flipped)));
            ("flip_status", sql, p.finish())
        }
        1 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.remove("status");
            ("drop_status", sql, p.finish())
        }
        2 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.conds.push(eq("basis", str_lit("NonGAAP")));
            ("add_non_gaap", sql, p.finish())
        }
        3 => {
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            let s = if intent.status_filter == StatusFilter::GuidanceOnly { "Guidance" } else { "Actual" };
            p.replace("status", Expr::binary(BinaryOp::NotEq, Expr::col("status"), str_lit(s)));
            ("negate_status", sql, p.finish())
        }
        _ => {
            intent.basis_filter = Some(BasisFilter::GAAP);
            let sql = template_sql(&intent);
            let mut p = Parts::new(&sql);
            p.replace("basis", eq("basis", str_lit("GAAP")));
            ("gaap_excludes_unstated", sql, p.finish())
        }
    };
    SqlMutation {
        class: MutationClass::Qualifier,
        operator: operator.into(),
        intent,
        original_sql: original,
        mutated_sql: mutated,
    }
}

/// `per_class` mutations of each class, deterministic in `seed`.
pub fn generate_mutations(seed: u64, per_class: usize) -> Vec<SqlMutation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..per_class {
        out.push(unit_mutation(&mut rng, k));
    }
    for k in 0..per_class {
        out.push(period_mutation(&mut rng, k));
    }
    for k in 0..per_class {
        out.push(qualifier_mutation(&mut rng, k));
    }
    out
}

/// Aggregate functions in a mutated query, for reports.
pub fn aggregates(sql: &str) -> Vec<AggFunc> {
    let mut out = Vec::new();
    if let Ok(q) = parse_select(sql) {
        for item in &q.items {
            if let SelectItem::Expr { expr, .. } = item {
                expr.walk(&mut |e| {
                    if let Expr::Agg { func, .. } = e {
                        out.push(*func);
                    }
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutations_change_sql_and_parse() {
        let ms = generate_mutations(42, 10);
        assert_eq!(ms.len(), 30);
        for m in &ms {
            assert_ne!(m.original_sql, m.mutated_sql, "{}", m.operator);
            parse_select(&m.mutated_sql).unwrap();
        }
        assert_eq!(generate_mutations(42, 10), ms);
        assert_eq!(aggregates(&ms[3].mutated_sql), vec![AggFunc::Avg]);
    }
}
