use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ast::{AggFunc, BinaryOp, Expr, Literal, Select, SelectItem};
use super::SqlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ColumnType {
    Text,
    Int,
    Decimal,
    Date,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Text => "TEXT",
            Self::Int => "INT",
            Self::Decimal => "DECIMAL",
            Self::Date => "DATE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl ColumnDef {
    pub fn new(name: &str, ty: ColumnType) -> Self {
        Self { name: name.to_string(), ty }
    }
}

/// A typed value. In JSON, decimals and dates are strings so no precision
/// is lost; the column type says how to read them back.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Null,
    Int(i64),
    Decimal(Decimal),
    Text(String),
    Date(NaiveDate),
}

impl Cell {
    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Cell::Int(i) => Some(Decimal::from(*i)),
            Cell::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Null => serde_json::Value::Null,
            Cell::Int(i) => (*i).into(),
            Cell::Decimal(d) => d.to_string().into(),
            Cell::Text(s) => s.clone().into(),
            Cell::Date(d) => d.to_string().into(),
        }
    }

    pub fn from_json(v: &serde_json::Value, ty: ColumnType) -> Result<Self, String> {
        use serde_json::Value as J;
        match (v, ty) {
            (J::Null, _) => Ok(Cell::Null),
            (J::Number(n), ColumnType::Int) => n.as_i64().map(Cell::Int).ok_or_else(|| format!("{n} is not an INT")),
            (J::String(s), ColumnType::Decimal) => s.parse().map(Cell::Decimal).map_err(|e| format!("{s}: {e}")),
            (J::Number(n), ColumnType::Decimal) => {
                n.to_string().parse().map(Cell::Decimal).map_err(|e| format!("{n}: {e}"))
            }
            (J::String(s), ColumnType::Text) => Ok(Cell::Text(s.clone())),
            (J::String(s), ColumnType::Date) => s.parse().map(Cell::Date).map_err(|e| format!("{s}: {e}")),
            (other, ty) => Err(format!("{other} does not fit a {ty} column")),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("NULL"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Decimal(d) => write!(f, "{d}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Date(d) => write!(f, "{d}"),
        }
    }
}

/// In-memory relation the engine queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<Cell>>,
    pub row_count: usize,
}

impl ResultTable {
    pub fn empty(columns: Vec<ColumnDef>) -> Self {
        Self { columns, rows: Vec::new(), row_count: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

impl<'de> Deserialize<'de> for ResultTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            columns: Vec<ColumnDef>,
            rows: Vec<Vec<serde_json::Value>>,
            row_count: usize,
        }
        let raw = Raw::deserialize(d)?;
        let mut rows = Vec::with_capacity(raw.rows.len());
        for r in raw.rows {
            if r.len() != raw.columns.len() {
                return Err(D::Error::custom("row width differs from column count"));
            }
            let row = r
                .iter()
                .zip(&raw.columns)
                .map(|(v, c)| Cell::from_json(v, c.ty))
                .collect::<Result<Vec<_>, _>>()
                .map_err(D::Error::custom)?;
            rows.push(row);
        }
        if rows.len() != raw.row_count {
            return Err(D::Error::custom("row_count disagrees with rows"));
        }
        Ok(Self { columns: raw.columns, rows, row_count: raw.row_count })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Col(ColumnType),
    Bool,
    Null,
}

impl Ty {
    fn numeric(self) -> bool {
        matches!(self, Ty::Col(ColumnType::Int | ColumnType::Decimal) | Ty::Null)
    }

    fn name(self) -> String {
        match self {
            Ty::Col(c) => c.to_string(),
            Ty::Bool => "BOOLEAN".into(),
            Ty::Null => "NULL".into(),
        }
    }
}

fn exec_err(msg: impl Into<String>) -> SqlError {
    SqlError::ExecutionError(msg.into())
}

fn comparable(a: Ty, b: Ty) -> bool {
    use ColumnType::*;
    a == b
        || a == Ty::Null
        || b == Ty::Null
        || (a.numeric() && b.numeric())
        || matches!((a, b), (Ty::Col(Date), Ty::Col(Text)) | (Ty::Col(Text), Ty::Col(Date)))
}

struct Schema<'a> {
    table: &'a Table,
}

impl Schema<'_> {
    fn column(&self, name: &str) -> Result<(usize, ColumnType), SqlError> {
        self.table
            .columns
            .iter()
            .position(|c| c.name == name)
            .map(|i| (i, self.table.columns[i].ty))
            .ok_or_else(|| exec_err(format!("unknown column `{name}`")))
    }

    fn infer(&self, e: &Expr) -> Result<Ty, SqlError> {
        Ok(match e {
            Expr::Column(c) => Ty::Col(self.column(c)?.1),
            Expr::Literal(Literal::Null) => Ty::Null,
            Expr::Literal(Literal::Number(n)) => {
                if n.fract().is_zero() && i64::try_from(*n).is_ok() {
                    Ty::Col(ColumnType::Int)
                } else {
                    Ty::Col(ColumnType::Decimal)
                }
            }
            Expr::Literal(Literal::Str(_)) => Ty::Col(ColumnType::Text),
            Expr::Not(inner) => {
                let t = self.infer(inner)?;
                if !matches!(t, Ty::Bool | Ty::Null) {
                    return Err(exec_err(format!("NOT applied to {}", t.name())));
                }
                Ty::Bool
            }
            Expr::Neg(inner) => {
                let t = self.infer(inner)?;
                if !t.numeric() {
                    return Err(exec_err(format!("cannot negate {}", t.name())));
                }
                t
            }
            Expr::Binary { op, left, right } => {
                let (l, r) = (self.infer(left)?, self.infer(right)?);
                match op {
                    BinaryOp::And | BinaryOp::Or => {
                        if !matches!(l, Ty::Bool | Ty::Null) || !matches!(r, Ty::Bool | Ty::Null) {
                            return Err(exec_err(format!("{e}: AND/OR need boolean operands")));
                        }
                        Ty::Bool
                    }
                    op if op.is_comparison() => {
                        if !comparable(l, r) || l == Ty::Bool {
                            return Err(exec_err(format!("cannot compare {} with {}", l.name(), r.name())));
                        }
                        Ty::Bool
                    }
                    _ => {
                        if !l.numeric() || !r.numeric() {
                            return Err(exec_err(format!("arithmetic on {} and {}", l.name(), r.name())));
                        }
                        if *op != BinaryOp::Div && l == Ty::Col(ColumnType::Int) && r == Ty::Col(ColumnType::Int) {
                            Ty::Col(ColumnType::Int)
                        } else {
                            Ty::Col(ColumnType::Decimal)
                        }
                    }
                }
            }
            Expr::InList { expr, list, .. } => {
                let t = self.infer(expr)?;
                for item in list {
                    let it = self.infer(item)?;
                    if !comparable(t, it) {
                        return Err(exec_err(format!("IN list mixes {} with {}", t.name(), it.name())));
                    }
                }
                Ty::Bool
            }
            Expr::Between { expr, low, high, .. } => {
                let t = self.infer(expr)?;
                for b in [low, high] {
                    let bt = self.infer(b)?;
                    if !comparable(t, bt) {
                        return Err(exec_err(format!("BETWEEN mixes {} with {}", t.name(), bt.name())));
                    }
                }
                Ty::Bool
            }
            Expr::IsNull { expr, .. } => {
                self.infer(expr)?;
                Ty::Bool
            }
            Expr::Agg { func, arg } => {
                let t = match arg {
                    Some(a) => {
                        if a.contains_aggregate() {
                            return Err(exec_err("nested aggregate"));
                        }
                        self.infer(a)?
                    }
                    None => Ty::Null,
                };
                match func {
                    AggFunc::Count => Ty::Col(ColumnType::Int),
                    AggFunc::Sum | AggFunc::Avg if !t.numeric() => {
                        return Err(exec_err(format!("{} over {}", func.name(), t.name())));
                    }
                    AggFunc::Sum => t,
                    AggFunc::Avg => Ty::Col(ColumnType::Decimal),
                    AggFunc::Min | AggFunc::Max if t == Ty::Bool => {
                        return Err(exec_err(format!("{} over BOOLEAN", func.name())));
                    }
                    AggFunc::Min | AggFunc::Max => t,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Null,
    Bool(bool),
    Int(i64),
    Dec(Decimal),
    Text(String),
    Date(NaiveDate),
}

impl From<&Cell> for Val {
    fn from(c: &Cell) -> Self {
        match c {
            Cell::Null => Val::Null,
            Cell::Int(i) => Val::Int(*i),
            Cell::Decimal(d) => Val::Dec(*d),
            Cell::Text(s) => Val::Text(s.clone()),
            Cell::Date(d) => Val::Date(*d),
        }
    }
}

impl Val {
    fn num(&self) -> Option<Decimal> {
        match self {
            Val::Int(i) => Some(Decimal::from(*i)),
            Val::Dec(d) => Some(*d),
            _ => None,
        }
    }

    fn into_cell(self, ty: ColumnType) -> Result<Cell, SqlError> {
        Ok(match (self, ty) {
            (Val::Null, _) => Cell::Null,
            (Val::Int(i), ColumnType::Int) => Cell::Int(i),
            (Val::Int(i), ColumnType::Decimal) => Cell::Decimal(Decimal::from(i)),
            (Val::Dec(d), ColumnType::Decimal) => Cell::Decimal(d),
            (Val::Dec(d), ColumnType::Int) => Cell::Int(i64::try_from(d).map_err(|e| exec_err(e.to_string()))?),
            (Val::Text(s), ColumnType::Text) => Cell::Text(s),
            (Val::Date(d), ColumnType::Date) => Cell::Date(d),
            (v, ty) => return Err(exec_err(format!("{v:?} cannot be stored as {ty}"))),
        })
    }

    /// SQL comparison; `None` when either side is NULL.
    fn compare(&self, other: &Val) -> Result<Option<Ordering>, SqlError> {
        Ok(match (self, other) {
            (Val::Null, _) | (_, Val::Null) => None,
            (Val::Text(a), Val::Text(b)) => Some(a.cmp(b)),
            (Val::Date(a), Val::Date(b)) => Some(a.cmp(b)),
            (Val::Date(a), Val::Text(b)) => Some(a.cmp(&parse_date(b)?)),
            (Val::Text(a), Val::Date(b)) => Some(parse_date(a)?.cmp(b)),
            (Val::Bool(a), Val::Bool(b)) => Some(a.cmp(b)),
            (a, b) => match (a.num(), b.num()) {
                (Some(x), Some(y)) => Some(x.cmp(&y)),
                _ => return Err(exec_err(format!("cannot compare {a:?} with {b:?}"))),
            },
        })
    }

    /// Total order for sorting: NULL first.
    fn sort_cmp(&self, other: &Val) -> Ordering {
        match (self, other) {
            (Val::Null, Val::Null) => Ordering::Equal,
            (Val::Null, _) => Ordering::Less,
            (_, Val::Null) => Ordering::Greater,
            (a, b) => a.compare(b).ok().flatten().unwrap_or(Ordering::Equal),
        }
    }

    fn group_key(&self) -> String {
        match self {
            Val::Dec(d) => format!("n{}", d.normalize()),
            Val::Int(i) => format!("n{i}"),
            other => format!("{other:?}"),
        }
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, SqlError> {
    s.parse().map_err(|_| exec_err(format!("`{s}` is not a date")))
}

fn literal(l: &Literal) -> Val {
    match l {
        Literal::Null => Val::Null,
        Literal::Number(n) if n.fract().is_zero() => i64::try_from(*n).map_or(Val::Dec(*n), Val::Int),
        Literal::Number(n) => Val::Dec(*n),
        Literal::Str(s) => Val::Text(s.clone()),
    }
}

fn truth(v: &Val) -> Result<Option<bool>, SqlError> {
    match v {
        Val::Null => Ok(None),
        Val::Bool(b) => Ok(Some(*b)),
        other => Err(exec_err(format!("{other:?} is not a boolean"))),
    }
}

fn from_truth(t: Option<bool>) -> Val {
    t.map_or(Val::Null, Val::Bool)
}

struct Ctx<'a> {
    schema: &'a Schema<'a>,
    /// Representative row (first of the group for aggregate queries).
    row: Option<&'a [Cell]>,
    group: Option<&'a [&'a [Cell]]>,
}

impl Ctx<'_> {
    fn eval(&self, e: &Expr) -> Result<Val, SqlError> {
        match e {
            Expr::Column(c) => {
                let (i, _) = self.schema.column(c)?;
                Ok(self.row.map_or(Val::Null, |r| Val::from(&r[i])))
            }
            Expr::Literal(l) => Ok(literal(l)),
            Expr::Not(inner) => Ok(from_truth(truth(&self.eval(inner)?)?.map(|b| !b))),
            Expr::Neg(inner) => Ok(match self.eval(inner)? {
                Val::Int(i) => Val::Int(i.checked_neg().ok_or_else(|| exec_err("integer overflow"))?),
                Val::Dec(d) => Val::Dec(-d),
                Val::Null => Val::Null,
                v => return Err(exec_err(format!("cannot negate {v:?}"))),
            }),
            Expr::Binary { op: BinaryOp::And, left, right } => {
                let l = truth(&self.eval(left)?)?;
                if l == Some(false) {
                    return Ok(Val::Bool(false));
                }
                let r = truth(&self.eval(right)?)?;
                Ok(match (l, r) {
                    (_, Some(false)) => Val::Bool(false),
                    (Some(true), Some(true)) => Val::Bool(true),
                    _ => Val::Null,
                })
            }
            Expr::Binary { op: BinaryOp::Or, left, right } => {
                let l = truth(&self.eval(left)?)?;
                if l == Some(true) {
                    return Ok(Val::Bool(true));
                }
                let r = truth(&self.eval(right)?)?;
                Ok(match (l, r) {
                    (_, Some(true)) => Val::Bool(true),
                    (Some(false), Some(false)) => Val::Bool(false),
                    _ => Val::Null,
                })
            }
            Expr::Binary { op, left, right } if op.is_comparison() => {
                let ord = self.eval(left)?.compare(&self.eval(right)?)?;
                Ok(from_truth(ord.map(|o| match op {
                    BinaryOp::Eq => o == Ordering::Equal,
                    BinaryOp::NotEq => o != Ordering::Equal,
                    BinaryOp::Lt => o == Ordering::Less,
                    BinaryOp::Le => o != Ordering::Greater,
                    BinaryOp::Gt => o == Ordering::Greater,
                    _ => o != Ordering::Less,
                })))
            }
            Expr::Binary { op, left, right } => arith(*op, self.eval(left)?, self.eval(right)?),
            Expr::InList { expr, list, negated } => {
                let v = self.eval(expr)?;
                let mut saw_null = false;
                for item in list {
                    match v.compare(&self.eval(item)?)? {
                        Some(Ordering::Equal) => return Ok(Val::Bool(!negated)),
                        None => saw_null = true,
                        _ => {}
                    }
                }
                Ok(if saw_null { Val::Null } else { Val::Bool(*negated) })
            }
            Expr::Between { expr, low, high, negated } => {
                let v = self.eval(expr)?;
                let lo = v.compare(&self.eval(low)?)?.map(|o| o != Ordering::Less);
                let hi = v.compare(&self.eval(high)?)?.map(|o| o != Ordering::Greater);
                let within = match (lo, hi) {
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                };
                Ok(from_truth(within.map(|w| w != *negated)))
            }
            Expr::IsNull { expr, negated } => Ok(Val::Bool((self.eval(expr)? == Val::Null) != *negated)),
            Expr::Agg { func, arg } => self.aggregate(*func, arg.as_deref()),
        }
    }

    fn aggregate(&self, func: AggFunc, arg: Option<&Expr>) -> Result<Val, SqlError> {
        let group = self.group.ok_or_else(|| exec_err("aggregate outside an aggregate query"))?;
        let Some(arg) = arg else {
            return Ok(Val::Int(group.len() as i64));
        };
        let mut vals = Vec::with_capacity(group.len());
        for row in group {
            let ctx = Ctx { schema: self.schema, row: Some(row), group: None };
            let v = ctx.eval(arg)?;
            if v != Val::Null {
                vals.push(v);
            }
        }
        match func {
            AggFunc::Count => Ok(Val::Int(vals.len() as i64)),
            AggFunc::Sum | AggFunc::Avg => {
                if vals.is_empty() {
                    return Ok(Val::Null);
                }
                let all_int = vals.iter().all(|v| matches!(v, Val::Int(_)));
                let mut sum = Decimal::ZERO;
                for v in &vals {
                    let n = v.num().ok_or_else(|| exec_err(format!("{} over non-numeric value", func.name())))?;
                    sum = sum.checked_add(n).ok_or_else(|| exec_err("numeric overflow"))?;
                }
                if func == AggFunc::Avg {
                    Ok(Val::Dec(sum / Decimal::from(vals.len())))
                } else if all_int {
                    Ok(Val::Int(i64::try_from(sum).map_err(|_| exec_err("integer overflow"))?))
                } else {
                    Ok(Val::Dec(sum))
                }
            }
            AggFunc::Min | AggFunc::Max => {
                let mut best: Option<Val> = None;
                for v in vals {
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            let o = v.compare(&b)?.unwrap_or(Ordering::Equal);
                            let take = if func == AggFunc::Min { o == Ordering::Less } else { o == Ordering::Greater };
                            if take {
                                v
                            } else {
                                b
                            }
                        }
                    });
                }
                Ok(best.unwrap_or(Val::Null))
            }
        }
    }
}

fn arith(op: BinaryOp, l: Val, r: Val) -> Result<Val, SqlError> {
    if l == Val::Null || r == Val::Null {
        return Ok(Val::Null);
    }
    if let (Val::Int(a), Val::Int(b), true) = (&l, &r, op != BinaryOp::Div) {
        let v = match op {
            BinaryOp::Add => a.checked_add(*b),
            BinaryOp::Sub => a.checked_sub(*b),
            _ => a.checked_mul(*b),
        };
        return v.map(Val::Int).ok_or_else(|| exec_err("integer overflow"));
    }
    let (a, b) = match (l.num(), r.num()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(exec_err(format!("arithmetic on {l:?} and {r:?}"))),
    };
    let v = match op {
        BinaryOp::Add => a.checked_add(b),
        BinaryOp::Sub => a.checked_sub(b),
        BinaryOp::Mul => a.checked_mul(b),
        _ if b.is_zero() => return Ok(Val::Null),
        _ => a.checked_div(b),
    };
    v.map(Val::Dec).ok_or_else(|| exec_err("numeric overflow"))
}

fn check_grouped(e: &Expr, group_by: &[Expr]) -> Result<(), SqlError> {
    if group_by.contains(e) {
        return Ok(());
    }
    match e {
        Expr::Agg { .. } | Expr::Literal(_) => Ok(()),
        Expr::Column(c) => Err(exec_err(format!("column `{c}` must appear in GROUP BY or inside an aggregate"))),
        Expr::Not(x) | Expr::Neg(x) | Expr::IsNull { expr: x, .. } => check_grouped(x, group_by),
        Expr::Binary { left, right, .. } => {
            check_grouped(left, group_by)?;
            check_grouped(right, group_by)
        }
        Expr::InList { expr, list, .. } => {
            check_grouped(expr, group_by)?;
            list.iter().try_for_each(|x| check_grouped(x, group_by))
        }
        Expr::Between { expr, low, high, .. } => {
            check_grouped(expr, group_by)?;
            check_grouped(low, group_by)?;
            check_grouped(high, group_by)
        }
    }
}

/// Run a parsed `SELECT` against a table.
pub fn execute(table: &Table, q: &Select) -> Result<ResultTable, SqlError> {
    if !q.from.eq_ignore_ascii_case(&table.name) {
        return Err(exec_err(format!("unknown table `{}`", q.from)));
    }
    let schema = Schema { table };

    let mut outputs: Vec<(String, Expr)> = Vec::new();
    for item in &q.items {
        match item {
            SelectItem::Wildcard => outputs.extend(table.columns.iter().map(|c| (c.name.clone(), Expr::col(&c.name)))),
            SelectItem::Expr { expr, alias } => {
                outputs.push((alias.clone().unwrap_or_else(|| expr.to_string()), expr.clone()));
            }
        }
    }
    let mut columns = Vec::with_capacity(outputs.len());
    for (name, e) in &outputs {
        let ty = match schema.infer(e)? {
            Ty::Col(t) => t,
            Ty::Null => ColumnType::Text,
            Ty::Bool => return Err(exec_err(format!("boolean expression `{e}` in select list"))),
        };
        columns.push(ColumnDef { name: name.clone(), ty });
    }
    // ORDER BY may name an output alias.
    let order: Vec<(Expr, bool)> = q
        .order_by
        .iter()
        .map(|o| {
            let e = match &o.expr {
                Expr::Column(c) if table.columns.iter().all(|tc| &tc.name != c) => {
                    outputs.iter().find(|(n, _)| n == c).map_or_else(|| o.expr.clone(), |(_, e)| e.clone())
                }
                other => other.clone(),
            };
            (e, o.descending)
        })
        .collect();
    for (e, _) in &order {
        schema.infer(e)?;
    }
    if let Some(w) = &q.selection {
        if w.contains_aggregate() {
            return Err(exec_err("aggregate in WHERE"));
        }
        if !matches!(schema.infer(w)?, Ty::Bool | Ty::Null) {
            return Err(exec_err("WHERE clause is not a predicate"));
        }
    }
    for g in &q.group_by {
        if g.contains_aggregate() {
            return Err(exec_err("aggregate in GROUP BY"));
        }
        schema.infer(g)?;
    }

    let mut filtered: Vec<&[Cell]> = Vec::new();
    for row in &table.rows {
        let keep = match &q.selection {
            None => true,
            Some(w) => {
                let ctx = Ctx { schema: &schema, row: Some(row), group: None };
                truth(&ctx.eval(w)?)? == Some(true)
            }
        };
        if keep {
            filtered.push(row);
        }
    }

    let aggregate = !q.group_by.is_empty()
        || outputs.iter().any(|(_, e)| e.contains_aggregate())
        || order.iter().any(|(e, _)| e.contains_aggregate());

    let mut produced: Vec<(Vec<Cell>, Vec<Val>)> = Vec::new();
    let mut emit = |ctx: &Ctx| -> Result<(), SqlError> {
        let mut cells = Vec::with_capacity(outputs.len());
        for ((_, e), c) in outputs.iter().zip(&columns) {
            cells.push(ctx.eval(e)?.into_cell(c.ty)?);
        }
        let keys = order.iter().map(|(e, _)| ctx.eval(e)).collect::<Result<Vec<_>, _>>()?;
        produced.push((cells, keys));
        Ok(())
    };

    if aggregate {
        if q.items.iter().any(|i| matches!(i, SelectItem::Wildcard)) {
            return Err(exec_err("`*` is not allowed in an aggregate query"));
        }
        for (_, e) in &outputs {
            check_grouped(e, &q.group_by)?;
        }
        for (e, _) in &order {
            check_grouped(e, &q.group_by)?;
        }
        let mut groups: Vec<Vec<&[Cell]>> = Vec::new();
        if q.group_by.is_empty() {
            groups.push(filtered);
        } else {
            let mut index: HashMap<Vec<String>, usize> = HashMap::new();
            for row in filtered {
                let ctx = Ctx { schema: &schema, row: Some(row), group: None };
                let key =
                    q.group_by.iter().map(|g| ctx.eval(g).map(|v| v.group_key())).collect::<Result<Vec<_>, _>>()?;
                let at = *index.entry(key).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[at].push(row);
            }
        }
        for g in &groups {
            let ctx = Ctx { schema: &schema, row: g.first().copied(), group: Some(g) };
            emit(&ctx)?;
        }
    } else {
        for row in filtered {
            let ctx = Ctx { schema: &schema, row: Some(row), group: None };
            emit(&ctx)?;
        }
    }

    if !order.is_empty() {
        produced.sort_by(|(_, a), (_, b)| {
            for (i, (_, desc)) in order.iter().enumerate() {
                let o = a[i].sort_cmp(&b[i]);
                let o = if *desc { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        });
    }
    let mut rows: Vec<Vec<Cell>> = produced.into_iter().map(|(c, _)| c).collect();
    if let Some(n) = q.limit {
        rows.truncate(usize::try_from(n).unwrap_or(usize::MAX));
    }
    Ok(ResultTable { columns, row_count: rows.len(), rows })
}
