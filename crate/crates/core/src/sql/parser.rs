use super::ast::{AggFunc, BinaryOp, Expr, Literal, OrderItem, Select, SelectItem};
use super::lexer::{tokenize, Spanned, Token};
use super::SqlError;

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "order", "limit", "and", "or", "not", "in", "between", "is", "null",
    "as", "asc", "desc",
];

/// Parse one read-only `SELECT` statement.
///
/// Any other statement kind, or a second statement after `;`, is
/// `NonSelectRejected`; malformed input is `SqlSyntaxError`.
pub fn parse_select(sql: &str) -> Result<Select, SqlError> {
    let tokens = tokenize(sql)?;
    match tokens.first() {
        None => return Err(SqlError::SqlSyntaxError { offset: 0, message: "empty statement".into() }),
        Some(Spanned { token: Token::Word(w), .. }) if !w.eq_ignore_ascii_case("select") => {
            return Err(SqlError::NonSelectRejected(w.to_ascii_uppercase()));
        }
        _ => {}
    }
    let mut p = Parser { tokens, pos: 0, len: sql.len() };
    let select = p.select()?;
    if p.eat(&Token::Semicolon) && p.peek().is_some() {
        return Err(SqlError::NonSelectRejected("multiple statements".into()));
    }
    if p.peek().is_some() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(select)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |s| s.offset)
    }

    fn error(&self, message: &str) -> SqlError {
        let found = match self.peek() {
            Some(t) => format!("{t:?}"),
            None => "end of input".into(),
        };
        SqlError::SqlSyntaxError { offset: self.offset(), message: format!("{message}, found {found}") }
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|s| s.token.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {}", kw.to_ascii_uppercase())))
        }
    }

    fn expect(&mut self, t: Token, what: &str) -> Result<(), SqlError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn identifier(&mut self) -> Result<String, SqlError> {
        match self.peek() {
            Some(Token::Word(w)) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()) => {
                let w = w.to_ascii_lowercase();
                self.pos += 1;
                Ok(w)
            }
            Some(Token::QuotedIdent(w)) => {
                let w = w.to_ascii_lowercase();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        self.expect_keyword("select")?;
        let mut items = vec![self.select_item()?];
        while self.eat(&Token::Comma) {
            items.push(self.select_item()?);
        }
        self.expect_keyword("from")?;
        let from = self.identifier()?;
        let selection = if self.eat_keyword("where") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_keyword("group") {
            self.expect_keyword("by")?;
            group_by.push(self.expr()?);
            while self.eat(&Token::Comma) {
                group_by.push(self.expr()?);
            }
        }
        let mut order_by = Vec::new();
        if self.eat_keyword("order") {
            self.expect_keyword("by")?;
            loop {
                let expr = self.expr()?;
                let descending = if self.eat_keyword("desc") {
                    true
                } else {
                    self.eat_keyword("asc");
                    false
                };
                order_by.push(OrderItem { expr, descending });
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        let limit = if self.eat_keyword("limit") {
            match self.advance() {
                Some(Token::Number(n)) if n.fract().is_zero() && n.is_sign_positive() => {
                    Some(u64::try_from(n).map_err(|_| self.error("LIMIT out of range"))?)
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.error("expected non-negative integer after LIMIT"));
                }
            }
        } else {
            None
        };
        Ok(Select { items, from, selection, group_by, order_by, limit })
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat(&Token::Star) {
            return Ok(SelectItem::Wildcard);
        }
        let expr = self.expr()?;
        let bare_alias =
            matches!(self.peek(), Some(Token::Word(w)) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()));
        let alias = if self.eat_keyword("as") || bare_alias { Some(self.identifier()?) } else { None };
        Ok(SelectItem::Expr { expr, alias })
    }

    fn expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.and_expr()?;
        while self.eat_keyword("or") {
            left = Expr::binary(BinaryOp::Or, left, self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.not_expr()?;
        while self.eat_keyword("and") {
            left = Expr::binary(BinaryOp::And, left, self.not_expr()?);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_keyword("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, SqlError> {
        let left = self.additive()?;
        let cmp = match self.peek() {
            Some(Token::Eq) => Some(BinaryOp::Eq),
            Some(Token::NotEq) => Some(BinaryOp::NotEq),
            Some(Token::Lt) => Some(BinaryOp::Lt),
            Some(Token::Le) => Some(BinaryOp::Le),
            Some(Token::Gt) => Some(BinaryOp::Gt),
            Some(Token::Ge) => Some(BinaryOp::Ge),
            _ => None,
        };
        if let Some(op) = cmp {
            self.pos += 1;
            return Ok(Expr::binary(op, left, self.additive()?));
        }
        if self.eat_keyword("is") {
            let negated = self.eat_keyword("not");
            self.expect_keyword("null")?;
            return Ok(Expr::IsNull { expr: Box::new(left), negated });
        }
        let save = self.pos;
        let negated = self.eat_keyword("not");
        if self.eat_keyword("in") {
            self.expect(Token::LParen, "`(` after IN")?;
            let mut list = vec![self.expr()?];
            while self.eat(&Token::Comma) {
                list.push(self.expr()?);
            }
            self.expect(Token::RParen, "`)` closing IN list")?;
            return Ok(Expr::InList { expr: Box::new(left), list, negated });
        }
        if self.eat_keyword("between") {
            let low = self.additive()?;
            self.expect_keyword("and")?;
            let high = self.additive()?;
            return Ok(Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated });
        }
        if negated {
            self.pos = save;
            return Err(self.error("expected IN or BETWEEN after NOT"));
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinaryOp::Add,
                Some(Token::Minus) => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.pos += 1;
            left = Expr::binary(op, left, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinaryOp::Mul,
                Some(Token::Slash) => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.pos += 1;
            left = Expr::binary(op, left, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.eat(&Token::Minus) {
            return Ok(match self.unary()? {
                Expr::Literal(Literal::Number(n)) => Expr::Literal(Literal::Number(-n)),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        match self.peek().cloned() {
            Some(Token::Number(n)) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Number(n)))
            }
            Some(Token::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(e)
            }
            Some(Token::Word(w)) if w.eq_ignore_ascii_case("null") => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Null))
            }
            Some(Token::Word(w)) => {
                let func = match w.to_ascii_lowercase().as_str() {
                    "count" => Some(AggFunc::Count),
                    "sum" => Some(AggFunc::Sum),
                    "avg" => Some(AggFunc::Avg),
                    "min" => Some(AggFunc::Min),
                    "max" => Some(AggFunc::Max),
                    _ => None,
                };
                if let Some(func) = func {
                    if self.tokens.get(self.pos + 1).map(|s| &s.token) == Some(&Token::LParen) {
                        self.pos += 2;
                        let arg = if func == AggFunc::Count && self.eat(&Token::Star) {
                            None
                        } else {
                            Some(Box::new(self.expr()?))
                        };
                        self.expect(Token::RParen, "`)` closing aggregate")?;
                        return Ok(Expr::Agg { func, arg });
                    }
                }
                Ok(Expr::Column(self.identifier()?))
            }
            Some(Token::QuotedIdent(_)) => Ok(Expr::Column(self.identifier()?)),
            _ => Err(self.error("expected expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_display() {
        for sql in [
            "SELECT value FROM kpi WHERE metric = 'operating_margin' AND period_granularity = 'Q4' AND period_year = 2024 AND status = 'Actual'",
            "SELECT COUNT(*) FROM kpi",
            "SELECT metric, AVG(value) AS v FROM kpi WHERE period_year BETWEEN 2020 AND 2024 GROUP BY metric ORDER BY metric LIMIT 5",
            "SELECT * FROM kpi WHERE (status = 'Actual' OR basis <> 'NonGAAP') AND metric IN ('revenue', 'eps')",
            "SELECT value FROM kpi WHERE NOT status = 'Guidance' AND value * 2 > -3",
            "SELECT value FROM kpi ORDER BY period_year DESC, period_granularity DESC LIMIT 1",
        ] {
            let ast = parse_select(sql).unwrap();
            assert_eq!(ast.to_string(), sql);
            assert_eq!(parse_select(&ast.to_string()).unwrap(), ast);
        }
    }

    #[test]
    fn precedence() {
        let s = parse_select("SELECT a FROM t WHERE x = 1 OR y = 2 AND z = 3").unwrap();
        let Some(Expr::Binary { op, right, .. }) = s.selection else { panic!() };
        assert_eq!(op, BinaryOp::Or);
        assert!(matches!(*right, Expr::Binary { op: BinaryOp::And, .. }));
        let s = parse_select("SELECT a - b - c FROM t").unwrap();
        assert_eq!(s.items[0].to_string(), "a - b - c");
        let s = parse_select("SELECT a - (b - c) FROM t").unwrap();
        assert_eq!(s.items[0].to_string(), "a - (b - c)");
    }

    #[test]
    fn rejects_writes_and_garbage() {
        assert_eq!(parse_select("DROP TABLE kpi"), Err(SqlError::NonSelectRejected("DROP".into())));
        assert_eq!(parse_select("delete from kpi"), Err(SqlError::NonSelectRejected("DELETE".into())));
        assert!(matches!(parse_select("SELECT 1 FROM kpi; DROP TABLE kpi"), Err(SqlError::NonSelectRejected(_))));
        assert!(parse_select("SELECT 1 FROM kpi;").is_ok());
        for bad in [
            "",
            "SELECT",
            "SELECT FROM kpi",
            "SELECT a FROM",
            "SELECT a FROM kpi WHERE",
            "SELECT a FROM kpi LIMIT x",
            "SELECT (a FROM kpi",
            "SELECT a FROM kpi WHERE a NOT 3",
            "42",
        ] {
            assert!(matches!(parse_select(bad), Err(SqlError::SqlSyntaxError { .. })), "{bad}");
        }
    }

    #[test]
    fn identifiers_fold_case() {
        let s = parse_select("select VALUE from KPI where Metric = 'x'").unwrap();
        assert_eq!(s.to_string(), "SELECT value FROM kpi WHERE metric = 'x'");
    }
}
