use rust_decimal::Decimal;
use std::str::FromStr;

use super::SqlError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    /// Bare word; keywords are recognised by the parser case-insensitively.
    Word(String),
    /// `"quoted"` identifier.
    QuotedIdent(String),
    Str(String),
    Number(Decimal),
    Comma,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Semicolon,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

pub fn tokenize(sql: &str) -> Result<Vec<Spanned>, SqlError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |t: Token| Spanned { token: t, offset: start };
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b',' => {
                out.push(single(Token::Comma));
                i += 1;
            }
            b'(' => {
                out.push(single(Token::LParen));
                i += 1;
            }
            b')' => {
                out.push(single(Token::RParen));
                i += 1;
            }
            b'*' => {
                out.push(single(Token::Star));
                i += 1;
            }
            b'+' => {
                out.push(single(Token::Plus));
                i += 1;
            }
            b'-' => {
                out.push(single(Token::Minus));
                i += 1;
            }
            b'/' => {
                out.push(single(Token::Slash));
                i += 1;
            }
            b';' => {
                out.push(single(Token::Semicolon));
                i += 1;
            }
            b'=' => {
                out.push(single(Token::Eq));
                i += 1;
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                out.push(single(Token::NotEq));
                i += 2;
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    out.push(single(Token::Le));
                    i += 2;
                }
                Some(b'>') => {
                    out.push(single(Token::NotEq));
                    i += 2;
                }
                _ => {
                    out.push(single(Token::Lt));
                    i += 1;
                }
            },
            b'>' => match bytes.get(i + 1) {
                Some(b'=') => {
                    out.push(single(Token::Ge));
                    i += 2;
                }
                _ => {
                    out.push(single(Token::Gt));
                    i += 1;
                }
            },
            b'\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match sql[i..].chars().next() {
                        None => {
                            return Err(SqlError::SqlSyntaxError {
                                offset: start,
                                message: "unterminated string literal".into(),
                            })
                        }
                        Some('\'') if bytes.get(i + 1) == Some(&b'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push(Spanned { token: Token::Str(s), offset: start });
            }
            b'"' => {
                let end = sql[i + 1..].find('"').ok_or_else(|| SqlError::SqlSyntaxError {
                    offset: start,
                    message: "unterminated quoted identifier".into(),
                })?;
                out.push(Spanned { token: Token::QuotedIdent(sql[i + 1..i + 1 + end].to_string()), offset: start });
                i += end + 2;
            }
            b'0'..=b'9' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let text = &sql[start..i];
                let n = Decimal::from_str(text)
                    .map_err(|_| SqlError::SqlSyntaxError { offset: start, message: format!("bad number `{text}`") })?;
                out.push(Spanned { token: Token::Number(n), offset: start });
            }
            b'.' => {
                out.push(single(Token::Dot));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned { token: Token::Word(sql[start..i].to_string()), offset: start });
            }
            _ => {
                let ch = sql[i..].chars().next().unwrap_or('?');
                return Err(SqlError::SqlSyntaxError {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        let t: Vec<Token> = tokenize("SELECT a,'it''s' FROM kpi WHERE x<>1.50 -- trailing\n AND y<=2")
            .unwrap()
            .into_iter()
            .map(|s| s.token)
            .collect();
        assert_eq!(t[2], Token::Comma);
        assert_eq!(t[3], Token::Str("it's".into()));
        assert_eq!(t[8], Token::NotEq);
        assert_eq!(t[9], Token::Number(Decimal::new(150, 2)));
        assert_eq!(t[12], Token::Le);
        assert_eq!(t.len(), 14);
    }

    #[test]
    fn errors() {
        assert!(matches!(tokenize("SELECT 'open"), Err(SqlError::SqlSyntaxError { offset: 7, .. })));
        assert!(tokenize("SELECT #").is_err());
        assert!(tokenize("SELECT 1.2.3").is_err());
    }
}
