//! Lexer and recursive-descent parser for rule files.

use std::collections::HashSet;

use super::{BinaryOp, CategoryRule, Expr, ExprKind, Loc, RuleError, RuleSet, DEFAULT_DATE_FORMAT};
use crate::algebra::{Hierarchical, Positional, Regional, SeqPattern};
use crate::datefmt::format_date;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    /// `!` immediately followed by a word, e.g. `!before`.
    NotWord(String),
    Str(String),
    Int(usize),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Equals,
    Plus,
    Minus,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::NotWord(s) => format!("`!{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

const OPERATOR_WORDS: &[&str] = &["before", "after", "inside", "contain", "without", "intersect"];

fn syntax(loc: Loc, message: impl Into<String>) -> RuleError {
    RuleError::Syntax { line: loc.line, column: loc.column, message: message.into() }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<Vec<(Tok, Loc)>, RuleError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let loc = Loc { line, column: col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Equals),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, loc));
            bump!();
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(loc, "unterminated string")),
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        bump!();
                        match chars.get(i) {
                            Some(&e @ ('"' | '\\')) => {
                                s.push(e);
                                bump!();
                            }
                            Some(&other) => {
                                // unknown escapes pass through so regexes stay readable
                                s.push('\\');
                                s.push(other);
                                bump!();
                            }
                            None => return Err(syntax(loc, "unterminated string")),
                        }
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push((Tok::Str(s), loc));
            continue;
        }
        if c.is_ascii_digit() {
            let mut n = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                n.push(chars[i]);
                bump!();
            }
            let value = n.parse().map_err(|_| syntax(loc, "integer too large"))?;
            out.push((Tok::Int(value), loc));
            continue;
        }
        if c == '!' {
            bump!();
            let mut word = String::new();
            while i < chars.len() && is_ident_char(chars[i]) {
                word.push(chars[i]);
                bump!();
            }
            if word.is_empty() {
                return Err(syntax(loc, "`!` must be followed by an operator name"));
            }
            out.push((Tok::NotWord(word), loc));
            continue;
        }
        if is_ident_start(c) {
            let mut word = String::new();
            while i < chars.len() && is_ident_char(chars[i]) {
                word.push(chars[i]);
                bump!();
            }
            out.push((Tok::Ident(word), loc));
            continue;
        }
        return Err(syntax(loc, format!("unexpected character {c:?}")));
    }
    out.push((Tok::Eof, Loc { line, column: col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Loc)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[idx].0
    }

    fn loc(&self) -> Loc {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, Loc) {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Loc, RuleError> {
        let (tok, loc) = self.next();
        if tok == want {
            Ok(loc)
        } else {
            Err(syntax(loc, format!("expected {}, found {}", want.describe(), tok.describe())))
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<Loc, RuleError> {
        match self.next() {
            (Tok::Ident(w), loc) if w == word => Ok(loc),
            (tok, loc) => Err(syntax(loc, format!("expected `{word}`, found {}", tok.describe()))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Loc), RuleError> {
        match self.next() {
            (Tok::Ident(w), loc) => Ok((w, loc)),
            (tok, loc) => Err(syntax(loc, format!("expected {what}, found {}", tok.describe()))),
        }
    }

    fn expect_string(&mut self, what: &str) -> Result<(String, Loc), RuleError> {
        match self.next() {
            (Tok::Str(s), loc) => Ok((s, loc)),
            (tok, loc) => Err(syntax(loc, format!("expected {what}, found {}", tok.describe()))),
        }
    }

    fn ruleset(&mut self) -> Result<RuleSet, RuleError> {
        let mut categories: Vec<CategoryRule> = Vec::new();
        while *self.peek() != Tok::Eof {
            let start = self.loc();
            let rule = self.category()?;
            if categories.iter().any(|c| c.name == rule.name) {
                return Err(RuleError::DuplicateCategory {
                    name: rule.name,
                    line: start.line,
                    column: start.column,
                });
            }
            categories.push(rule);
        }
        Ok(RuleSet { categories })
    }

    fn category(&mut self) -> Result<CategoryRule, RuleError> {
        self.expect_word("category")?;
        let (name, _) = self.expect_ident("category name")?;
        self.expect(Tok::LBrace)?;

        let mut date_format = DEFAULT_DATE_FORMAT.to_string();
        if matches!(self.peek(), Tok::Ident(w) if w == "date_format") {
            self.next();
            self.expect(Tok::Colon)?;
            let (fmt, loc) = self.expect_string("date format string")?;
            let probe = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
            format_date(&fmt, probe).map_err(|e| syntax(loc, e.to_string()))?;
            date_format = fmt;
        }

        self.expect_word("list")?;
        self.expect(Tok::Colon)?;
        let list = self.expr()?;

        let mut fields: Vec<(String, Expr)> = Vec::new();
        let mut seen = HashSet::new();
        while *self.peek() != Tok::RBrace {
            let (field, loc) = self.expect_ident("field name or `}`")?;
            if OPERATOR_WORDS.contains(&field.as_str()) {
                return Err(syntax(loc, format!("`{field}` is an operator and cannot name a field")));
            }
            self.expect(Tok::Equals)?;
            let expr = self.expr()?;
            if !seen.insert(field.clone()) {
                return Err(RuleError::DuplicateField {
                    category: name,
                    field,
                    line: loc.line,
                    column: loc.column,
                });
            }
            fields.push((field, expr));
        }
        let close = self.expect(Tok::RBrace)?;
        if fields.is_empty() {
            return Err(syntax(close, format!("category {name} has no fields")));
        }
        Ok(CategoryRule { name, date_format, list, fields })
    }

    fn operator(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::Plus => BinaryOp::Union,
            Tok::Minus => BinaryOp::Exclude,
            // a word followed by `=` starts the next field, not an operator
            Tok::Ident(_) if *self.peek_at(1) == Tok::Equals => return None,
            Tok::Ident(w) => match w.as_str() {
                "before" => BinaryOp::Positional(Positional::Before),
                "after" => BinaryOp::Positional(Positional::After),
                "inside" => BinaryOp::Hierarchical(Hierarchical::Inside),
                "contain" => BinaryOp::Hierarchical(Hierarchical::Contain),
                "without" => BinaryOp::Regional(Regional::Without),
                "intersect" => BinaryOp::Regional(Regional::Intersect),
                _ => return None,
            },
            Tok::NotWord(w) => match w.as_str() {
                "before" => BinaryOp::Positional(Positional::NotBefore),
                "after" => BinaryOp::Positional(Positional::NotAfter),
                "inside" => BinaryOp::Hierarchical(Hierarchical::NotInside),
                "contain" => BinaryOp::Hierarchical(Hierarchical::NotContain),
                _ => return None,
            },
            _ => return None,
        })
    }

    fn expr(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.operator() {
            let (_, loc) = self.next();
            let rhs = self.term()?;
            lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, loc };
        }
        if let Tok::NotWord(w) = self.peek() {
            return Err(syntax(self.loc(), format!("`!{w}` is not an operator")));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, RuleError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::LBracket {
            let open = self.next().1;
            let index = match self.next() {
                (Tok::Int(n), _) => n,
                (tok, loc) => return Err(syntax(loc, format!("expected index, found {}", tok.describe()))),
            };
            self.close_paren(Tok::RBracket, open, "[")?;
            base = Expr { kind: ExprKind::Index { base: Box::new(base), index }, loc: open };
        }
        Ok(base)
    }

    /// Expects the closing delimiter; at end of input the error points at
    /// the unclosed opener.
    fn close_paren(&mut self, want: Tok, open: Loc, opener: &str) -> Result<(), RuleError> {
        if *self.peek() == Tok::Eof {
            return Err(syntax(open, format!("unclosed `{opener}`")));
        }
        self.expect(want).map(|_| ())
    }

    fn primary(&mut self) -> Result<Expr, RuleError> {
        let (tok, loc) = self.next();
        let kind = match tok {
            Tok::LParen => {
                if *self.peek() == Tok::Eof {
                    return Err(syntax(loc, "unclosed `(`"));
                }
                let inner = self.expr()?;
                self.close_paren(Tok::RParen, loc, "(")?;
                return Ok(inner);
            }
            Tok::Ident(word) => {
                let open = self.expect(Tok::LParen)?;
                if *self.peek() == Tok::Eof {
                    return Err(syntax(open, "unclosed `(`"));
                }
                let kind = match word.as_str() {
                    "elem" => match self.next() {
                        (Tok::Ident(name) | Tok::Str(name), _) if !name.is_empty() => {
                            ExprKind::Elem(name.to_ascii_lowercase())
                        }
                        (t, l) => return Err(syntax(l, format!("expected element name, found {}", t.describe()))),
                    },
                    "pat" => {
                        let (pattern, ploc) = self.expect_string("pattern string")?;
                        if let Err(e) = regex::Regex::new(&pattern.replace(super::TODAY, "")) {
                            return Err(syntax(ploc, format!("bad pattern: {e}")));
                        }
                        ExprKind::Pat(pattern)
                    }
                    "pcdata" => ExprKind::Pcdata,
                    "seq" => {
                        let (pattern, ploc) = self.expect_string("sequence pattern string")?;
                        let parsed: SeqPattern = pattern.parse().map_err(|e| syntax(ploc, format!("{e}")))?;
                        ExprKind::Seq(parsed)
                    }
                    other => return Err(syntax(loc, format!("unknown search `{other}`"))),
                };
                self.close_paren(Tok::RParen, open, "(")?;
                kind
            }
            other => {
                return Err(syntax(loc, format!("expected an expression, found {}", other.describe())))
            }
        };
        Ok(Expr { kind, loc })
    }
}

pub fn parse_rules(text: &str) -> Result<RuleSet, RuleError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.ruleset()
}

/// Parses a single expression, e.g. for command-line use.
pub fn parse_expr(text: &str) -> Result<Expr, RuleError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(syntax(parser.loc(), format!("unexpected {}", parser.peek().describe())));
    }
    Ok(expr)
}
