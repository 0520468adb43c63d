//! Declarative extraction rules.
//!
//! A rule file declares one block per category: an expression selecting one
//! piece per advert, and named field expressions evaluated inside each
//! advert piece.
//!
//! ```text
//! category vehicles.cars {
//!   date_format: "dd/MM/yyyy"
//!   list: elem(div) contain pat("{today}")
//!   title = elem(h2)
//!   price = pat("Rs [0-9,]+")
//! }
//! ```
//!
//! `{today}` inside a `pat` string is replaced by the current date in the
//! category's format, regex-escaped.

mod parse;

use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{self, AlgebraError, Hierarchical, Positional, Regional, SeqPattern};
use crate::datefmt::{format_date, DateFormatError};
use crate::html::Page;
use crate::piece::{PieceSet, Scope};
use crate::store::{content_hash, normalize_ws, AdvertRecord};

pub use parse::{parse_expr, parse_rules};

pub const TODAY: &str = "{today}";
pub const DEFAULT_DATE_FORMAT: &str = "dd/MM/yyyy";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("duplicate category {name} at {line}:{column}")]
    DuplicateCategory { name: String, line: usize, column: usize },
    #[error("duplicate field {field} in category {category} at {line}:{column}")]
    DuplicateField { category: String, field: String, line: usize, column: usize },
}

/// 1-based source position of an expression in its rule file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Loc {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Union,
    Exclude,
    Positional(Positional),
    Hierarchical(Hierarchical),
    Regional(Regional),
}

impl fmt::Display for BinaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryOp::Union => "+",
            BinaryOp::Exclude => "-",
            BinaryOp::Positional(Positional::Before) => "before",
            BinaryOp::Positional(Positional::NotBefore) => "!before",
            BinaryOp::Positional(Positional::After) => "after",
            BinaryOp::Positional(Positional::NotAfter) => "!after",
            BinaryOp::Hierarchical(Hierarchical::Inside) => "inside",
            BinaryOp::Hierarchical(Hierarchical::NotInside) => "!inside",
            BinaryOp::Hierarchical(Hierarchical::Contain) => "contain",
            BinaryOp::Hierarchical(Hierarchical::NotContain) => "!contain",
            BinaryOp::Regional(Regional::Without) => "without",
            BinaryOp::Regional(Regional::Intersect) => "intersect",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Elem(String),
    Pat(String),
    Pcdata,
    Seq(SeqPattern),
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Index { base: Box<Expr>, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: Loc,
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        if c == '"' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Prints the expression back in rule syntax, fully parenthesized where
/// precedence would otherwise change the meaning.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Elem(name) => write!(f, "elem({name})"),
            ExprKind::Pat(p) => write!(f, "pat({})", quote(p)),
            ExprKind::Pcdata => f.write_str("pcdata()"),
            ExprKind::Seq(p) => write!(f, "seq({})", quote(&p.to_string())),
            ExprKind::Binary { op, lhs, rhs } => {
                write!(f, "{lhs} {op} ")?;
                if matches!(rhs.kind, ExprKind::Binary { .. }) {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
            ExprKind::Index { base, index } => {
                if matches!(base.kind, ExprKind::Binary { .. }) {
                    write!(f, "({base})[{index}]")
                } else {
                    write!(f, "{base}[{index}]")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryRule {
    pub name: String,
    pub date_format: String,
    pub list: Expr,
    pub fields: Vec<(String, Expr)>,
}

impl CategoryRule {
    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleSet {
    pub categories: Vec<CategoryRule>,
}

impl RuleSet {
    pub fn get(&self, name: &str) -> Option<&CategoryRule> {
        self.categories.iter().find(|c| c.name == name)
    }
}

/// Nested String List: the raw shape of extraction results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nsl {
    Str(String),
    List(Vec<Nsl>),
}

impl Nsl {
    /// First string found in a depth-first walk.
    pub fn first_str(&self) -> Option<&str> {
        match self {
            Nsl::Str(s) => Some(s),
            Nsl::List(items) => items.iter().find_map(Nsl::first_str),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{source} (at {loc})")]
pub struct EvalError {
    pub loc: Loc,
    pub source: AlgebraError,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("category {category}: bad date format: {source}")]
    DateFormat { category: String, source: DateFormatError },
    #[error("category {category}, {}: {source}", field.as_deref().map_or("list".to_string(), |f| format!("field {f}")))]
    Eval { category: String, field: Option<String>, source: EvalError },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("record has {found} field lists, rule {category} has {expected} fields")]
pub struct ShapeMismatch {
    pub category: String,
    pub expected: usize,
    pub found: usize,
}

/// Per-evaluation settings: the escaped date that replaces `{today}`.
#[derive(Debug, Clone)]
pub struct EvalContext {
    today_pattern: String,
}

impl EvalContext {
    pub fn new(today: NaiveDate, date_format: &str) -> Result<Self, DateFormatError> {
        Ok(EvalContext { today_pattern: regex::escape(&format_date(date_format, today)?) })
    }

    pub fn today_pattern(&self) -> &str {
        &self.today_pattern
    }

    /// The pattern with every `{today}` placeholder substituted.
    pub fn expand(&self, pattern: &str) -> String {
        pattern.replace(TODAY, &self.today_pattern)
    }
}

pub fn eval_expr<'p>(
    expr: &Expr,
    scope: Scope<'p>,
    ctx: &EvalContext,
) -> Result<PieceSet<'p>, EvalError> {
    let at = |source| EvalError { loc: expr.loc, source };
    match &expr.kind {
        ExprKind::Elem(name) => Ok(algebra::elem(scope, name)),
        ExprKind::Pat(pattern) => algebra::pat(scope, &ctx.expand(pattern)).map_err(at),
        ExprKind::Pcdata => Ok(algebra::pcdata(scope)),
        ExprKind::Seq(pattern) => Ok(algebra::seq(scope, pattern)),
        ExprKind::Index { base, index } => {
            let set = eval_expr(base, scope, ctx)?;
            algebra::index(&set, *index).map(PieceSet::singleton).map_err(at)
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = eval_expr(lhs, scope, ctx)?;
            let q = eval_expr(rhs, scope, ctx)?;
            match op {
                BinaryOp::Union => algebra::union(&p, &q),
                BinaryOp::Exclude => algebra::exclude(&p, &q),
                BinaryOp::Positional(rel) => algebra::positional(&p, &q, *rel),
                BinaryOp::Hierarchical(rel) => algebra::hierarchical(&p, &q, *rel),
                BinaryOp::Regional(rel) => algebra::regional(&p, &q, *rel),
            }
            .map_err(at)
        }
    }
}

/// Evaluates the list expression over the page, then every field inside
/// each advert piece. Each record is a list with one list of trimmed texts
/// per field, in rule order.
pub fn extract_records(page: &Page, rule: &CategoryRule, today: NaiveDate) -> Result<Vec<Nsl>, ExtractError> {
    let ctx = EvalContext::new(today, &rule.date_format)
        .map_err(|source| ExtractError::DateFormat { category: rule.name.clone(), source })?;
    let adverts = eval_expr(&rule.list, Scope::Page(page), &ctx).map_err(|source| ExtractError::Eval {
        category: rule.name.clone(),
        field: None,
        source,
    })?;
    adverts
        .iter()
        .map(|advert| {
            let fields = rule
                .fields
                .iter()
                .map(|(name, expr)| {
                    let hits = eval_expr(expr, Scope::Piece(*advert), &ctx).map_err(|source| {
                        ExtractError::Eval { category: rule.name.clone(), field: Some(name.clone()), source }
                    })?;
                    Ok(Nsl::List(hits.iter().map(|p| Nsl::Str(p.text().trim().to_string())).collect()))
                })
                .collect::<Result<Vec<_>, ExtractError>>()?;
            Ok(Nsl::List(fields))
        })
        .collect()
}

/// Maps one extracted record onto an advert: each field takes the first
/// matched text, whitespace-normalized, or the empty string.
pub fn nsl_to_advert(
    nsl: &Nsl,
    rule: &CategoryRule,
    url: &str,
    seen_at: DateTime<Utc>,
) -> Result<AdvertRecord, ShapeMismatch> {
    let lists: &[Nsl] = match nsl {
        Nsl::List(items) => items,
        Nsl::Str(_) => std::slice::from_ref(nsl),
    };
    if lists.len() != rule.fields.len() {
        return Err(ShapeMismatch { category: rule.name.clone(), expected: rule.fields.len(), found: lists.len() });
    }
    let fields: indexmap::IndexMap<String, String> = rule
        .fields
        .iter()
        .zip(lists)
        .map(|((name, _), value)| (name.clone(), value.first_str().map(normalize_ws).unwrap_or_default()))
        .collect();
    let hash = content_hash(&rule.name, fields.iter().map(|(k, v)| (k.as_str(), v.as_str())));
    Ok(AdvertRecord {
        id: 0,
        category: rule.name.clone(),
        fields,
        source_url: url.to_string(),
        content_hash: hash,
        first_seen: seen_at,
    })
}
