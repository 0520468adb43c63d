//! The markup algebra: four searches that produce piece sets from a scope,
//! and the set, positional, hierarchical and regional operators that
//! combine them.
//!
//! Positional and hierarchical relations are existential: `P before Q`
//! keeps every `p` for which *some* `q` starts at or after `p` ends. The
//! negated forms are exact complements within `P`. Regional operators
//! select whole pieces and never clip them.

use std::fmt;
use std::str::FromStr;

use regex::Regex;
use thiserror::Error;

use crate::html::{NodeKind, Span};
use crate::piece::{Piece, PieceSet, Scope};

/// Token in a sequence pattern that matches one text segment.
pub const PCDATA_TOKEN: &str = "#pcdata";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("bad pattern: {0}")]
    BadPattern(String),
    #[error("bad sequence pattern: {0}")]
    BadSeqPattern(String),
    #[error("piece sets belong to different pages")]
    PageMismatch,
    #[error("index {index} out of bounds for piece set of {len}")]
    OutOfBounds { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Positional {
    Before,
    NotBefore,
    After,
    NotAfter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hierarchical {
    Inside,
    NotInside,
    Contain,
    NotContain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regional {
    Without,
    Intersect,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeqToken {
    Element(String),
    Text,
}

/// A linear pattern of element names and text markers, e.g. `h1 #pcdata br`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeqPattern {
    tokens: Vec<SeqToken>,
}

impl SeqPattern {
    pub fn new(tokens: Vec<SeqToken>) -> Result<Self, AlgebraError> {
        if tokens.is_empty() {
            return Err(AlgebraError::BadSeqPattern("empty pattern".into()));
        }
        Ok(SeqPattern { tokens })
    }

    pub fn tokens(&self) -> &[SeqToken] {
        &self.tokens
    }
}

impl FromStr for SeqPattern {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = s
            .split_whitespace()
            .map(|tok| {
                let lower = tok.to_ascii_lowercase();
                if lower == PCDATA_TOKEN {
                    Ok(SeqToken::Text)
                } else if !lower.is_empty()
                    && lower.starts_with(|c: char| c.is_ascii_alphabetic())
                    && lower.chars().all(|c| c.is_ascii_alphanumeric() || "-_:.".contains(c))
                {
                    Ok(SeqToken::Element(lower))
                } else {
                    Err(AlgebraError::BadSeqPattern(format!("invalid token {tok:?}")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        SeqPattern::new(tokens)
    }
}

impl fmt::Display for SeqPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match tok {
                SeqToken::Element(name) => f.write_str(name)?,
                SeqToken::Text => f.write_str(PCDATA_TOKEN)?,
            }
        }
        Ok(())
    }
}

/// Every element named `name` (case-insensitive) lying inside the scope.
pub fn elem<'p>(scope: Scope<'p>, name: &str) -> PieceSet<'p> {
    let page = scope.page();
    let bounds = scope.span();
    let name = name.to_ascii_lowercase();
    let pieces = page
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::Element && n.name == name && bounds.contains(&n.span))
        .map(|(id, _)| Piece::of_node(page, id))
        .collect();
    PieceSet::from_pieces(page, pieces)
}

/// Every non-empty text segment lying inside the scope.
pub fn pcdata<'p>(scope: Scope<'p>) -> PieceSet<'p> {
    let page = scope.page();
    let bounds = scope.span();
    let pieces = page
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.is_text() && !n.span.is_empty() && bounds.contains(&n.span))
        .map(|(id, _)| Piece::of_node(page, id))
        .collect();
    PieceSet::from_pieces(page, pieces)
}

/// Regular-expression search over the tag-stripped text of the scope.
///
/// Matches are leftmost and non-overlapping; each one is mapped back to the
/// source region that produced its characters, so a match may span markup.
pub fn pat<'p>(scope: Scope<'p>, pattern: &str) -> Result<PieceSet<'p>, AlgebraError> {
    let re = Regex::new(pattern).map_err(|e| AlgebraError::BadPattern(e.to_string()))?;
    Ok(pat_regex(scope, &re))
}

/// [`pat`] with an already compiled expression.
pub fn pat_regex<'p>(scope: Scope<'p>, re: &Regex) -> PieceSet<'p> {
    let page = scope.page();
    let bounds = scope.span();
    let stream = page.text_stream();
    let (lo, hi) = stream.char_range(bounds);
    let haystack = stream.slice(lo, hi);
    let base = stream.slice(0, lo).len();

    let pieces = re
        .find_iter(haystack)
        .map(|m| {
            let a = stream.char_index(base + m.start());
            let b = stream.char_index(base + m.end());
            let span = if a < b {
                Span::new(stream.starts[a], stream.ends[b - 1])
            } else if a < hi {
                Span::new(stream.starts[a], stream.starts[a])
            } else if hi > lo {
                Span::new(stream.ends[hi - 1], stream.ends[hi - 1])
            } else {
                Span::new(bounds.start, bounds.start)
            };
            Piece::new(page, span)
        })
        .collect();
    PieceSet::from_pieces(page, pieces)
}

/// Occurrences of a linear sequence of elements and text segments.
///
/// The scope is flattened into its elements and non-blank text segments in
/// document order. Matching an element consumes its whole extent, so the
/// next token is compared against the first item starting at or after the
/// element's end. Occurrences do not overlap; scanning resumes after each
/// match.
pub fn seq<'p>(scope: Scope<'p>, pattern: &SeqPattern) -> PieceSet<'p> {
    let page = scope.page();
    let bounds = scope.span();
    let items: Vec<(usize, Span)> = page
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| bounds.contains(&n.span))
        .filter(|(_, n)| match n.kind {
            NodeKind::Element => true,
            NodeKind::Text => !page.stripped(n.span).trim().is_empty(),
            _ => false,
        })
        .map(|(id, n)| (id, n.span))
        .collect();
    let next_after: Vec<usize> = items
        .iter()
        .map(|(_, span)| items.partition_point(|(_, s)| s.start < span.end))
        .collect();
    let token_matches = |idx: usize, tok: &SeqToken| {
        let node = page.node(items[idx].0);
        match tok {
            SeqToken::Element(name) => node.is_element() && node.name == *name,
            SeqToken::Text => node.is_text(),
        }
    };

    let mut pieces = Vec::new();
    let mut k = 0;
    while k < items.len() {
        let mut cur = k;
        let mut last = None;
        for (t, tok) in pattern.tokens().iter().enumerate() {
            if t > 0 {
                cur = next_after[cur];
            }
            if cur >= items.len() || !token_matches(cur, tok) {
                last = None;
                break;
            }
            last = Some(cur);
        }
        match last {
            Some(end_idx) => {
                pieces.push(Piece::new(page, Span::new(items[k].1.start, items[end_idx].1.end)));
                k = next_after[end_idx];
            }
            None => k += 1,
        }
    }
    PieceSet::from_pieces(page, pieces)
}

/// `P + Q`.
pub fn union<'p>(p: &PieceSet<'p>, q: &PieceSet<'p>) -> Result<PieceSet<'p>, AlgebraError> {
    p.check_same_page(q)?;
    let mut all = p.pieces().to_vec();
    all.extend_from_slice(q.pieces());
    Ok(PieceSet::from_pieces(p.page(), all))
}

/// `P - Q`.
pub fn exclude<'p>(p: &PieceSet<'p>, q: &PieceSet<'p>) -> Result<PieceSet<'p>, AlgebraError> {
    p.check_same_page(q)?;
    let drop: std::collections::HashSet<Span> = q.iter().map(|x| x.span()).collect();
    Ok(p.select(|x| !drop.contains(&x.span())))
}

/// `P[i]`, zero-based in canonical order.
pub fn index<'p>(p: &PieceSet<'p>, i: usize) -> Result<Piece<'p>, AlgebraError> {
    p.pieces()
        .get(i)
        .copied()
        .ok_or(AlgebraError::OutOfBounds { index: i, len: p.len() })
}

pub fn positional<'p>(
    p: &PieceSet<'p>,
    q: &PieceSet<'p>,
    rel: Positional,
) -> Result<PieceSet<'p>, AlgebraError> {
    p.check_same_page(q)?;
    // before: some q with start(q) >= end(p), i.e. end(p) <= max start(Q).
    // after:  some q with end(q) <= start(p), i.e. min end(Q) <= start(p).
    let max_start = q.iter().map(|x| x.start()).max();
    let min_end = q.iter().map(|x| x.end()).min();
    let before = |x: &Piece| max_start.is_some_and(|m| x.end() <= m);
    let after = |x: &Piece| min_end.is_some_and(|m| m <= x.start());
    Ok(match rel {
        Positional::Before => p.select(before),
        Positional::NotBefore => p.select(|x| !before(x)),
        Positional::After => p.select(after),
        Positional::NotAfter => p.select(|x| !after(x)),
    })
}

pub fn hierarchical<'p>(
    p: &PieceSet<'p>,
    q: &PieceSet<'p>,
    rel: Hierarchical,
) -> Result<PieceSet<'p>, AlgebraError> {
    p.check_same_page(q)?;
    // Q is already sorted by start; build prefix maxima of ends and suffix
    // minima of ends so each containment test is one binary search.
    let starts: Vec<usize> = q.iter().map(|x| x.start()).collect();
    let mut prefix_max_end = Vec::with_capacity(starts.len());
    for x in q.iter() {
        let prev = prefix_max_end.last().copied().unwrap_or(0);
        prefix_max_end.push(prev.max(x.end()));
    }
    let mut suffix_min_end = vec![usize::MAX; starts.len() + 1];
    for (i, x) in q.iter().enumerate().rev() {
        suffix_min_end[i] = suffix_min_end[i + 1].min(x.end());
    }

    let inside = |x: &Piece| {
        // some q with start(q) <= start(x) and end(x) <= end(q)
        let n = starts.partition_point(|&s| s <= x.start());
        n > 0 && prefix_max_end[n - 1] >= x.end()
    };
    let contain = |x: &Piece| {
        // some q with start(x) <= start(q) and end(q) <= end(x)
        let n = starts.partition_point(|&s| s < x.start());
        suffix_min_end[n] <= x.end()
    };
    Ok(match rel {
        Hierarchical::Inside => p.select(inside),
        Hierarchical::NotInside => p.select(|x| !inside(x)),
        Hierarchical::Contain => p.select(contain),
        Hierarchical::NotContain => p.select(|x| !contain(x)),
    })
}

pub fn regional<'p>(
    p: &PieceSet<'p>,
    q: &PieceSet<'p>,
    rel: Regional,
) -> Result<PieceSet<'p>, AlgebraError> {
    p.check_same_page(q)?;
    // Only non-empty q can overlap anything.
    let nonempty: Vec<Span> = q.iter().map(|x| x.span()).filter(|s| !s.is_empty()).collect();
    let starts: Vec<usize> = nonempty.iter().map(|s| s.start).collect();
    let mut prefix_max_end = Vec::with_capacity(nonempty.len());
    for s in &nonempty {
        let prev = prefix_max_end.last().copied().unwrap_or(0);
        prefix_max_end.push(prev.max(s.end));
    }
    let intersects = |x: &Piece| {
        if x.span().is_empty() {
            return false;
        }
        // some q with start(q) < end(x) and end(q) > start(x)
        let n = starts.partition_point(|&s| s < x.end());
        n > 0 && prefix_max_end[n - 1] > x.start()
    };
    Ok(match rel {
        Regional::Intersect => p.select(intersects),
        Regional::Without => p.select(|x| !intersects(x)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::html::parse_html;

    #[test]
    fn elem_search() {
        let page = parse_html("<ul><li>a</li><li>b</li></ul>", "u");
        let lis = elem(Scope::Page(&page), "LI");
        assert_eq!(lis.texts(), vec!["a", "b"]);
        let first = lis.pieces()[0];
        assert_eq!(elem(first.into(), "li").spans(), vec![first.span()]);

        let empty = parse_html("", "u");
        assert!(elem((&empty).into(), "a").is_empty());
    }

    #[test]
    fn pat_across_tags() {
        let page = parse_html("<b>Honda</b> Civic 2004", "u");
        let hits = pat((&page).into(), "Honda Civic").unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits.pieces()[0].raw(), "Honda</b> Civic");
        assert!(pat((&page).into(), "ZZZ-no-match").unwrap().is_empty());
        assert!(matches!(pat((&page).into(), "("), Err(AlgebraError::BadPattern(_))));
    }

    #[test]
    fn pat_multiple() {
        let page = parse_html("Rs 5,000 or Rs 900", "u");
        let hits = pat((&page).into(), "Rs [0-9,]+").unwrap();
        assert_eq!(hits.texts(), vec!["Rs 5,000", "Rs 900"]);
    }

    #[test]
    fn pat_in_piece_scope() {
        let page = parse_html("<p>x 1</p><p>y 2</p>", "u");
        let second = elem((&page).into(), "p").pieces()[1];
        let hits = pat(second.into(), "[0-9]").unwrap();
        assert_eq!(hits.texts(), vec!["2"]);
        let anchored = pat(second.into(), "^y").unwrap();
        assert_eq!(anchored.texts(), vec!["y"]);
    }

    #[test]
    fn pat_empty_matches_stay_in_scope() {
        let page = parse_html("<i>ab</i>", "u");
        let hits = pat((&page).into(), "x*").unwrap();
        let spans = hits.spans();
        assert_eq!(spans, vec![Span::new(3, 3), Span::new(4, 4), Span::new(5, 5)]);
    }

    #[test]
    fn pcdata_search() {
        let page = parse_html("<h1>Sale</h1><p>Rs 100</p>", "u");
        assert_eq!(pcdata((&page).into()).texts(), vec!["Sale", "Rs 100"]);
        let plain = parse_html("hello", "u");
        assert_eq!(pcdata((&plain).into()).texts(), vec!["hello"]);
        let comments = parse_html("<!-- a --><!-- b -->", "u");
        assert!(pcdata((&comments).into()).is_empty());
    }

    #[test]
    fn seq_search() {
        let pattern: SeqPattern = "h1 #pcdata br".parse().unwrap();
        let page = parse_html("<h1>T</h1>intro<br>", "u");
        let hits = seq((&page).into(), &pattern);
        assert_eq!(hits.spans(), vec![Span::new(0, page.len())]);

        let page = parse_html("<h1>a</h1><h1>b</h1>x<br>", "u");
        let hits = seq((&page).into(), &pattern);
        assert_eq!(hits.spans(), vec![Span::new(10, page.len())]);

        let h2: SeqPattern = "h2".parse().unwrap();
        assert!(seq((&page).into(), &h2).is_empty());
    }

    #[test]
    fn seq_pattern_parsing() {
        assert!("".parse::<SeqPattern>().is_err());
        assert!("h1 <br>".parse::<SeqPattern>().is_err());
        let p: SeqPattern = "H1  #PCDATA br".parse().unwrap();
        assert_eq!(p.to_string(), "h1 #pcdata br");
    }

    #[test]
    fn basic_operators() {
        let page = parse_html("<p>a</p><p>b</p>", "u");
        let p = elem((&page).into(), "p");
        let empty = PieceSet::empty(&page);
        assert_eq!(union(&p, &empty).unwrap(), p);
        assert!(exclude(&p, &p).unwrap().is_empty());
        assert_eq!(index(&p, 0).unwrap(), p.pieces()[0]);
        assert_eq!(index(&p, 2), Err(AlgebraError::OutOfBounds { index: 2, len: 2 }));
    }

    #[test]
    fn page_mismatch() {
        let a = parse_html("<p>a</p>", "u");
        let b = parse_html("<p>a</p>", "u");
        let pa = elem((&a).into(), "p");
        let pb = elem((&b).into(), "p");
        assert_eq!(union(&pa, &pb).unwrap_err(), AlgebraError::PageMismatch);
        assert_eq!(
            positional(&pa, &pb, Positional::Before).unwrap_err(),
            AlgebraError::PageMismatch
        );
    }

    #[test]
    fn before_touching_boundary() {
        let page = parse_html("a<br>b", "u");
        let text = pcdata((&page).into());
        let br = elem((&page).into(), "br");
        assert_eq!(positional(&text, &br, Positional::Before).unwrap().texts(), vec!["a"]);
        assert_eq!(positional(&text, &br, Positional::After).unwrap().texts(), vec!["b"]);
        let empty = PieceSet::empty(&page);
        assert!(positional(&text, &empty, Positional::Before).unwrap().is_empty());
        assert_eq!(positional(&text, &empty, Positional::NotBefore).unwrap(), text);
    }

    #[test]
    fn inside_table_cells() {
        let page = parse_html("<h1>x</h1><table><tr><td>a</td><td>b</td></tr></table>c", "u");
        let text = pcdata((&page).into());
        let td = elem((&page).into(), "td");
        assert_eq!(hierarchical(&text, &td, Hierarchical::Inside).unwrap().texts(), vec!["a", "b"]);
        assert_eq!(hierarchical(&text, &text, Hierarchical::Inside).unwrap(), text);
        assert_eq!(hierarchical(&td, &text, Hierarchical::Contain).unwrap(), td);
        let tables = elem((&page).into(), "table");
        assert!(hierarchical(&tables, &text, Hierarchical::NotContain).unwrap().is_empty());
    }

    #[test]
    fn regional_selection() {
        let page = parse_html("<p>one two</p><p>three</p>", "u");
        let paras = elem((&page).into(), "p");
        let word = pat((&page).into(), "two").unwrap();
        assert_eq!(regional(&paras, &word, Regional::Intersect).unwrap().len(), 1);
        assert_eq!(regional(&paras, &word, Regional::Without).unwrap().texts(), vec!["three"]);
        let empty = PieceSet::empty(&page);
        assert_eq!(regional(&paras, &empty, Regional::Without).unwrap(), paras);
    }
}
