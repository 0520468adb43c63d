//! Test support: seeded tag-soup generation and brute-force oracles.
//!
//! The oracles here deliberately avoid the library's search code paths.
//! Text stripping is a character scanner that drops everything between `<`
//! and `>`; tree searches are plain recursive walks; every operator is the
//! literal quantified condition evaluated over all pairs. The notification
//! oracle is a cross product over a store snapshot.

use std::collections::BTreeSet;

use adwatch_core::html::{NodeKind, Page};
use adwatch_core::store::{Contents, MatchMode};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

pub type Pair = (usize, usize);

pub const TAGS: &[&str] = &["div", "p", "ul", "li", "b", "i", "table", "tr", "td", "h1", "a", "span"];
pub const VOIDS: &[&str] = &["br", "hr", "img"];
const WORDS: &[&str] = &[
    "Honda", "Civic", "Rs", "100", "5,000", "sale", "a", "b", "x y", "07/03/2006", "flat", "ab",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random, often malformed markup with at most `max_nodes` tags and text
/// runs. Text contains no `<` or `&`, so naive tag stripping is exact.
pub fn random_document(rng: &mut impl Rng, max_nodes: usize) -> String {
    let budget = rng.random_range(0..=max_nodes);
    let mut out = String::new();
    let mut open: Vec<&str> = Vec::new();
    for _ in 0..budget {
        match rng.random_range(0..100) {
            0..=34 => {
                let tag = *TAGS.choose(rng).unwrap();
                out.push_str(&format!("<{tag}>"));
                open.push(tag);
            }
            35..=54 => {
                if let Some(tag) = open.pop() {
                    out.push_str(&format!("</{tag}>"));
                }
            }
            55..=84 => {
                out.push_str(WORDS.choose(rng).unwrap());
                if rng.random_bool(0.3) {
                    out.push(' ');
                }
            }
            85..=91 => {
                let tag = VOIDS.choose(rng).unwrap();
                out.push_str(&format!("<{tag}>"));
            }
            92..=95 => {
                // stray close tag
                out.push_str(&format!("</{}>", TAGS.choose(rng).unwrap()));
            }
            _ => out.push_str("<!-- note -->"),
        }
    }
    // leave some elements unclosed on purpose
    while let Some(tag) = open.pop() {
        if rng.random_bool(0.5) {
            out.push_str(&format!("</{tag}>"));
        }
    }
    out
}

/// Arbitrary printable soup including broken tags, entities and quotes.
pub fn random_soup(rng: &mut impl Rng, max_len: usize) -> String {
    const ATOMS: &[&str] = &[
        "<", ">", "</", "/>", "<p", "<div ", "<a href=\"", "\"", "'", "=", "&", "&amp;", "&#", "&#x41;",
        ";", "<!--", "-->", "<!", "<?", "<br>", "</p>", "<li>", "<td>", "<script>", "</script>", "x",
        "Rs 1", " ", "\n", "é", "<TABLE>", "<tr", "</ul", "<b>",
    ];
    let mut out = String::new();
    while out.len() < max_len {
        let atom = ATOMS.choose(rng).unwrap();
        if out.len() + atom.len() > max_len {
            break;
        }
        out.push_str(atom);
        if rng.random_bool(0.05) {
            break;
        }
    }
    out
}

/// Deletes everything between `<` and `>`, returning each surviving
/// character with its source offset. Only exact for documents whose text
/// has no `<` or entities.
pub fn naive_strip(source: &str) -> Vec<(char, usize)> {
    let mut out = Vec::new();
    let mut in_tag = false;
    for (i, c) in source.chars().enumerate() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push((c, i)),
            _ => {}
        }
    }
    out
}

/// Pattern search by stripping tags and running the regex on the result.
/// Patterns must not match the empty string.
pub fn oracle_pat(source: &str, pattern: &str, scope: Pair) -> Vec<Pair> {
    let kept: Vec<(char, usize)> =
        naive_strip(source).into_iter().filter(|&(_, i)| scope.0 <= i && i < scope.1).collect();
    let text: String = kept.iter().map(|&(c, _)| c).collect();
    let re = Regex::new(pattern).unwrap();
    let mut out = Vec::new();
    for m in re.find_iter(&text) {
        let a = text[..m.start()].chars().count();
        let b = a + m.as_str().chars().count();
        assert!(a < b, "oracle patterns must not match empty");
        out.push((kept[a].1, kept[b - 1].1 + 1));
    }
    canonical(out)
}

fn walk(page: &Page, id: usize, visit: &mut impl FnMut(usize)) {
    visit(id);
    for &c in &page.node(id).children {
        walk(page, c, visit);
    }
}

fn within(outer: Pair, inner: Pair) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

pub fn oracle_elem(page: &Page, scope: Pair, name: &str) -> Vec<Pair> {
    let mut out = Vec::new();
    walk(page, page.root(), &mut |id| {
        let n = page.node(id);
        let span = (n.span.start, n.span.end);
        if n.kind == NodeKind::Element && n.name.eq_ignore_ascii_case(name) && within(scope, span) {
            out.push(span);
        }
    });
    canonical(out)
}

pub fn oracle_pcdata(page: &Page, scope: Pair) -> Vec<Pair> {
    let mut out = Vec::new();
    walk(page, page.root(), &mut |id| {
        let n = page.node(id);
        let span = (n.span.start, n.span.end);
        if n.kind == NodeKind::Text && span.0 < span.1 && within(scope, span) {
            out.push(span);
        }
    });
    canonical(out)
}

/// Sequence search by trying every start item and walking the token list
/// with linear scans for the next item.
pub fn oracle_seq(page: &Page, scope: Pair, tokens: &[&str]) -> Vec<Pair> {
    // (is_text, name, span)
    let mut items: Vec<(bool, String, Pair)> = Vec::new();
    walk(page, page.root(), &mut |id| {
        let n = page.node(id);
        let span = (n.span.start, n.span.end);
        if !within(scope, span) {
            return;
        }
        match n.kind {
            NodeKind::Element => items.push((false, n.name.clone(), span)),
            NodeKind::Text => {
                let txt: String = naive_strip(page.slice(n.span)).into_iter().map(|(c, _)| c).collect();
                if !txt.trim().is_empty() {
                    items.push((true, String::new(), span));
                }
            }
            _ => {}
        }
    });
    let fits = |item: &(bool, String, Pair), tok: &str| {
        if tok == "#pcdata" {
            item.0
        } else {
            !item.0 && item.1 == tok
        }
    };
    let mut out = Vec::new();
    let mut resume_at = 0; // source offset where the next match may start
    for k in 0..items.len() {
        if items[k].2 .0 < resume_at {
            continue;
        }
        let mut cur = k;
        let mut ok = fits(&items[cur], tokens[0]);
        for tok in &tokens[1..] {
            if !ok {
                break;
            }
            let end = items[cur].2 .1;
            match (0..items.len()).find(|&j| items[j].2 .0 >= end) {
                Some(j) if fits(&items[j], tok) => cur = j,
                _ => ok = false,
            }
        }
        if ok {
            out.push((items[k].2 .0, items[cur].2 .1));
            resume_at = items[cur].2 .1;
        }
    }
    canonical(out)
}

/// Sorted by start ascending, end descending; duplicates removed.
pub fn canonical(mut v: Vec<Pair>) -> Vec<Pair> {
    v.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    v.dedup();
    v
}

pub fn oracle_union(p: &[Pair], q: &[Pair]) -> Vec<Pair> {
    canonical(p.iter().chain(q).copied().collect())
}

pub fn oracle_exclude(p: &[Pair], q: &[Pair]) -> Vec<Pair> {
    p.iter().filter(|x| !q.contains(x)).copied().collect()
}

fn select(p: &[Pair], q: &[Pair], pred: impl Fn(Pair, Pair) -> bool, negate: bool) -> Vec<Pair> {
    p.iter().filter(|&&x| q.iter().any(|&y| pred(x, y)) != negate).copied().collect()
}

pub fn oracle_before(p: &[Pair], q: &[Pair], negate: bool) -> Vec<Pair> {
    select(p, q, |x, y| x.1 <= y.0, negate)
}

pub fn oracle_after(p: &[Pair], q: &[Pair], negate: bool) -> Vec<Pair> {
    select(p, q, |x, y| y.1 <= x.0, negate)
}

pub fn oracle_inside(p: &[Pair], q: &[Pair], negate: bool) -> Vec<Pair> {
    select(p, q, |x, y| y.0 <= x.0 && x.1 <= y.1, negate)
}

pub fn oracle_contain(p: &[Pair], q: &[Pair], negate: bool) -> Vec<Pair> {
    select(p, q, |x, y| x.0 <= y.0 && y.1 <= x.1, negate)
}

pub fn oracle_intersect(p: &[Pair], q: &[Pair], negate: bool) -> Vec<Pair> {
    select(p, q, |x, y| x.0.max(y.0) < x.1.min(y.1), negate)
}

/// Random span set over a page of `len` characters, canonical.
pub fn random_spans(rng: &mut impl Rng, len: usize, max: usize) -> Vec<Pair> {
    let n = rng.random_range(0..=max);
    let v = (0..n)
        .map(|_| {
            let a = rng.random_range(0..=len);
            let b = rng.random_range(a..=len);
            (a, b)
        })
        .collect();
    canonical(v)
}

/// Hand-written documents that cover the recovery rules and the algebra's
/// corner cases.
pub const HAND_FIXTURES: &[&str] = &[
    "",
    "hello",
    "<p>a<p>b",
    "<ul><li>x</li><li>y</li></ul>",
    "<ul><li>x<li>y</ul>",
    "<b>Honda</b> Civic 2004",
    "Rs 5,000 or Rs 900",
    "<h1>T</h1>intro<br>",
    "<h1>a</h1><h1>b</h1>x<br>",
    "a<br>b",
    "<table><tr><td>Honda</td><td>Civic</td></tr><tr><td>Rs 100</td></tr></table>",
    "<table><tr><td>a<td>b<tr><td>c</table>",
    "<div><p>one<div>two</div></p></div>",
    "<!-- c --><p>x</p><!-- d -->",
    "</b></i>text</p>",
    "<div><span>a <b>b</b> c</span></div> tail",
    "<h1>x</h1> <br> <h1>y</h1>z<br>",
    "<ul><li><a>07/03/2006</a> flat</li><li>sale</li></ul>",
    "<p><b><i>deep</i></b></p><p>shallow",
    "<td>x</td><tr>y</tr><li>z",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_and_pat_oracle() {
        assert_eq!(oracle_pat("<b>Honda</b> Civic", "Honda Civic", (0, 18)), vec![(3, 18)]);
        assert_eq!(oracle_pat("Rs 5,000 or Rs 900", "Rs [0-9,]+", (0, 18)), vec![(0, 8), (12, 18)]);
    }

    #[test]
    fn generator_is_seeded() {
        let a = random_document(&mut rng(7), 50);
        let b = random_document(&mut rng(7), 50);
        assert_eq!(a, b);
    }
}

/// Runs every search and operator on one document against the oracles.
/// Returns the number of comparisons made, or a description of the first
/// disagreement.
pub fn check_algebra(source: &str, rng: &mut impl Rng) -> Result<usize, String> {
    use adwatch_core::algebra::{self, Hierarchical as H, Positional as Pos, Regional as R};
    use adwatch_core::piece::{Piece, PieceSet, Scope};
    use adwatch_core::Span;

    const PATTERNS: &[&str] = &["[a-z]+", "Honda Civic", "[0-9]", "a b", "Rs [0-9,]+", "[A-Z][a-z]*"];
    const SEQS: &[&[&str]] = &[
        &["h1", "#pcdata", "br"],
        &["#pcdata"],
        &["li", "li"],
        &["b", "#pcdata"],
        &["td", "td"],
        &["p"],
    ];

    let page = Page::parse(source, "http://oracle.test/");
    let len = page.len();
    let pairs = |set: &PieceSet| -> Vec<Pair> { set.iter().map(|p| (p.start(), p.end())).collect() };
    let mut checks = 0usize;
    let mut expect = |what: &str, got: Vec<Pair>, want: Vec<Pair>| -> Result<(), String> {
        checks += 1;
        if got != want {
            return Err(format!("{what} on {source:?}: got {got:?}, oracle {want:?}"));
        }
        if canonical(got.clone()) != got {
            return Err(format!("{what} on {source:?}: output not canonical {got:?}"));
        }
        Ok(())
    };

    // scopes: the page, some elements, and a raw region
    let mut scopes: Vec<Scope> = vec![Scope::Page(&page)];
    let elements: Vec<usize> =
        (0..page.nodes().len()).filter(|&i| page.node(i).kind == NodeKind::Element).collect();
    for _ in 0..3 {
        if let Some(&id) = elements.choose(rng) {
            scopes.push(Scope::Piece(Piece::of_node(&page, id)));
        }
    }
    let a = rng.random_range(0..=len);
    let b = rng.random_range(a..=len);
    scopes.push(Scope::Piece(Piece::new(&page, Span::new(a, b))));

    for scope in &scopes {
        let s = scope.span();
        let sp = (s.start, s.end);
        for tag in TAGS.iter().chain(VOIDS) {
            let got = pairs(&algebra::elem(*scope, tag));
            for p in &got {
                if !within(sp, *p) {
                    return Err(format!("elem({tag}) escaped scope {sp:?}: {p:?}"));
                }
            }
            expect(&format!("elem({tag}) in {sp:?}"), got, oracle_elem(&page, sp, tag))?;
        }
        expect(&format!("pcdata in {sp:?}"), pairs(&algebra::pcdata(*scope)), oracle_pcdata(&page, sp))?;
        for pattern in PATTERNS {
            let got = pairs(&algebra::pat(*scope, pattern).map_err(|e| e.to_string())?);
            expect(&format!("pat({pattern}) in {sp:?}"), got, oracle_pat(source, pattern, sp))?;
        }
        for tokens in SEQS {
            let pattern = tokens.join(" ").parse().map_err(|e: algebra::AlgebraError| e.to_string())?;
            let got = pairs(&algebra::seq(*scope, &pattern));
            expect(&format!("seq({tokens:?}) in {sp:?}"), got, oracle_seq(&page, sp, tokens))?;
        }
    }

    // operand sets
    let raw_set = |spans: Vec<Pair>| {
        PieceSet::new(&page, spans.into_iter().map(|(a, b)| Piece::new(&page, Span::new(a, b))).collect())
            .unwrap()
    };
    let whole = Scope::Page(&page);
    let operands: Vec<PieceSet> = vec![
        algebra::elem(whole, "p"),
        algebra::elem(whole, "li"),
        algebra::elem(whole, "td"),
        algebra::pcdata(whole),
        algebra::pat(whole, "[a-z]+").unwrap(),
        raw_set(random_spans(rng, len, 8)),
        raw_set(random_spans(rng, len, 8)),
        PieceSet::empty(&page),
    ];
    for p in &operands {
        let pp = pairs(p);
        for (i, want) in pp.iter().enumerate() {
            let got = algebra::index(p, i).map_err(|e| e.to_string())?;
            expect("index", vec![(got.start(), got.end())], vec![*want])?;
        }
        if algebra::index(p, pp.len()).is_ok() {
            return Err(format!("index {} past end succeeded", pp.len()));
        }
        for q in &operands {
            let qq = pairs(q);
            let err = |e: algebra::AlgebraError| e.to_string();
            expect("union", pairs(&algebra::union(p, q).map_err(err)?), oracle_union(&pp, &qq))?;
            expect("exclude", pairs(&algebra::exclude(p, q).map_err(err)?), oracle_exclude(&pp, &qq))?;
            for (rel, want) in [
                (Pos::Before, oracle_before(&pp, &qq, false)),
                (Pos::NotBefore, oracle_before(&pp, &qq, true)),
                (Pos::After, oracle_after(&pp, &qq, false)),
                (Pos::NotAfter, oracle_after(&pp, &qq, true)),
            ] {
                let got = pairs(&algebra::positional(p, q, rel).map_err(err)?);
                expect(&format!("{rel:?}"), got, want)?;
            }
            for (rel, want) in [
                (H::Inside, oracle_inside(&pp, &qq, false)),
                (H::NotInside, oracle_inside(&pp, &qq, true)),
                (H::Contain, oracle_contain(&pp, &qq, false)),
                (H::NotContain, oracle_contain(&pp, &qq, true)),
            ] {
                let got = pairs(&algebra::hierarchical(p, q, rel).map_err(err)?);
                expect(&format!("{rel:?}"), got, want)?;
            }
            for (rel, want) in [
                (R::Intersect, oracle_intersect(&pp, &qq, false)),
                (R::Without, oracle_intersect(&pp, &qq, true)),
            ] {
                let got = pairs(&algebra::regional(p, q, rel).map_err(err)?);
                expect(&format!("{rel:?}"), got, want)?;
            }
        }
    }
    Ok(checks)
}

/// Every `(client, advert)` pair that should ever be notified: the client
/// subscribes to some preference of the advert's category whose
/// constraints all hold. Computed over a store snapshot by plain nested
/// loops, independently of the library's matcher.
pub fn oracle_notifications(contents: &Contents) -> BTreeSet<(u64, u64)> {
    fn fold(s: &str) -> String {
        let mut out = String::new();
        for word in s.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.extend(word.chars().flat_map(char::to_lowercase));
        }
        out
    }
    let mut pairs = BTreeSet::new();
    for client in &contents.clients {
        for pref in contents.preferences.iter().filter(|p| client.subscriptions.contains(&p.id)) {
            for advert in &contents.adverts {
                if advert.category != pref.category {
                    continue;
                }
                let ok = pref.constraints.iter().all(|c| {
                    let have = advert
                        .fields
                        .iter()
                        .find(|(k, _)| k.as_str() == c.field.trim())
                        .map(|(_, v)| fold(v))
                        .unwrap_or_default();
                    let want = fold(&c.value);
                    match c.mode {
                        MatchMode::Equals => have == want,
                        MatchMode::Contains => have.contains(want.as_str()),
                    }
                });
                if ok {
                    pairs.insert((client.id, advert.id));
                }
            }
        }
    }
    pairs
}
