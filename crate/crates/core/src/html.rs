//! Lenient HTML parsing into an arena tree with character-offset spans.
//!
//! Every node records the region of the decoded source it was built from.
//! Offsets count `char`s, not bytes, so piece arithmetic does not depend on
//! the encoding of the original document.
//!
//! Recovery is deliberately simple: unclosed elements are closed when an
//! ancestor closes or at end of input, stray close tags are dropped, a small
//! set of start tags implicitly close an open sibling (`p`, `li`, `tr`, ...),
//! and void elements never take children.

use std::fmt;

use thiserror::Error;

/// Name reported for the synthetic document root in node paths.
pub const ROOT_NAME: &str = "html-root";

const VOID_ELEMENTS: &[&str] = &["br", "hr", "img", "input", "meta", "link"];
const RAW_TEXT_ELEMENTS: &[&str] = &["script", "style"];

/// Start tags that close an open `p` in the same block scope.
const CLOSES_PARAGRAPH: &[&str] = &[
    "p", "div", "ul", "ol", "dl", "dd", "dt", "li", "table", "h1", "h2", "h3", "h4", "h5", "h6",
    "pre", "form", "blockquote", "hr", "address", "section", "article", "header", "footer", "nav",
];
const PARAGRAPH_SCOPE: &[&str] = &["table", "td", "th", "caption", "button", "object"];

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HtmlError {
    #[error("piece has no element anchor")]
    NoAnchor,
}

/// Half-open character range `[start, end)` into a page source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span start {start} > end {end}");
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Strict overlap; zero-width spans overlap nothing.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Document,
    Element,
    Text,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    /// Lowercase element name; empty for every other kind.
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub span: Span,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl Node {
    pub fn is_element(&self) -> bool {
        self.kind == NodeKind::Element
    }

    pub fn is_text(&self) -> bool {
        self.kind == NodeKind::Text
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// The tag-stripped text of a page together with the offset mapping back
/// into the source.
///
/// `starts[i]..ends[i]` is the source region that produced text character
/// `i`; a decoded entity maps one text character onto several source
/// characters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextStream {
    pub text: String,
    pub starts: Vec<usize>,
    pub ends: Vec<usize>,
    /// Byte offset into `text` of each character, plus a final `text.len()`.
    byte_pos: Vec<usize>,
}

impl TextStream {
    /// Number of characters in the stream.
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Source offset of text character `i`.
    pub fn source_offset(&self, i: usize) -> usize {
        self.starts[i]
    }

    /// Range of text characters whose source region lies inside `span`.
    pub fn char_range(&self, span: Span) -> (usize, usize) {
        let lo = self.starts.partition_point(|&s| s < span.start);
        let hi = self.ends.partition_point(|&e| e <= span.end);
        (lo, hi.max(lo))
    }

    /// Text characters `[lo, hi)` as a string slice.
    pub fn slice(&self, lo: usize, hi: usize) -> &str {
        &self.text[self.byte_pos[lo]..self.byte_pos[hi]]
    }

    /// Converts a byte offset into `text` back to a character index.
    pub fn char_index(&self, byte: usize) -> usize {
        self.byte_pos.partition_point(|&b| b < byte)
    }

    fn push(&mut self, c: char, span: Span) {
        self.byte_pos.push(self.text.len());
        self.text.push(c);
        self.starts.push(span.start);
        self.ends.push(span.end);
    }

    fn finish(mut self) -> Self {
        self.byte_pos.push(self.text.len());
        self
    }
}

/// A fetched and parsed document. Immutable once built.
#[derive(Debug, Clone)]
pub struct Page {
    url: String,
    source: String,
    /// Byte offset of every character of `source`, plus `source.len()`.
    char_bytes: Vec<usize>,
    nodes: Vec<Node>,
    text: TextStream,
}

impl Page {
    pub fn parse(source: &str, url: &str) -> Page {
        parse_html(source, url)
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Length of the source in characters.
    pub fn len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// All nodes in document order (pre-order, root first).
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn text_stream(&self) -> &TextStream {
        &self.text
    }

    /// Raw source characters covered by `span`.
    pub fn slice(&self, span: Span) -> &str {
        &self.source[self.char_bytes[span.start]..self.char_bytes[span.end]]
    }

    /// Tag-stripped, entity-decoded text inside `span`.
    pub fn stripped(&self, span: Span) -> &str {
        let (lo, hi) = self.text.char_range(span);
        self.text.slice(lo, hi)
    }

    /// Element names and sibling indexes from the root down to `id`.
    ///
    /// The sibling index counts element siblings only, so whitespace between
    /// tags does not shift it.
    pub fn path_to(&self, id: NodeId) -> Vec<(String, usize)> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            let node = &self.nodes[n];
            match node.parent {
                None => path.push((ROOT_NAME.to_string(), 0)),
                Some(p) => {
                    let idx = self.nodes[p]
                        .children
                        .iter()
                        .filter(|&&c| self.nodes[c].is_element())
                        .position(|&c| c == n)
                        .unwrap_or(0);
                    path.push((node.name.clone(), idx));
                }
            }
            cur = node.parent;
        }
        path.reverse();
        path
    }
}

/// Parses `source` into a [`Page`]. Never fails.
pub fn parse_html(source: &str, url: &str) -> Page {
    let chars: Vec<char> = source.chars().collect();
    let mut char_bytes: Vec<usize> = source.char_indices().map(|(b, _)| b).collect();
    char_bytes.push(source.len());

    let mut builder = TreeBuilder::new(chars.len());
    builder.run(&chars);
    let nodes = builder.nodes;
    let text = build_text_stream_from(&nodes, &chars);

    Page {
        url: url.to_string(),
        source: source.to_string(),
        char_bytes,
        nodes,
        text,
    }
}

/// Rebuilds the text stream of a page from its text nodes.
pub fn build_text_stream(page: &Page) -> TextStream {
    let chars: Vec<char> = page.source.chars().collect();
    build_text_stream_from(&page.nodes, &chars)
}

fn build_text_stream_from(nodes: &[Node], chars: &[char]) -> TextStream {
    let mut stream = TextStream::default();
    for node in nodes.iter().filter(|n| n.is_text()) {
        decode_entities(chars, node.span, |c, span| stream.push(c, span));
    }
    stream.finish()
}

/// Decodes the five core entities, `&nbsp;` and numeric references inside
/// `span`, reporting each output character with the source region it came
/// from. Anything unrecognised is passed through literally.
fn decode_entities(chars: &[char], span: Span, mut emit: impl FnMut(char, Span)) {
    let mut i = span.start;
    while i < span.end {
        if chars[i] == '&' {
            if let Some((c, len)) = match_entity(&chars[i..span.end]) {
                emit(c, Span::new(i, i + len));
                i += len;
                continue;
            }
        }
        emit(chars[i], Span::new(i, i + 1));
        i += 1;
    }
}

fn match_entity(input: &[char]) -> Option<(char, usize)> {
    let semi = input.iter().take(12).position(|&c| c == ';')?;
    let body: String = input[1..semi].iter().collect();
    let decoded = match body.as_str() {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{00A0}',
        _ => {
            let num = body.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) if !hex.is_empty() => u32::from_str_radix(hex, 16).ok()?,
                Some(_) => return None,
                None if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) => {
                    num.parse().ok()?
                }
                None => return None,
            };
            match char::from_u32(code) {
                Some(c) if code != 0 => c,
                _ => '\u{FFFD}',
            }
        }
    };
    Some((decoded, semi + 1))
}

/// Entity-decodes an attribute value.
pub fn decode_str(value: &str) -> String {
    let chars: Vec<char> = value.chars().collect();
    let mut out = String::with_capacity(value.len());
    decode_entities(&chars, Span::new(0, chars.len()), |c, _| out.push(c));
    out
}

enum Markup {
    Comment { end: usize },
    Open { name: String, attrs: Vec<(String, String)>, self_closing: bool, end: usize },
    Close { name: String, end: usize },
}

struct TreeBuilder {
    nodes: Vec<Node>,
    stack: Vec<NodeId>,
}

impl TreeBuilder {
    fn new(len: usize) -> Self {
        let root = Node {
            kind: NodeKind::Document,
            name: String::new(),
            attrs: Vec::new(),
            span: Span::new(0, len),
            parent: None,
            children: Vec::new(),
        };
        TreeBuilder { nodes: vec![root], stack: vec![0] }
    }

    fn run(&mut self, chars: &[char]) {
        let mut i = 0;
        let mut text_start: Option<usize> = None;
        while i < chars.len() {
            if chars[i] == '<' {
                if let Some(markup) = lex_markup(chars, i) {
                    if let Some(s) = text_start.take() {
                        self.add_leaf(NodeKind::Text, Span::new(s, i));
                    }
                    i = self.handle(chars, i, markup);
                    continue;
                }
            }
            text_start.get_or_insert(i);
            i += 1;
        }
        if let Some(s) = text_start {
            self.add_leaf(NodeKind::Text, Span::new(s, chars.len()));
        }
        while self.stack.len() > 1 {
            let id = self.stack.pop().unwrap();
            self.nodes[id].span.end = chars.len();
        }
    }

    /// Applies one markup token starting at `start`; returns the next offset.
    fn handle(&mut self, chars: &[char], start: usize, markup: Markup) -> usize {
        match markup {
            Markup::Comment { end } => {
                self.add_leaf(NodeKind::Comment, Span::new(start, end));
                end
            }
            Markup::Close { name, end } => {
                self.close(&name, start, end);
                end
            }
            Markup::Open { name, attrs, self_closing, end } => {
                self.implied_close(&name, start);
                let id = self.add_node(NodeKind::Element, name.clone(), attrs, Span::new(start, end));
                if self_closing || VOID_ELEMENTS.contains(&name.as_str()) {
                    return end;
                }
                self.stack.push(id);
                if RAW_TEXT_ELEMENTS.contains(&name.as_str()) {
                    return self.raw_text(chars, end, &name);
                }
                end
            }
        }
    }

    /// Consumes the body of a raw-text element up to its close tag.
    fn raw_text(&mut self, chars: &[char], from: usize, name: &str) -> usize {
        let mut j = from;
        while j < chars.len() {
            if chars[j] == '<' && close_tag_named(chars, j, name) {
                break;
            }
            j += 1;
        }
        if j > from {
            self.add_leaf(NodeKind::Text, Span::new(from, j));
        }
        j
    }

    fn current(&self) -> NodeId {
        *self.stack.last().expect("root is never popped")
    }

    fn add_node(
        &mut self,
        kind: NodeKind,
        name: String,
        attrs: Vec<(String, String)>,
        span: Span,
    ) -> NodeId {
        let parent = self.current();
        let id = self.nodes.len();
        self.nodes.push(Node { kind, name, attrs, span, parent: Some(parent), children: Vec::new() });
        self.nodes[parent].children.push(id);
        id
    }

    fn add_leaf(&mut self, kind: NodeKind, span: Span) {
        self.add_node(kind, String::new(), Vec::new(), span);
    }

    /// Position in the stack of the nearest open element named `name`,
    /// searching down from the top and giving up at any of `boundary`.
    fn find_open(&self, name: &str, boundary: &[&str]) -> Option<usize> {
        for (pos, &id) in self.stack.iter().enumerate().skip(1).rev() {
            let open = self.nodes[id].name.as_str();
            if open == name {
                return Some(pos);
            }
            if boundary.contains(&open) {
                return None;
            }
        }
        None
    }

    fn find_open_any(&self, names: &[&str], boundary: &[&str]) -> Option<usize> {
        for (pos, &id) in self.stack.iter().enumerate().skip(1).rev() {
            let open = self.nodes[id].name.as_str();
            if names.contains(&open) {
                return Some(pos);
            }
            if boundary.contains(&open) {
                return None;
            }
        }
        None
    }

    /// Pops the stack down to (and including) `pos`, ending every popped
    /// element at `at`.
    fn pop_to(&mut self, pos: usize, at: usize) {
        while self.stack.len() > pos {
            let id = self.stack.pop().unwrap();
            self.nodes[id].span.end = at;
        }
    }

    fn implied_close(&mut self, name: &str, at: usize) {
        if CLOSES_PARAGRAPH.contains(&name) {
            if let Some(pos) = self.find_open("p", PARAGRAPH_SCOPE) {
                self.pop_to(pos, at);
            }
        }
        let target = match name {
            "li" => self.find_open("li", &["ul", "ol", "table", "td", "th"]),
            "dt" | "dd" => self.find_open_any(&["dt", "dd"], &["dl", "table", "td", "th"]),
            "tr" => self.find_open("tr", &["table"]),
            "td" | "th" => self.find_open_any(&["td", "th"], &["tr", "table"]),
            "thead" | "tbody" | "tfoot" => {
                self.find_open_any(&["thead", "tbody", "tfoot"], &["table"])
            }
            "option" => self.find_open("option", &["select"]),
            "a" => self.find_open("a", &[]),
            _ => None,
        };
        if let Some(pos) = target {
            self.pop_to(pos, at);
        }
    }

    fn close(&mut self, name: &str, start: usize, end: usize) {
        if let Some(pos) = self.find_open(name, &[]) {
            let id = self.stack[pos];
            self.pop_to(pos + 1, start);
            self.stack.pop();
            self.nodes[id].span.end = end;
        }
    }
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | ':' | '.')
}

fn find_seq(chars: &[char], from: usize, needle: &str) -> Option<usize> {
    let needle: Vec<char> = needle.chars().collect();
    (from..chars.len()).find(|&i| chars[i..].starts_with(&needle))
}

fn close_tag_named(chars: &[char], at: usize, name: &str) -> bool {
    if chars.get(at + 1) != Some(&'/') {
        return false;
    }
    let mut j = at + 2;
    for expected in name.chars() {
        match chars.get(j) {
            Some(c) if c.to_ascii_lowercase() == expected => j += 1,
            _ => return false,
        }
    }
    !matches!(chars.get(j), Some(&c) if is_name_char(c))
}

/// Recognises a comment, declaration, start tag or end tag at `at`.
/// Returns `None` when the `<` is just text.
fn lex_markup(chars: &[char], at: usize) -> Option<Markup> {
    let next = *chars.get(at + 1)?;
    let len = chars.len();
    if chars[at..].starts_with(&['<', '!', '-', '-']) {
        let end = find_seq(chars, at + 4, "-->").map_or(len, |i| i + 3);
        return Some(Markup::Comment { end });
    }
    if next == '!' || next == '?' {
        let end = find_seq(chars, at + 2, ">").map_or(len, |i| i + 1);
        return Some(Markup::Comment { end });
    }
    if next == '/' {
        if !chars.get(at + 2).is_some_and(|&c| is_name_start(c)) {
            return None;
        }
        let (name, j) = lex_name(chars, at + 2);
        let end = find_seq(chars, j, ">").map_or(len, |i| i + 1);
        return Some(Markup::Close { name, end });
    }
    if !is_name_start(next) {
        return None;
    }
    let (name, mut j) = lex_name(chars, at + 1);
    let mut attrs: Vec<(String, String)> = Vec::new();
    let mut self_closing = false;
    loop {
        while j < len && chars[j].is_whitespace() {
            j += 1;
        }
        if j >= len {
            break;
        }
        match chars[j] {
            '>' => {
                j += 1;
                break;
            }
            '/' if chars.get(j + 1) == Some(&'>') => {
                self_closing = true;
                j += 2;
                break;
            }
            '/' => {
                j += 1;
                continue;
            }
            _ => {}
        }
        let name_start = j;
        while j < len && !chars[j].is_whitespace() && !matches!(chars[j], '=' | '>' | '/') {
            j += 1;
        }
        if j == name_start {
            // a lone '=' or similar junk
            j += 1;
            continue;
        }
        let attr_name: String = chars[name_start..j].iter().collect::<String>().to_ascii_lowercase();
        while j < len && chars[j].is_whitespace() {
            j += 1;
        }
        let mut value = String::new();
        if j < len && chars[j] == '=' {
            j += 1;
            while j < len && chars[j].is_whitespace() {
                j += 1;
            }
            if j < len && (chars[j] == '"' || chars[j] == '\'') {
                let quote = chars[j];
                let vstart = j + 1;
                j = vstart;
                while j < len && chars[j] != quote {
                    j += 1;
                }
                value = chars[vstart..j].iter().collect();
                j = (j + 1).min(len);
            } else {
                let vstart = j;
                while j < len && !chars[j].is_whitespace() && chars[j] != '>' {
                    j += 1;
                }
                value = chars[vstart..j].iter().collect();
            }
        }
        if !attrs.iter().any(|(k, _)| *k == attr_name) {
            attrs.push((attr_name, decode_str(&value)));
        }
    }
    Some(Markup::Open { name, attrs, self_closing, end: j })
}

fn lex_name(chars: &[char], from: usize) -> (String, usize) {
    let mut j = from;
    while j < chars.len() && is_name_char(chars[j]) {
        j += 1;
    }
    (chars[from..j].iter().collect::<String>().to_ascii_lowercase(), j)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Compact structural rendering: `name[children]`, text as `"..."`.
    fn shape(page: &Page, id: NodeId) -> String {
        let node = page.node(id);
        match node.kind {
            NodeKind::Text => format!("{:?}", page.slice(node.span)),
            NodeKind::Comment => "#comment".to_string(),
            NodeKind::Document | NodeKind::Element => {
                let inner: Vec<String> = node.children.iter().map(|&c| shape(page, c)).collect();
                let name = if node.kind == NodeKind::Document { "#doc" } else { &node.name };
                format!("{}[{}]", name, inner.join(","))
            }
        }
    }

    #[test]
    fn implicit_paragraph_close() {
        let page = parse_html("<p>a<p>b", "http://x/");
        assert_eq!(shape(&page, 0), r#"#doc[p["a"],p["b"]]"#);
        let p1 = page.node(1);
        assert_eq!(p1.span, Span::new(0, 4));
    }

    #[test]
    fn empty_input() {
        let page = parse_html("", "http://x/");
        assert!(page.node(0).children.is_empty());
        assert!(page.text_stream().is_empty());
        assert_eq!(page.node(0).span, Span::new(0, 0));
    }

    #[test]
    fn list_structure_and_spans() {
        let src = "<ul><li>x</li><li>y</li></ul>";
        let page = parse_html(src, "http://x/");
        assert_eq!(shape(&page, 0), r#"#doc[ul[li["x"],li["y"]]]"#);
        let ul = page.node(1);
        assert_eq!(ul.span, Span::new(0, src.chars().count()));
        let lis: Vec<&Node> = ul.children.iter().map(|&c| page.node(c)).collect();
        assert_eq!(page.slice(lis[0].span), "<li>x</li>");
        assert_eq!(page.slice(lis[1].span), "<li>y</li>");
    }

    #[test]
    fn recovery_rules() {
        let page = parse_html("<div><b>x</div>y</i><br>z<img src=a.png>", "u");
        assert_eq!(shape(&page, 0), r#"#doc[div[b["x"]],"y",br[],"z",img[]]"#);
        let b = page.nodes().iter().find(|n| n.name == "b").unwrap();
        assert_eq!(page.slice(b.span), "<b>x");
    }

    #[test]
    fn table_rows_close_each_other() {
        let page = parse_html("<table><tr><td>a<td>b<tr><td>c</table>", "u");
        assert_eq!(shape(&page, 0), r#"#doc[table[tr[td["a"],td["b"]],tr[td["c"]]]]"#);
    }

    #[test]
    fn attributes_lowercased_first_wins() {
        let page = parse_html(r#"<A HREF="/one?a=1&amp;b=2" href='/two' Class=x>t</A>"#, "u");
        let a = page.node(1);
        assert_eq!(a.name, "a");
        assert_eq!(a.attr("href"), Some("/one?a=1&b=2"));
        assert_eq!(a.attrs.len(), 2);
        assert_eq!(a.attr("class"), Some("x"));
    }

    #[test]
    fn comments_and_doctype_are_not_text() {
        let page = parse_html("<!DOCTYPE html><!-- hi -->a<!-- unterminated", "u");
        assert_eq!(page.text_stream().text, "a");
        assert_eq!(shape(&page, 0), r##"#doc[#comment,#comment,"a",#comment]"##);
    }

    #[test]
    fn stray_angle_brackets_are_text() {
        let page = parse_html("a < b <3 </ c", "u");
        assert_eq!(page.text_stream().text, "a < b <3 </ c");
    }

    #[test]
    fn script_body_is_raw() {
        let page = parse_html("<script>if (a<b) {}</script>after", "u");
        assert_eq!(shape(&page, 0), r#"#doc[script["if (a<b) {}"],"after"]"#);
    }

    #[test]
    fn strips_tags() {
        let page = parse_html("<b>Honda</b> Civic", "u");
        assert_eq!(page.text_stream().text, "Honda Civic");
        assert_eq!(page.text_stream().starts, vec![3, 4, 5, 6, 7, 12, 13, 14, 15, 16, 17]);
    }

    #[test]
    fn decodes_entities_with_mapping() {
        let page = parse_html("<p>Rs&nbsp;100</p>", "u");
        let ts = page.text_stream();
        assert_eq!(ts.text, "Rs\u{00A0}100");
        assert_eq!(ts.starts, vec![3, 4, 5, 11, 12, 13]);
        assert_eq!(ts.ends, vec![4, 5, 11, 12, 13, 14]);
    }

    #[test]
    fn entity_table() {
        let page = parse_html("&amp;&lt;&gt;&quot;&apos;&#65;&#x42;&bogus;&amp", "u");
        assert_eq!(page.text_stream().text, "&<>\"'AB&bogus;&amp");
    }

    #[test]
    fn no_text_nodes() {
        let page = parse_html("<br><hr><!-- x -->", "u");
        assert!(page.text_stream().text.is_empty());
        assert!(page.text_stream().starts.is_empty());
    }

    #[test]
    fn rebuild_matches_parse() {
        let page = parse_html("<p>x &amp; y</p><ul><li>z", "u");
        assert_eq!(&build_text_stream(&page), page.text_stream());
    }

    #[test]
    fn multibyte_offsets_are_chars() {
        let page = parse_html("<i>é</i>ü", "u");
        assert_eq!(page.len(), 9);
        assert_eq!(page.text_stream().starts, vec![3, 8]);
        assert_eq!(page.slice(Span::new(3, 4)), "é");
    }

    #[test]
    fn paths() {
        let page = parse_html("<ul><li/><li/></ul>", "u");
        let second = page.nodes().iter().rposition(|n| n.name == "li").unwrap();
        assert_eq!(
            page.path_to(second),
            vec![(ROOT_NAME.to_string(), 0), ("ul".to_string(), 0), ("li".to_string(), 1)]
        );
        assert_eq!(page.path_to(page.root()), vec![(ROOT_NAME.to_string(), 0)]);
    }
}
