//! Pieces (regions of one page) and canonically ordered piece sets.

use std::cmp::Ordering;
use std::fmt;

use crate::algebra::AlgebraError;
use crate::html::{HtmlError, NodeId, Page, Span};

/// A contiguous region of a page. Equality is page identity plus span; the
/// anchor is informational.
#[derive(Clone, Copy)]
pub struct Piece<'p> {
    page: &'p Page,
    span: Span,
    anchor: Option<NodeId>,
}

impl<'p> Piece<'p> {
    /// A raw region with no element anchor.
    pub fn new(page: &'p Page, span: Span) -> Self {
        assert!(span.end <= page.len(), "span {span} outside page of length {}", page.len());
        Piece { page, span, anchor: None }
    }

    /// The piece covering a whole node.
    pub fn of_node(page: &'p Page, id: NodeId) -> Self {
        Piece { page, span: page.node(id).span, anchor: Some(id) }
    }

    pub fn page(&self) -> &'p Page {
        self.page
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn start(&self) -> usize {
        self.span.start
    }

    pub fn end(&self) -> usize {
        self.span.end
    }

    pub fn anchor(&self) -> Option<NodeId> {
        self.anchor
    }

    /// Verbatim source of the region, markup included.
    pub fn raw(&self) -> &'p str {
        self.page.slice(self.span)
    }

    /// Tag-stripped, entity-decoded text of the region.
    pub fn text(&self) -> &'p str {
        self.page.stripped(self.span)
    }

    /// Path from the document root to the anchored element.
    pub fn node_path(&self) -> Result<Vec<(String, usize)>, HtmlError> {
        let id = self.anchor.ok_or(HtmlError::NoAnchor)?;
        Ok(self.page.path_to(id))
    }

    pub fn same_page(&self, other: &Piece<'_>) -> bool {
        std::ptr::eq(self.page, other.page)
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.span
            .start
            .cmp(&other.span.start)
            .then(other.span.end.cmp(&self.span.end))
    }
}

/// The raw text of a piece.
pub fn piece_text<'p>(piece: &Piece<'p>) -> &'p str {
    piece.raw()
}

/// The root-to-node path of an element-anchored piece.
pub fn node_path(piece: &Piece<'_>) -> Result<Vec<(String, usize)>, HtmlError> {
    piece.node_path()
}

impl PartialEq for Piece<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.same_page(other) && self.span == other.span
    }
}

impl Eq for Piece<'_> {}

impl fmt::Debug for Piece<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Piece{}{:?}", self.span, self.raw())
    }
}

/// An ordered, duplicate-free collection of pieces from one page.
///
/// Pieces are kept sorted by start ascending, then end descending, so an
/// enclosing region always precedes the regions it contains.
#[derive(Clone)]
pub struct PieceSet<'p> {
    page: &'p Page,
    pieces: Vec<Piece<'p>>,
}

impl<'p> PieceSet<'p> {
    pub fn empty(page: &'p Page) -> Self {
        PieceSet { page, pieces: Vec::new() }
    }

    /// Builds a canonical set; fails if any piece belongs to another page.
    pub fn new(page: &'p Page, pieces: Vec<Piece<'p>>) -> Result<Self, AlgebraError> {
        if pieces.iter().any(|p| !std::ptr::eq(p.page, page)) {
            return Err(AlgebraError::PageMismatch);
        }
        Ok(Self::from_pieces(page, pieces))
    }

    /// Canonicalizes pieces already known to be on `page`. When two pieces
    /// share a span the first one seen is kept.
    pub(crate) fn from_pieces(page: &'p Page, mut pieces: Vec<Piece<'p>>) -> Self {
        pieces.sort_by(Piece::canonical_cmp);
        pieces.dedup_by(|b, a| a.span == b.span);
        PieceSet { page, pieces }
    }

    pub fn singleton(piece: Piece<'p>) -> Self {
        PieceSet { page: piece.page, pieces: vec![piece] }
    }

    pub fn page(&self) -> &'p Page {
        self.page
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Piece<'p>> {
        self.pieces.iter()
    }

    pub fn pieces(&self) -> &[Piece<'p>] {
        &self.pieces
    }

    pub fn spans(&self) -> Vec<Span> {
        self.pieces.iter().map(|p| p.span).collect()
    }

    pub fn texts(&self) -> Vec<&'p str> {
        self.pieces.iter().map(|p| p.text()).collect()
    }

    pub(crate) fn check_same_page(&self, other: &PieceSet<'_>) -> Result<(), AlgebraError> {
        if std::ptr::eq(self.page, other.page) {
            Ok(())
        } else {
            Err(AlgebraError::PageMismatch)
        }
    }

    /// Keeps the pieces for which `keep` holds; order is preserved.
    pub(crate) fn select(&self, mut keep: impl FnMut(&Piece<'p>) -> bool) -> Self {
        PieceSet { page: self.page, pieces: self.pieces.iter().filter(|p| keep(p)).copied().collect() }
    }
}

impl<'p> IntoIterator for PieceSet<'p> {
    type Item = Piece<'p>;
    type IntoIter = std::vec::IntoIter<Piece<'p>>;

    fn into_iter(self) -> Self::IntoIter {
        self.pieces.into_iter()
    }
}

impl<'a, 'p> IntoIterator for &'a PieceSet<'p> {
    type Item = &'a Piece<'p>;
    type IntoIter = std::slice::Iter<'a, Piece<'p>>;

    fn into_iter(self) -> Self::IntoIter {
        self.pieces.iter()
    }
}

impl PartialEq for PieceSet<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.page, other.page) && self.pieces == other.pieces
    }
}

impl fmt::Debug for PieceSet<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.pieces.iter()).finish()
    }
}

/// The region a search is confined to.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'p> {
    Page(&'p Page),
    Piece(Piece<'p>),
}

impl<'p> Scope<'p> {
    pub fn page(&self) -> &'p Page {
        match self {
            Scope::Page(page) => page,
            Scope::Piece(piece) => piece.page(),
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Scope::Page(page) => Span::new(0, page.len()),
            Scope::Piece(piece) => piece.span(),
        }
    }
}

impl<'p> From<&'p Page> for Scope<'p> {
    fn from(page: &'p Page) -> Self {
        Scope::Page(page)
    }
}

impl<'p> From<Piece<'p>> for Scope<'p> {
    fn from(piece: Piece<'p>) -> Self {
        Scope::Piece(piece)
    }
}
