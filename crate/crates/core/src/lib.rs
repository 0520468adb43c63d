//! Classified-ads harvesting: a lenient HTML model, the markup algebra over
//! page regions, declarative extraction rules, fault-tolerant fetch
//! combinators, and the harvest / match / notify pipeline around a small
//! durable datastore.

pub mod algebra;
pub mod clock;
pub mod config;
pub mod datefmt;
pub mod fetch;
pub mod harvest;
pub mod html;
pub mod notify;
pub mod piece;
pub mod rules;
pub mod store;

pub use algebra::{AlgebraError, Hierarchical, Positional, Regional, SeqPattern};
pub use html::{parse_html, Page, Span};
pub use piece::{Piece, PieceSet, Scope};
