//! Mutation benchmarking for taint-flow analyzers of SmartThings-style apps.
//!
//! The crate generates security-labeled mutants of single-file smart-home
//! apps with thirteen sensitivity-targeted operators (flow, path and context
//! families), runs analysis tools over the mutants, and scores the tools
//! with precision/recall per operator, per sensitivity category and overall.

pub mod app_model;
pub mod span;

pub use app_model::{AppModel, ParseError, SinkKind};
pub use span::Span;
