//! Cooperative data-story engine.
//!
//! Users supply keyframe data facts over a tabular dataset; the engine embeds
//! facts into a vector space and fills the gap between two succeeding
//! keyframes with intermediate facts found by a constrained Monte-Carlo tree
//! search.

pub mod caption;
pub mod config;
pub mod data;
pub mod embed;
pub mod error;
pub mod fact;
pub mod interp;
pub mod story;
mod util;

pub use error::{DataError, EmbedError, FactError, InterpolationError, ParseError};
pub use fact::{Aggregation, DataFact, FactType, Filter, Measure, Meta, Subspace};
