//! Slow-fast tabletop layout synthesis.
//!
//! The pipeline runs in two stages with a closed self-validation loop:
//! a slow system reasons out an expected-scene description, a fast system
//! turns it into discrete lattice coordinates and topological relations,
//! a genetic search grounds them into continuous coordinates, and an
//! adaptive relation library scores, validates, and conservatively widens
//! constraints until the layout passes or the sampling budget runs out.
//! Everything LLM-facing goes through a record/replay gateway, so complete
//! runs are reproducible offline.

pub mod error;
pub mod fast;
pub mod gateway;
pub mod geometry;
pub mod grounding;
pub mod metrics;
pub mod relations;
pub mod scene;
pub mod slow;
pub mod validation;

pub use error::{Error, Result};
