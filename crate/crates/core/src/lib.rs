//! Static unit-testability analysis of JVM bytecode.
//!
//! Methods are classified as trivial, testable or not testable. A method is
//! not testable when it transitively reaches non-deterministic behavior that a
//! test cannot replace with a mock, or when it has no effect a test could
//! assert on. Every reported issue is backed by a witness; silence is not a
//! guarantee.

pub mod classfile;
pub mod classify;
pub mod flow;
pub mod hierarchy;
pub mod knowledge;
pub mod metrics;
pub mod mockability;
pub mod observability;
pub mod pipeline;
pub mod treemap;

pub use pipeline::{Analysis, AnalysisError};
