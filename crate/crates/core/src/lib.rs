//! Listwise rank aggregation for semantic top-K queries.
//!
//! A listwise oracle orders up to `L` documents per call. The operators in
//! [`algorithms`] combine many such partial rankings into a top-K answer or a
//! full sort, [`costmodel`] predicts how many calls they need, [`optimizer`]
//! picks the cheapest plan meeting a recall target and [`simulator`] checks
//! the models by Monte Carlo.

pub mod algorithms;
pub mod costmodel;
pub mod domain;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod plan;
pub mod simulator;

pub use domain::{Corpus, DocId, Document, Query, Ranking, TopKResult};
pub use error::{ListkError, Result};
pub use oracle::{Oracle, OracleConfig, OracleStats};
