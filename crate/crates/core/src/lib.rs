//! Sparse collaborative-filtering models and a benchmark harness for top-K
//! recommendation under large-data constraints.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod report;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
pub use sparse::{sparse_topk_product, CsrMatrix, InteractionMatrix, SparseWeights};
