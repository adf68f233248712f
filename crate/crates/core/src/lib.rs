//! Visual-textual entailment (VTE) workbench.
//!
//! The crate covers the full life cycle of a corrected VTE corpus with
//! natural-language explanations:
//!
//! - [`corpus`]: instance records, split ingestion, correction merging,
//!   explanation attachment and split statistics.
//! - [`qc`]: crowd-annotation quality control: batch assembly with a hidden
//!   trusted pair, submission validation, three-way label aggregation and
//!   annotation reports.
//! - [`features`]: region feature stores, synthetic features and token
//!   embedding tables.
//! - [`model`]: the bottom-up/top-down attention classifier.
//! - [`explainer`]: explanation vocabulary, the LSTM explanation decoder,
//!   beam search and the explanation-to-label classifier.
//! - [`synthetic`]: seeded toy corpora for desk-scale experiments.
//! - [`train`]: training with early stopping, metrics, the alpha sweep,
//!   the evaluation matrix and the relevance audit harness.
//!
//! All numerics run at 64-bit precision with hand-written backpropagation so
//! that every gradient can be checked against finite differences.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod explainer;
pub mod features;
pub mod model;
pub mod nn;
pub mod qc;
pub mod synthetic;
pub mod text;
pub mod train;

pub use error::{Error, Result};
